#include "vqc/grouper.h"

#include <algorithm>
#include <limits>
#include <unordered_set>

#include "vqc/error.h"
#include "vqc/rng.h"

namespace vqc {

namespace {

// Above this many combinations we never enumerate.
constexpr std::uint64_t kMaxEnumerated = 5'000'000;

// Enumerates k-subsets of [0, n) in lexicographic order.
std::vector<std::vector<std::size_t>> all_combinations(std::size_t n, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur(k);
  for (std::size_t i = 0; i < k; ++i) cur[i] = i;
  for (;;) {
    out.push_back(cur);
    std::size_t i = k;
    while (i > 0 && cur[i - 1] == n - k + (i - 1)) --i;
    if (i == 0) break;
    ++cur[i - 1];
    for (std::size_t j = i; j < k; ++j) cur[j] = cur[j - 1] + 1;
  }
  return out;
}

std::vector<std::vector<std::size_t>> sample_size(std::size_t n, std::size_t k,
                                                  std::size_t count, Rng& rng) {
  std::vector<std::vector<std::size_t>> out;
  if (count == 0) return out;
  const std::uint64_t total = combinations_available(n, k);
  if (count > total)
    throw Error(ErrorCode::kInfeasible,
                "requested " + std::to_string(count) + " groups of " + std::to_string(k) +
                    " from " + std::to_string(n) + " images; at most " +
                    std::to_string(total) + " are available");
  out.reserve(count);

  // Dense requests would spend most draws on collisions; pick from the full
  // enumeration instead.
  if (total <= kMaxEnumerated && count * 4 >= total) {
    auto combos = all_combinations(n, k);
    for (std::size_t idx : rng.choose(combos.size(), count)) {
      auto members = combos[idx];
      rng.shuffle(members);
      out.push_back(std::move(members));
    }
    return out;
  }

  std::unordered_set<std::string> seen;
  seen.reserve(count * 2);
  while (out.size() < count) {
    auto members = rng.choose(n, k);
    auto sorted = members;
    std::sort(sorted.begin(), sorted.end());
    std::string key(reinterpret_cast<const char*>(sorted.data()),
                    sorted.size() * sizeof(std::size_t));
    if (seen.insert(std::move(key)).second) out.push_back(std::move(members));
  }
  return out;
}

}  // namespace

std::size_t SamplingSpec::count_for(std::size_t group_size) const {
  switch (group_size) {
    case 2: return n_pairs;
    case 3: return n_triples;
    case 4: return n_quads;
    default: return 0;
  }
}

std::size_t GroupSet::count_of_size(std::size_t group_size) const {
  return static_cast<std::size_t>(std::count_if(
      groups.begin(), groups.end(), [&](const ImageGroup& g) { return g.size() == group_size; }));
}

std::uint64_t combinations_available(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    // r * (n - k + i) / i is exact at every step
    const std::uint64_t factor = n - k + i;
    if (r > kMax / factor) return kMax;
    r = r * factor / i;
  }
  return r;
}

GroupSet sample_groups(const std::vector<ImageRef>& images, const SamplingSpec& spec) {
  std::unordered_set<std::string> ids;
  for (const auto& img : images)
    if (!ids.insert(img.id).second)
      throw Error(ErrorCode::kDuplicate, "duplicate image id '" + img.id + "'");

  GroupSet set;
  set.spec = spec;
  set.groups.reserve(spec.n_pairs + spec.n_triples + spec.n_quads);
  for (std::size_t k = ImageGroup::kMinSize; k <= ImageGroup::kMaxSize; ++k) {
    Rng rng(mix_seed(spec.seed, k));
    for (const auto& idx : sample_size(images.size(), k, spec.count_for(k), rng)) {
      std::vector<ImageRef> members;
      members.reserve(k);
      for (std::size_t i : idx) members.push_back(images[i]);
      set.groups.push_back(ImageGroup::make(std::move(members)));
    }
  }
  return set;
}

GroupSet sample_groups(const std::vector<std::string>& image_ids, const SamplingSpec& spec) {
  std::vector<ImageRef> refs;
  refs.reserve(image_ids.size());
  for (const auto& id : image_ids) refs.push_back(ImageRef{id, ImageSource::kUnknown, {}});
  return sample_groups(refs, spec);
}

}  // namespace vqc
