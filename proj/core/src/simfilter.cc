#include "vqc/simfilter.h"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "vqc/error.h"

namespace vqc {

namespace {

double max_pair(const std::vector<const Embedding*>& vecs) {
  double best = -1.0;
  for (std::size_t i = 0; i < vecs.size(); ++i)
    for (std::size_t j = i + 1; j < vecs.size(); ++j)
      best = std::max(best, cosine_similarity(*vecs[i], *vecs[j]));
  return best;
}

// Groups per provider request when scoring a whole set.
constexpr std::size_t kGroupsPerChunk = 512;

}  // namespace

double max_pair_similarity(const std::vector<std::string>& texts, EmbeddingProvider& provider) {
  if (texts.size() < 2)
    throw Error(ErrorCode::kInvalidArgument, "similarity needs at least two descriptions");
  auto vecs = provider.embed(texts);
  check_embeddings(vecs, texts.size(), provider.dim(), provider.name());
  std::vector<const Embedding*> ptrs;
  for (const auto& v : vecs) ptrs.push_back(&v);
  return max_pair(ptrs);
}

double max_pair_similarity(const ImageGroup& group, const Corpus& descs,
                           EmbeddingProvider& provider) {
  std::vector<std::string> texts;
  for (const auto& m : group.members()) {
    const DescriptionRecord* d = descs.find_description(m.id);
    if (!d) throw Error(ErrorCode::kNotFound, "no description for image '" + m.id + "'");
    texts.push_back(d->text);
  }
  return max_pair_similarity(texts, provider);
}

std::vector<double> group_similarities(const std::vector<ImageGroup>& groups, const Corpus& descs,
                                       EmbeddingProvider& provider) {
  std::unordered_map<std::string, Embedding> by_id;
  std::vector<double> out;
  out.reserve(groups.size());

  for (std::size_t lo = 0; lo < groups.size(); lo += kGroupsPerChunk) {
    const std::size_t hi = std::min(groups.size(), lo + kGroupsPerChunk);
    std::vector<std::string> ids, texts;
    std::unordered_set<std::string> queued;
    for (std::size_t g = lo; g < hi; ++g) {
      for (const auto& m : groups[g].members()) {
        if (by_id.count(m.id) || !queued.insert(m.id).second) continue;
        const DescriptionRecord* d = descs.find_description(m.id);
        if (!d) throw Error(ErrorCode::kNotFound, "no description for image '" + m.id + "'");
        ids.push_back(m.id);
        texts.push_back(d->text);
      }
    }
    if (!texts.empty()) {
      std::vector<Embedding> vecs;
      try {
        vecs = provider.embed(texts);
        check_embeddings(vecs, texts.size(), provider.dim(), provider.name());
      } catch (const std::exception& e) {
        throw Error(ErrorCode::kClient, "embedding groups " + std::to_string(lo) + ".." +
                                            std::to_string(hi - 1) + " (first " +
                                            groups[lo].id() + "): " + e.what());
      }
      for (std::size_t i = 0; i < ids.size(); ++i) by_id.emplace(ids[i], std::move(vecs[i]));
    }
    for (std::size_t g = lo; g < hi; ++g) {
      std::vector<const Embedding*> ptrs;
      for (const auto& m : groups[g].members()) ptrs.push_back(&by_id.at(m.id));
      out.push_back(max_pair(ptrs));
    }
  }
  return out;
}

FilterReport filter_by_similarity(const GroupSet& groups, const std::vector<double>& similarities,
                                  double tau) {
  if (!(tau >= -1.0 && tau <= 1.0))
    throw Error(ErrorCode::kInvalidArgument, "tau must lie in [-1, 1]");
  if (similarities.size() != groups.groups.size())
    throw Error(ErrorCode::kInvalidArgument, "one similarity per group required");
  FilterReport r;
  r.tau = tau;
  r.kept.spec = groups.spec;
  r.removed.spec = groups.spec;
  r.max_similarity = similarities;
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> counts;  // size -> (kept, total)
  for (std::size_t i = 0; i < similarities.size(); ++i) {
    const ImageGroup& g = groups.groups[i];
    auto& c = counts[g.size()];
    ++c.second;
    if (similarities[i] > tau) {
      r.removed.groups.push_back(g);
    } else {
      r.kept.groups.push_back(g);
      ++c.first;
    }
  }
  for (const auto& [size, c] : counts)
    r.retention_by_size[size] = static_cast<double>(c.first) / static_cast<double>(c.second);
  return r;
}

FilterReport filter_groups(const GroupSet& groups, const Corpus& descs,
                           EmbeddingProvider& provider, double tau) {
  if (!(tau >= -1.0 && tau <= 1.0))
    throw Error(ErrorCode::kInvalidArgument, "tau must lie in [-1, 1]");
  return filter_by_similarity(groups, group_similarities(groups.groups, descs, provider), tau);
}

double calibrate_from_similarities(std::vector<double> sims, double target) {
  if (!(target > 0.0 && target <= 1.0))
    throw Error(ErrorCode::kInvalidArgument, "target retention must lie in (0, 1]");
  if (sims.size() < 2)
    throw Error(ErrorCode::kInvalidArgument, "calibration needs at least two groups");
  std::sort(sims.begin(), sims.end());
  if (sims.front() == sims.back())
    throw Error(ErrorCode::kDegenerate,
                "all similarities equal " + std::to_string(sims.front()) +
                    "; no threshold separates them, pass --tau explicitly");
  const std::size_t n = sims.size();
  const double want = target * static_cast<double>(n);

  // Candidate cuts keep sims[0..c) and sit between distinct values; c = n
  // keeps everything.
  std::size_t best = n;
  double best_gap = std::abs(static_cast<double>(n) - want);
  for (std::size_t c = 1; c < n; ++c) {
    if (sims[c - 1] == sims[c]) continue;
    const double gap = std::abs(static_cast<double>(c) - want);
    if (gap < best_gap) {
      best_gap = gap;
      best = c;
    }
  }
  if (best == n) return sims.back();
  return 0.5 * (sims[best - 1] + sims[best]);
}

double calibrate_threshold(const GroupSet& pair_groups, const Corpus& descs,
                           EmbeddingProvider& provider, double target_retention) {
  if (pair_groups.groups.size() < 2)
    throw Error(ErrorCode::kInvalidArgument, "calibration needs at least two groups");
  return calibrate_from_similarities(group_similarities(pair_groups.groups, descs, provider),
                                     target_retention);
}

}  // namespace vqc
