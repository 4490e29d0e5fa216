#include "vqc/assembler.h"

#include <set>
#include <sstream>

#include <json.hpp>

#include "json_codec.h"
#include "vqc/distill.h"
#include "vqc/error.h"

namespace vqc {

std::string_view to_string(InterleaveFormat fmt) {
  switch (fmt) {
    case InterleaveFormat::kPile: return "pile";
    case InterleaveFormat::kSpecialTokens: return "special_tokens";
    case InterleaveFormat::kGenericLabel: return "generic_label";
    case InterleaveFormat::kOrdinalLabel: return "ordinal_label";
  }
  return "?";
}

InterleaveFormat interleave_format_from_string(std::string_view s) {
  for (auto f : {InterleaveFormat::kPile, InterleaveFormat::kSpecialTokens,
                 InterleaveFormat::kGenericLabel, InterleaveFormat::kOrdinalLabel})
    if (to_string(f) == s) return f;
  throw Error(ErrorCode::kInvalidArgument, "unknown interleave format '" + std::string(s) + "'");
}

std::string render_interleaved(std::size_t n_images, std::string_view query, InterleaveFormat fmt) {
  if (n_images < 1 || n_images > kMaxPromptImages)
    throw Error(ErrorCode::kInvalidArgument,
                "interleaved prompts take 1-4 images, got " + std::to_string(n_images));
  std::string out;
  for (std::size_t i = 0; i < n_images; ++i) {
    const std::string slot = "<img_" + std::to_string(i) + ">";
    switch (fmt) {
      case InterleaveFormat::kPile:
        out += slot;
        break;
      case InterleaveFormat::kSpecialTokens:
        out += "<img_st>" + slot + "<img_end> ";
        break;
      case InterleaveFormat::kGenericLabel:
        out += "The input image: " + slot + " ";
        break;
      case InterleaveFormat::kOrdinalLabel:
        out += "The " + std::string(ordinal_word(i)) + " image: " + slot + " ";
        break;
    }
  }
  if (fmt == InterleaveFormat::kPile) out += ' ';
  out += query;
  return out;
}

BudgetCheck fits_context(const TokenBudget& b) {
  if (b.tokens_per_image <= 0 || b.context_window <= 0 || b.text_tokens < 0 ||
      b.n_images < 1 || b.n_images > 8)
    throw Error(ErrorCode::kInvalidArgument, "invalid token budget");
  const std::int64_t need = b.n_images * b.tokens_per_image + b.text_tokens;
  if (need <= b.context_window) return {true, 0};
  return {false, need - b.context_window};
}

std::size_t count_whitespace_tokens(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::size_t n = 0;
  std::string tok;
  while (in >> tok) ++n;
  return n;
}

// ---------------------------------------------------------------------------

void SubsetCounts::add(std::size_t group_size) {
  ++total;
  switch (group_size) {
    case 1: ++singles; break;
    case 2: ++pairs; break;
    case 3: ++triples; break;
    case 4: ++quads; break;
    default: throw Error(ErrorCode::kInvalidArgument, "group size out of range");
  }
}

SubsetCounts& SubsetCounts::operator+=(const SubsetCounts& o) {
  total += o.total;
  singles += o.singles;
  pairs += o.pairs;
  triples += o.triples;
  quads += o.quads;
  return *this;
}

const SubsetCounts* DatasetStats::find(std::string_view subset) const {
  for (const auto& [name, c] : subsets)
    if (name == subset) return &c;
  return nullptr;
}

namespace {

json counts_json(const SubsetCounts& c) {
  return json{{"total", c.total},     {"singles", c.singles}, {"pairs", c.pairs},
              {"triples", c.triples}, {"quads", c.quads}};
}

std::string letter(std::size_t i) { return std::string(1, static_cast<char>('A' + i)); }

void check_unique_names(const std::vector<NamedSubset>& subsets) {
  std::set<std::string> names;
  for (const auto& [name, items] : subsets) {
    if (name.empty()) throw Error(ErrorCode::kInvalidArgument, "empty subset name");
    if (!names.insert(name).second)
      throw Error(ErrorCode::kDuplicate, "subset name '" + name + "' used twice");
  }
}

}  // namespace

std::string DatasetStats::to_json() const {
  json per = json::object();
  for (const auto& [name, c] : subsets) per[name] = counts_json(c);
  json j{{"subsets", std::move(per)}, {"all", counts_json(all)}, {"budget_overflows", budget_overflows}};
  return j.dump(2);
}

std::string render_user_text(const ComparisonItem& item, InterleaveFormat fmt) {
  std::string query = item.query;
  if (item.kind == ItemKind::kTeachMcq && item.options) {
    for (std::size_t i = 0; i < item.options->size(); ++i)
      query += "\n" + letter(i) + ". " + (*item.options)[i];
    query += "\nAnswer with the option's letter from the given choices directly.";
  }
  return render_interleaved(item.group.size(), query, fmt);
}

std::string render_assistant_text(const ComparisonItem& item) {
  if (item.kind == ItemKind::kTeachMcq && item.options && item.answer_index) {
    const auto idx = static_cast<std::size_t>(*item.answer_index);
    return letter(idx) + ". " + (*item.options)[idx];
  }
  return item.response;
}

DatasetStats dataset_stats(const std::vector<NamedSubset>& subsets) {
  check_unique_names(subsets);
  DatasetStats stats;
  for (const auto& [name, items] : subsets) {
    SubsetCounts c;
    for (const auto& item : items) c.add(item.group.size());
    stats.all += c;
    stats.subsets.emplace_back(name, c);
  }
  return stats;
}

AssembledDataset assemble(const std::vector<NamedSubset>& subsets, const AssembleOptions& options) {
  AssembledDataset out;
  out.stats = dataset_stats(subsets);
  for (const auto& [name, items] : subsets) {
    for (std::size_t i = 0; i < items.size(); ++i) {
      const ComparisonItem& item = items[i];
      item.validate();
      const std::string user = render_user_text(item, options.fmt);
      const std::string assistant = render_assistant_text(item);

      TokenBudget budget{options.tokens_per_image, options.context_window,
                         static_cast<std::int64_t>(options.counter(user) + options.counter(assistant)),
                         static_cast<std::int64_t>(item.group.size())};
      if (!fits_context(budget).fits) ++out.stats.budget_overflows;

      json images = json::array();
      for (const auto& m : item.group.members()) images.push_back(image_to_json(m));
      json rec{{"id", name + "-" + std::to_string(i)},
               {"subset", name},
               {"group_id", item.group.id()},
               {"images", std::move(images)},
               {"conversations",
                json::array({json{{"from", "user"}, {"value", user}},
                             json{{"from", "assistant"}, {"value", assistant}}})},
               {"text", "User: " + user + " Assistant: " + assistant}};
      out.lines.push_back(rec.dump());
    }
  }
  return out;
}

}  // namespace vqc
