#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vqc/corpus.h"

namespace vqc {

//   pile            <img_0><img_1>... <query>
//   special_tokens  <img_st><img_0><img_end> <img_st><img_1><img_end> ... <query>
//   generic_label   The input image: <img_0> The input image: <img_1> ... <query>
//   ordinal_label   The first image: <img_0> The second image: <img_1> ... <query>
enum class InterleaveFormat { kPile, kSpecialTokens, kGenericLabel, kOrdinalLabel };

inline constexpr InterleaveFormat kDefaultFormat = InterleaveFormat::kOrdinalLabel;

std::string_view to_string(InterleaveFormat fmt);
InterleaveFormat interleave_format_from_string(std::string_view s);

inline constexpr std::size_t kMaxPromptImages = 4;

// 1 <= n_images <= 4.
std::string render_interleaved(std::size_t n_images, std::string_view query, InterleaveFormat fmt);

struct TokenBudget {
  std::int64_t tokens_per_image = 65;
  std::int64_t context_window = 4096;
  std::int64_t text_tokens = 0;
  std::int64_t n_images = 1;  // 1..8
};

struct BudgetCheck {
  bool fits = true;
  std::int64_t overflow_by = 0;  // > 0 iff !fits

  friend bool operator==(const BudgetCheck&, const BudgetCheck&) = default;
};

// fits iff n_images * tokens_per_image + text_tokens <= context_window.
BudgetCheck fits_context(const TokenBudget& budget);

using TokenCounter = std::function<std::size_t(std::string_view)>;

// Whitespace-separated token count.
std::size_t count_whitespace_tokens(std::string_view text);

struct SubsetCounts {
  std::size_t total = 0;
  std::size_t singles = 0;
  std::size_t pairs = 0;
  std::size_t triples = 0;
  std::size_t quads = 0;

  void add(std::size_t group_size);
  SubsetCounts& operator+=(const SubsetCounts& o);
  friend bool operator==(const SubsetCounts&, const SubsetCounts&) = default;
};

struct DatasetStats {
  std::vector<std::pair<std::string, SubsetCounts>> subsets;  // input order
  SubsetCounts all;
  std::size_t budget_overflows = 0;

  const SubsetCounts* find(std::string_view subset) const;
  std::string to_json() const;
};

// User text for an item: the interleaved query; MCQ items get lettered
// options appended.
std::string render_user_text(const ComparisonItem& item, InterleaveFormat fmt);
// Assistant text: the response, or "<letter>. <option>" for MCQ items.
std::string render_assistant_text(const ComparisonItem& item);

struct AssembleOptions {
  InterleaveFormat fmt = kDefaultFormat;
  // Samples whose image + text tokens exceed the window are counted in
  // DatasetStats::budget_overflows (they are still emitted).
  std::int64_t tokens_per_image = 65;
  std::int64_t context_window = 4096;
  TokenCounter counter = count_whitespace_tokens;
};

using NamedSubset = std::pair<std::string, std::vector<ComparisonItem>>;

struct AssembledDataset {
  std::vector<std::string> lines;  // one training record per item
  DatasetStats stats;
};

// Each record is {"id","subset","group_id","images","conversations","text"}
// where text is "User: <user text> Assistant: <response>". Duplicate subset
// names are rejected.
AssembledDataset assemble(const std::vector<NamedSubset>& subsets, const AssembleOptions& options);

DatasetStats dataset_stats(const std::vector<NamedSubset>& subsets);

}  // namespace vqc
