#include <gtest/gtest.h>

#include <json.hpp>

#include "unit/test_util.h"
#include "vqc/assembler.h"
#include "vqc/error.h"

namespace vqc {
namespace {

using testing::golden_path;
using testing::img;
using testing::read_file;

ComparisonItem item_of(std::size_t n, ItemKind kind = ItemKind::kMergedGeneral) {
  std::vector<ImageRef> m;
  for (std::size_t i = 0; i < n; ++i) m.push_back(img("x" + std::to_string(i)));
  ComparisonItem item;
  item.group = n == 1 ? ImageGroup::single(m[0]) : ImageGroup::make(m);
  item.kind = kind;
  item.query = "Which image has better quality, and why?";
  item.response = "The first image is sharper.";
  if (kind == ItemKind::kSingleInstruct) item.provenance = Provenance::kExternal;
  return item;
}

TEST(Assembler, InterleaveFormatsMatchGoldenFiles) {
  const std::pair<InterleaveFormat, const char*> formats[] = {
      {InterleaveFormat::kPile, "pile"},
      {InterleaveFormat::kSpecialTokens, "special_tokens"},
      {InterleaveFormat::kGenericLabel, "generic_label"},
      {InterleaveFormat::kOrdinalLabel, "ordinal_label"},
  };
  for (const auto& [fmt, name] : formats) {
    EXPECT_EQ(to_string(fmt), name);
    EXPECT_EQ(interleave_format_from_string(name), fmt);
    for (std::size_t n = 1; n <= 4; ++n) {
      const std::string file = std::string(name) + "_" + std::to_string(n) + ".txt";
      EXPECT_EQ(render_interleaved(n, "<query>", fmt), read_file(golden_path(file))) << file;
    }
  }
  EXPECT_THROW(render_interleaved(0, "q", kDefaultFormat), Error);
  EXPECT_THROW(render_interleaved(5, "q", kDefaultFormat), Error);
  EXPECT_THROW(interleave_format_from_string("sideways"), Error);
}

TEST(Assembler, TokenBudgetArithmetic) {
  EXPECT_EQ(fits_context({1025, 2048, 0, 2}), (BudgetCheck{false, 2}));
  EXPECT_EQ(fits_context({1025, 4096, 0, 4}), (BudgetCheck{false, 4}));
  EXPECT_EQ(fits_context({65, 4096, 100, 4}), (BudgetCheck{true, 0}));
  EXPECT_EQ(fits_context({65, 4096, 4096 - 260, 4}), (BudgetCheck{true, 0}));
  EXPECT_EQ(fits_context({65, 4096, 4096 - 259, 4}), (BudgetCheck{false, 1}));
  EXPECT_THROW(fits_context({65, 4096, 0, 9}), Error);
  EXPECT_THROW(fits_context({0, 4096, 0, 1}), Error);
}

TEST(Assembler, McqRendering) {
  ComparisonItem mcq = item_of(2, ItemKind::kTeachMcq);
  mcq.query = "Which image is noisier?";
  mcq.options = std::vector<std::string>{"The first image", "The second image"};
  mcq.answer_index = 1;
  mcq.response = "The second image";
  EXPECT_EQ(render_user_text(mcq, InterleaveFormat::kOrdinalLabel),
            "The first image: <img_0> The second image: <img_1> Which image is noisier?\n"
            "A. The first image\nB. The second image\n"
            "Answer with the option's letter from the given choices directly.");
  EXPECT_EQ(render_assistant_text(mcq), "B. The second image");
}

TEST(Assembler, RecordsAndStats) {
  std::vector<ComparisonItem> merged{item_of(2), item_of(2), item_of(3), item_of(4)};
  std::vector<ComparisonItem> singles{item_of(1, ItemKind::kSingleInstruct)};
  const AssembledDataset ds = assemble({{"merge", merged}, {"single", singles}}, AssembleOptions{});
  ASSERT_EQ(ds.lines.size(), 5u);
  EXPECT_EQ(ds.stats.all.total, 5u);
  EXPECT_EQ(ds.stats.find("merge")->pairs, 2u);
  EXPECT_EQ(ds.stats.find("merge")->triples, 1u);
  EXPECT_EQ(ds.stats.find("single")->singles, 1u);
  EXPECT_EQ(ds.stats.find("nope"), nullptr);
  EXPECT_EQ(ds.stats.budget_overflows, 0u);

  const auto rec = nlohmann::json::parse(ds.lines[2]);
  EXPECT_EQ(rec["subset"], "merge");
  EXPECT_EQ(rec["images"].size(), 3u);
  EXPECT_EQ(rec["text"].get<std::string>().rfind("User: The first image: <img_0>", 0), 0u);
  EXPECT_NE(rec["text"].get<std::string>().find(" Assistant: The first image is sharper."), std::string::npos);
}

TEST(Assembler, OverflowsCountedWithUnreducedTokens) {
  AssembleOptions opts;
  opts.tokens_per_image = 1025;
  opts.context_window = 2048;
  const AssembledDataset ds = assemble({{"m", {item_of(2), item_of(3)}}}, opts);
  EXPECT_EQ(ds.stats.budget_overflows, 2u);
}

TEST(Assembler, DuplicateSubsetNames) {
  try {
    dataset_stats({{"a", {}}, {"a", {}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDuplicate);
  }
}

TEST(Assembler, CorpusScaleStatistics) {
  // 70K pairs, 20K triples, 10K quads.
  std::vector<ComparisonItem> items;
  items.reserve(100000);
  const auto p = item_of(2), t = item_of(3), q = item_of(4);
  items.insert(items.end(), 70000, p);
  items.insert(items.end(), 20000, t);
  items.insert(items.end(), 10000, q);
  const DatasetStats s = dataset_stats({{"merge2compare", items}});
  EXPECT_EQ(s.all, (SubsetCounts{100000, 0, 70000, 20000, 10000}));
}

TEST(Assembler, WhitespaceTokenCounter) {
  EXPECT_EQ(count_whitespace_tokens("  a b\tc\n d "), 4u);
  EXPECT_EQ(count_whitespace_tokens(""), 0u);
}

}  // namespace
}  // namespace vqc
