#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "unit/test_util.h"
#include "vqc/distill.h"
#include "vqc/error.h"

namespace vqc {
namespace {

using testing::golden_path;
using testing::img;
using testing::read_file;

ImageGroup group_of(std::size_t n) {
  std::vector<ImageRef> m;
  for (std::size_t i = 0; i < n; ++i) m.push_back(img("i" + std::to_string(i)));
  return ImageGroup::make(m);
}

TEST(Distill, OrdinalWords) {
  EXPECT_EQ(ordinal_word(0), "first");
  EXPECT_EQ(ordinal_word(3), "fourth");
  EXPECT_THROW(ordinal_word(4), Error);
}

TEST(Distill, MergePromptsMatchGoldenFiles) {
  EXPECT_EQ(render_merge_prompt({"<desc_0>", "<desc_1>"}), read_file(golden_path("merge_pair.txt")));
  EXPECT_EQ(render_merge_prompt({"<desc_0>", "<desc_1>", "<desc_2>"}), read_file(golden_path("merge_triple.txt")));
  EXPECT_EQ(render_merge_prompt({"<desc_0>", "<desc_1>", "<desc_2>", "<desc_3>"}),
            read_file(golden_path("merge_quad.txt")));
  EXPECT_THROW(render_merge_prompt({"only"}), Error);
}

TEST(Distill, TeachGeneralPromptBindsImages) {
  const auto g = group_of(3);
  const Turn t = render_teach_general_prompt(g);
  EXPECT_EQ(t.images, g.members());
  EXPECT_EQ(t.text,
            "The first image: <img_0> The second image: <img_1> The third image: <img_2> "
            "Please rank the quality of the images and justify your rankings.");
}

TEST(Distill, MergeCompareDropsFailures) {
  const Corpus corpus = testing::synthetic_corpus(6);
  std::vector<ImageGroup> groups;
  for (int i = 0; i < 5; ++i)
    groups.push_back(ImageGroup::make({*corpus.find_image("img" + std::to_string(i)),
                                       *corpus.find_image("img" + std::to_string(i + 1))}));
  FunctionChatClient client("stub", 4, [](const std::string&, const std::vector<Turn>& turns) -> std::string {
    if (turns[0].text.find("img") == std::string::npos && turns[0].text.find("poor") != std::string::npos &&
        turns[0].text.size() % 3 == 0)
      return " ";
    return "Merged: " + turns[0].text.substr(0, 20);
  });
  CallOptions opts;
  opts.retry.max_attempts = 1;
  const DistillResult r = merge_compare(client, groups, corpus, opts);
  EXPECT_EQ(r.stats.requested, 5u);
  EXPECT_EQ(r.stats.parsed_ok + r.stats.dropped_failed, 5u);
  EXPECT_EQ(r.items.size(), r.stats.parsed_ok);
  for (const auto& item : r.items) {
    EXPECT_EQ(item.kind, ItemKind::kMergedGeneral);
    EXPECT_EQ(item.provenance, Provenance::kMerge2Compare);
    EXPECT_EQ(item.query, "Which image has better quality, and why?");
    EXPECT_NO_THROW(item.validate());
  }
}

TEST(Distill, MergeCompareAllFail) {
  const Corpus corpus = testing::synthetic_corpus(3);
  FunctionChatClient client("down", 4, [](const auto&, const auto&) -> std::string {
    throw Error(ErrorCode::kClient, "down");
  });
  CallOptions opts;
  opts.retry.max_attempts = 1;
  const auto g = ImageGroup::make({*corpus.find_image("img0"), *corpus.find_image("img1")});
  const DistillResult r = merge_compare(client, {g, g}, corpus, opts);
  EXPECT_EQ(r.stats, (DistillStats{2, 0, 2}));
}

TEST(Distill, TeachGeneralRespectsClientCapability) {
  ConstantChatClient two("two", "ranked", 2);
  CallOptions opts;
  const DistillResult r = teach_general(two, {group_of(2), group_of(4)}, opts);
  EXPECT_EQ(r.stats, (DistillStats{2, 1, 1}));
  EXPECT_EQ(r.items[0].kind, ItemKind::kTeachGeneral);
  EXPECT_EQ(r.items[0].provenance, Provenance::kTeach2Compare);
}

TEST(Distill, ParseQaRecords) {
  const auto g = group_of(2);
  const std::string reply =
      "Here are some questions.\n"
      "ASPECT: noise\n"
      "Q: Which image has more noise?\n"
      "CORRECT: The second image\n"
      "WRONG: The first image\n"
      "\n"
      "Q: Is the first image sharper than the second?\n"
      "CORRECT: Yes\n"
      "WRONG: No\n"
      "Q: Which image is brighter?\n"
      "CORRECT: The first image\n"
      "WRONG: The first image\n"
      "Q: Which image has better color?\n"
      "CORRECT: The first image\n"
      "CORRECT: The second image\n"
      "WRONG: Neither\n"
      "Q: Missing answer?\n"
      "WRONG: x\n";
  const QAParse p = parse_qa_records(reply, g, default_aspects());
  EXPECT_EQ(p.records, 5u);
  EXPECT_EQ(p.malformed, 3u);
  ASSERT_EQ(p.items.size(), 2u);
  EXPECT_EQ(p.items[0].aspect, "noise");
  EXPECT_EQ(p.items[0].distractors, std::vector<std::string>{"The first image"});
  EXPECT_EQ(p.items[1].aspect, "sharpness") << "inferred from 'sharper'";
}

TEST(Distill, QaDistractorLimits) {
  const auto g = group_of(2);
  const auto ok = parse_qa_records("Q: q?\nCORRECT: a\nWRONG: b; c; d\n", g, default_aspects());
  EXPECT_EQ(ok.items.size(), 1u);
  const auto too_many = parse_qa_records("Q: q?\nCORRECT: a\nWRONG: b; c; d; e\n", g, default_aspects());
  EXPECT_EQ(too_many.items.size(), 0u);
  EXPECT_EQ(too_many.malformed, 1u);
  const auto dup = parse_qa_records("Q: q?\nCORRECT: a\nWRONG: b; B\n", g, default_aspects());
  EXPECT_EQ(dup.malformed, 1u);
}

TEST(Distill, GenerateQaCountsRecordsAndEmptyReplies) {
  FunctionChatClient teacher("t", 4, [](const std::string&, const std::vector<Turn>& turns) -> std::string {
    if (turns[0].images.size() == 3) return "Nothing useful.";
    return "Q: Which is clearer?\nCORRECT: The first image\nWRONG: The second image\n"
           "Q: broken\nCORRECT: a\n";
  });
  CallOptions opts;
  const QABatch b = generate_qa(teacher, {group_of(2), group_of(3), group_of(4)}, default_aspects(), opts);
  EXPECT_EQ(b.items.size(), 2u);
  EXPECT_EQ(b.stats, (DistillStats{5, 2, 3}));
}

TEST(Distill, QaToMcqIsSeededPermutation) {
  QAItem qa{group_of(3), "Which image is the blurriest?", "The third image",
            {"The first image", "The second image", "None of them"}, "sharpness"};
  const McqPair a = qa_to_mcq(qa, 5);
  const McqPair b = qa_to_mcq(qa, 5);
  EXPECT_EQ(a.mcq, b.mcq);
  ASSERT_TRUE(a.mcq.options && a.mcq.answer_index);
  EXPECT_EQ((*a.mcq.options)[*a.mcq.answer_index], qa.correct);
  auto sorted = *a.mcq.options;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::string> expected{qa.correct};
  expected.insert(expected.end(), qa.distractors.begin(), qa.distractors.end());
  std::sort(expected.begin(), expected.end());
  EXPECT_EQ(sorted, expected);
  EXPECT_NO_THROW(a.mcq.validate());
  EXPECT_EQ(a.direct.kind, ItemKind::kTeachQaDirect);
  EXPECT_EQ(a.direct.response, qa.correct);
  EXPECT_FALSE(a.direct.options);

  // Across seeds the correct answer lands in every position.
  std::set<int> positions;
  for (std::uint64_t s = 0; s < 64; ++s) positions.insert(*qa_to_mcq(qa, s).mcq.answer_index);
  EXPECT_EQ(positions.size(), 4u);
}

TEST(Distill, QaToMcqRejectsBadItems) {
  QAItem qa{group_of(2), "q", "a", {}, "other"};
  EXPECT_THROW(qa_to_mcq(qa, 1), Error);
  qa.distractors = {"a"};
  EXPECT_THROW(qa_to_mcq(qa, 1), Error);
}

}  // namespace
}  // namespace vqc
