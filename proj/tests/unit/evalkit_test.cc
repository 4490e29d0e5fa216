#include <gtest/gtest.h>

#include <json.hpp>

#include "oracles/micbench_fixture.h"
#include "unit/test_util.h"
#include "vqc/error.h"
#include "vqc/evalkit.h"

namespace vqc {
namespace {

using testing::golden_path;
using testing::read_file;
using testing::TempDir;

const std::vector<std::string> kOpts{"The first image", "The second image", "The third image", "The fourth image"};

TEST(ExtractChoice, LetterForms) {
  EXPECT_EQ(extract_choice("B", kOpts), 1u);
  EXPECT_EQ(extract_choice("(C)", kOpts), 2u);
  EXPECT_EQ(extract_choice("I pick (D) because it is sharp.", kOpts), 3u);
  EXPECT_EQ(extract_choice("A. The first image", kOpts), 0u);
  EXPECT_EQ(extract_choice("B) second", kOpts), 1u);
  EXPECT_EQ(extract_choice("The answer is C", kOpts), 2u);
  EXPECT_EQ(extract_choice("Answer: D", kOpts), 3u);
  EXPECT_EQ(extract_choice("Looking closely. B.", kOpts), 1u);
}

TEST(ExtractChoice, IgnoresLettersInsideWordsAndOutOfRange) {
  EXPECT_EQ(extract_choice("A dog sits in the second image", kOpts), 1u);
  EXPECT_EQ(extract_choice("E", kOpts), std::nullopt);
  EXPECT_EQ(extract_choice("C", {"Yes", "No"}), std::nullopt);
}

TEST(ExtractChoice, OptionTextFallback) {
  EXPECT_EQ(extract_choice("I would say the third image is the worst.", kOpts), 2u);
  EXPECT_EQ(extract_choice("yes, clearly", {"Yes", "No"}), 0u);
  // Two options mentioned: ambiguous.
  EXPECT_EQ(extract_choice("The first image beats the second image", kOpts), std::nullopt);
  EXPECT_EQ(extract_choice("no idea at all", {"Yes", "Maybe"}), std::nullopt);
  // "yesterday" does not contain the word "yes".
  EXPECT_EQ(extract_choice("yesterday", {"Yes", "No"}), std::nullopt);
}

TEST(McqRecord, Validation) {
  auto r = oracle::micbench_record("x", Split::kTest, QuestionType::kYesOrNo, 3, 0);
  EXPECT_NO_THROW(r.validate());
  r.options.push_back("Maybe");
  EXPECT_THROW(r.validate(), Error);
  auto w = oracle::micbench_record("y", Split::kTest, QuestionType::kWhich, 4, 0);
  w.answer_index = 4;
  EXPECT_THROW(w.validate(), Error);
}

TEST(Micbench, ConformingFixtureHasNoViolations) {
  const BenchDefinition b = oracle::micbench_fixture();
  EXPECT_NO_THROW(b.validate());
  const auto v = micbench_shape_violations(b);
  EXPECT_TRUE(v.empty()) << v.front();
}

TEST(Micbench, NonConformingFixtureIsRejected) {
  BenchDefinition b = oracle::micbench_fixture();
  // Relabel one test which-question as yes_or_no-sized others question.
  for (auto& r : b.records)
    if (r.split == Split::kTest && r.qtype == QuestionType::kWhich) {
      r.qtype = QuestionType::kOthers;
      break;
    }
  const auto v = micbench_shape_violations(b);
  EXPECT_EQ(v.size(), 2u);

  BenchDefinition short_dev = oracle::micbench_fixture();
  short_dev.records.pop_back();
  EXPECT_THROW(short_dev.validate(), Error);
  EXPECT_FALSE(micbench_shape_violations(short_dev).empty());
}

TEST(Micbench, LoadWithKeysFile) {
  TempDir dir;
  BenchDefinition b;
  b.name = "small";
  b.records.push_back(oracle::micbench_record("q1", Split::kTest, QuestionType::kWhich, 3, 0));
  b.records.push_back(oracle::micbench_record("q2", Split::kTest, QuestionType::kYesOrNo, 4, 1));
  auto unkeyed = b;
  for (auto& r : unkeyed.records) r.answer_index.reset();
  save_bench(unkeyed, dir.file("bench.jsonl"));
  testing::write_file(dir.file("keys.jsonl"), "{\"id\":\"q1\",\"answer_index\":2}\n{\"id\":\"q2\",\"answer_index\":1}\n");
  const BenchDefinition loaded = load_bench("small", dir.file("bench.jsonl"), dir.file("keys.jsonl"));
  ASSERT_EQ(loaded.records.size(), 2u);
  EXPECT_EQ(*loaded.records[0].answer_index, 2);
  EXPECT_EQ(loaded.records[1].options, b.records[1].options);
  testing::write_file(dir.file("bad_keys.jsonl"), "{\"id\":\"zz\",\"answer_index\":0}\n");
  EXPECT_THROW(load_bench("small", dir.file("bench.jsonl"), dir.file("bad_keys.jsonl")), Error);
}

TEST(Scoring, BreakdownsAreConsistentWithOverall) {
  const BenchDefinition b = oracle::micbench_fixture();
  // Answer correctly on every third record, with assorted phrasings.
  std::vector<McqResponse> responses;
  int k = 0;
  for (const auto* r : b.split_records(Split::kTest)) {
    const int pick = (k % 3 == 0) ? *r->answer_index : (*r->answer_index + 1) % static_cast<int>(r->options.size());
    std::string text = k % 2 ? std::string(1, char('A' + pick)) : "(" + std::string(1, char('A' + pick)) + ")";
    if (k % 11 == 0) text = "no idea";
    responses.push_back(McqResponse{r->id, k % 17 == 0 ? std::nullopt : std::optional<std::string>(text)});
    ++k;
  }
  for (bool fold : {false, true}) {
    const AccuracyReport rep = score_mcq(responses, b, Split::kTest, ScoreOptions{fold});
    EXPECT_EQ(rep.n_total, 996u);
    double wq = 0, wg = 0;
    std::size_t cq = 0, cg = 0;
    for (const auto& [name, bucket] : rep.by_qtype) {
      wq += bucket.accuracy() * bucket.count;
      cq += bucket.count;
    }
    for (const auto& [size, bucket] : rep.by_group_size) {
      wg += bucket.accuracy() * bucket.count;
      cg += bucket.count;
    }
    EXPECT_EQ(cq, rep.n_total);
    EXPECT_EQ(cg, rep.n_total);
    EXPECT_NEAR(wq / cq, rep.overall, 1e-9);
    EXPECT_NEAR(wg / cg, rep.overall, 1e-9);
    if (fold) {
      EXPECT_EQ(rep.by_qtype.count("what"), 0u);
      EXPECT_EQ(rep.by_qtype.at("others").count, 182u);
    }
  }
}

TEST(Scoring, Errors) {
  const BenchDefinition b = oracle::micbench_fixture();
  EXPECT_THROW(score_mcq({}, b, Split::kTest), Error);
  BenchDefinition one;
  one.records.push_back(oracle::micbench_record("q", Split::kTest, QuestionType::kWhich, 3, 0));
  EXPECT_THROW(score_mcq({McqResponse{"other", "A"}}, one, Split::kTest), Error);
  one.records[0].answer_index.reset();
  EXPECT_THROW(score_mcq({McqResponse{"q", "A"}}, one, Split::kTest), Error);
}

TEST(Scoring, RandomBaseline) {
  BenchDefinition four;
  for (int i = 0; i < 10; ++i)
    four.records.push_back(oracle::micbench_record("o" + std::to_string(i), Split::kTest, QuestionType::kOthers, 3, i));
  EXPECT_EQ(random_baseline(four, Split::kTest), 0.25);
  BenchDefinition yn;
  yn.records.push_back(oracle::micbench_record("y", Split::kTest, QuestionType::kYesOrNo, 3, 0));
  EXPECT_EQ(random_baseline(yn, Split::kTest), 0.5);
  EXPECT_THROW(random_baseline(yn, Split::kDev), Error);
}

TEST(RunMcq, ClientCapabilityFailuresScoreAsUnresolved) {
  BenchDefinition b;
  b.records.push_back(oracle::micbench_record("three", Split::kTest, QuestionType::kWhich, 3, 0));
  b.records.push_back(oracle::micbench_record("four", Split::kTest, QuestionType::kWhich, 4, 0));
  ConstantChatClient three_max("c", "A", 3);
  const auto responses = run_mcq(three_max, b, InterleaveFormat::kOrdinalLabel, Split::kTest, CallOptions{});
  ASSERT_EQ(responses.size(), 2u);
  EXPECT_TRUE(responses[0].text);
  EXPECT_FALSE(responses[1].text);
  const auto rep = score_mcq(responses, b, Split::kTest);
  EXPECT_EQ(rep.n_correct, 1u);
  EXPECT_EQ(rep.n_unresolved, 1u);
}

TEST(Judge, RubricMatchesGoldenFile) {
  EXPECT_EQ(judge_system_prompt(), read_file(golden_path("judge_rubric.txt")));
}

TEST(Judge, ParseScores) {
  EXPECT_EQ(parse_judge_scores("2 1 0"), (JudgeScores{2, 1, 0, false}));
  EXPECT_EQ(parse_judge_scores("Completeness: 2, Precision: 2, Relevance: 1"), (JudgeScores{2, 2, 1, false}));
  EXPECT_EQ(parse_judge_scores("2 1"), std::nullopt);
  EXPECT_EQ(parse_judge_scores("2 1 0 1"), std::nullopt);
  EXPECT_EQ(parse_judge_scores("3 1 0"), std::nullopt);
  EXPECT_EQ(parse_judge_scores("-1 1 0"), std::nullopt);
  EXPECT_EQ(parse_judge_scores("no scores"), std::nullopt);
}

TEST(Judge, RetriesMalformedThenFlags) {
  int calls = 0;
  FunctionChatClient judge("j", 0, [&](const std::string& system, const std::vector<Turn>& turns) -> std::string {
    EXPECT_EQ(system, judge_system_prompt());
    ++calls;
    if (turns[0].text.find("good answer") != std::string::npos) return calls % 2 ? "I think 2/2" : "2 2 2";
    return "cannot decide";
  });
  CallOptions opts;
  opts.retry.max_attempts = 3;
  opts.max_in_flight = 1;
  const auto scores = judge_responses(judge, {JudgeInput{"q", "g", "good answer"}, JudgeInput{"q", "g", "bad"}}, opts);
  ASSERT_EQ(scores.size(), 2u);
  EXPECT_EQ(scores[0], (JudgeScores{2, 2, 2, false}));
  EXPECT_EQ(scores[1], (JudgeScores{0, 0, 0, true}));
  EXPECT_EQ(calls, 2 + 3);
}

TEST(Judge, AggregateFromFrequencies) {
  const auto d = DimensionAggregate::from_frequencies(0.0409, 0.3182, 0.6409);
  EXPECT_NEAR(d.score, 1.60, 0.005);

  std::vector<JudgeScores> s;
  for (int i = 0; i < 4; ++i) s.push_back({2, 1, 2, false});
  s.push_back({0, 0, 1, true});
  const JudgeAggregate a = aggregate_judge(s);
  EXPECT_DOUBLE_EQ(a.completeness.p2, 0.8);
  EXPECT_DOUBLE_EQ(a.completeness.score, 1.6);
  EXPECT_DOUBLE_EQ(a.precision.score, 0.8);
  EXPECT_DOUBLE_EQ(a.relevance.score, 1.8);
  EXPECT_DOUBLE_EQ(a.sum, 4.2);
  EXPECT_EQ(a.flagged, 1u);
  EXPECT_THROW(aggregate_judge({}), Error);
  const auto j = nlohmann::json::parse(a.to_json());
  EXPECT_DOUBLE_EQ(j["sum"].get<double>(), 4.2);
}

}  // namespace
}  // namespace vqc
