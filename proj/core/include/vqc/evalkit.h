#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vqc/assembler.h"
#include "vqc/chat.h"
#include "vqc/corpus.h"

namespace vqc {

enum class QuestionType { kYesOrNo, kWhich, kWhat, kHow, kOthers };
enum class Split { kDev, kTest };

std::string_view to_string(QuestionType t);
std::string_view to_string(Split s);
QuestionType question_type_from_string(std::string_view s);
Split split_from_string(std::string_view s);

struct MCQRecord {
  std::string id;
  ImageGroup group;  // single image allowed
  std::string question;
  std::vector<std::string> options;  // 2..4
  std::optional<int> answer_index;   // absent until a keys file is merged
  QuestionType qtype = QuestionType::kOthers;
  Split split = Split::kDev;
  std::string category;  // optional free tag, e.g. a concern dimension

  void validate() const;
};

struct BenchDefinition {
  std::string name;
  std::vector<MCQRecord> records;

  std::vector<const MCQRecord*> split_records(Split split) const;
  std::size_t split_size(Split split) const;
  // Record invariants, unique ids, and for name == "micbench" the
  // 1004 dev / 996 test split sizes.
  void validate() const;
};

inline constexpr std::size_t kMicbenchDev = 1004;
inline constexpr std::size_t kMicbenchTest = 996;

// Structural checks against the MICBench composition: split
// sizes, test-split question types (yes_or_no 220 / which 594 / others 182
// with what and how folded into others), test group sizes (three 503 /
// four 493), and the overall which / yes_or_no / others mix within 2
// points of 60 / 22 / 18 percent. Returns one message per violation.
std::vector<std::string> micbench_shape_violations(const BenchDefinition& bench);

// Bench file: one record per line
//   {"id","members":[...],"question","options":[...],"answer_index","qtype","split","category"}
// Keys file (optional): {"id","answer_index"} per line, overriding the bench.
BenchDefinition load_bench(const std::string& name, const std::string& path,
                           const std::string& keys_path = "");
void save_bench(const BenchDefinition& bench, const std::string& path);

std::string to_json_line(const MCQRecord& record);
MCQRecord mcq_record_from_json_line(std::string_view line, std::size_t line_no = 0);

// Option index chosen by a free-form answer, by precedence:
//  1. the first standalone option letter: "(B)", a sentence-leading "B." /
//     "B)" / "B:" / bare "B", or "answer: B" / "answer is B";
//  2. the single option whose text appears as whole words (case-insensitive);
//  3. unresolved (nullopt).
std::optional<std::size_t> extract_choice(std::string_view response,
                                          const std::vector<std::string>& options);

// Prompt text for a record, before interleaving.
std::string render_mcq_query(const MCQRecord& record);

struct McqResponse {
  std::string record_id;
  std::optional<std::string> text;  // nullopt: client failed or refused
};

// One response per record of the split, in record order.
std::vector<McqResponse> run_mcq(ChatClient& client, const BenchDefinition& bench,
                                 InterleaveFormat fmt, Split split, const CallOptions& options);

struct Bucket {
  std::size_t correct = 0;
  std::size_t count = 0;
  double accuracy() const { return count ? static_cast<double>(correct) / count : 0.0; }
};

struct AccuracyReport {
  double overall = 0.0;
  std::size_t n_correct = 0;
  std::size_t n_total = 0;
  std::size_t n_unresolved = 0;
  std::map<std::string, Bucket> by_qtype;
  std::map<std::size_t, Bucket> by_group_size;
  std::map<std::string, Bucket> by_category;

  std::string to_json() const;
};

struct ScoreOptions {
  // Report what/how under "others" (MICBench columns).
  bool fold_what_how = false;
};

// Unresolved responses count as incorrect. Response count (and ids) must
// match the split's records; every record needs an answer key.
AccuracyReport score_mcq(const std::vector<McqResponse>& responses, const BenchDefinition& bench,
                         Split split, const ScoreOptions& options = {});

// Expected accuracy of uniform guessing: mean of 1/|options|.
double random_baseline(const BenchDefinition& bench, Split split);

// ---------------------------------------------------------------------------

struct JudgeScores {
  int completeness = 0;
  int precision = 0;
  int relevance = 0;
  bool flagged = false;  // judge never produced a valid score triple

  friend bool operator==(const JudgeScores&, const JudgeScores&) = default;
};

struct JudgeInput {
  std::string question;
  std::string golden;
  std::string response;
};

// The fixed rubric; pinned by a golden-file test.
std::string judge_system_prompt();
std::string render_judge_prompt(const JudgeInput& input);

// Exactly three integers, each 0..2, in completeness/precision/relevance
// order. Anything else is nullopt.
std::optional<JudgeScores> parse_judge_scores(std::string_view text);

// Malformed judge output is re-asked up to options.retry.max_attempts times
// in total, then scored {0,0,0} and flagged.
std::vector<JudgeScores> judge_responses(ChatClient& judge, const std::vector<JudgeInput>& inputs,
                                         const CallOptions& options);

struct DimensionAggregate {
  double p0 = 0.0, p1 = 0.0, p2 = 0.0;
  double score = 0.0;  // p1 + 2 * p2

  static DimensionAggregate from_frequencies(double p0, double p1, double p2);
};

struct JudgeAggregate {
  DimensionAggregate completeness, precision, relevance;
  double sum = 0.0;
  std::size_t n = 0;
  std::size_t flagged = 0;

  std::string to_json() const;
};

JudgeAggregate aggregate_judge(const std::vector<JudgeScores>& scores);

}  // namespace vqc
