#include "vqc/evalkit.h"

#include <cctype>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json_codec.h"
#include "vqc/error.h"
#include "vqc/jsonl.h"
#include "vqc/parallel.h"

namespace vqc {

std::string_view to_string(QuestionType t) {
  switch (t) {
    case QuestionType::kYesOrNo: return "yes_or_no";
    case QuestionType::kWhich: return "which";
    case QuestionType::kWhat: return "what";
    case QuestionType::kHow: return "how";
    case QuestionType::kOthers: return "others";
  }
  return "?";
}

std::string_view to_string(Split s) { return s == Split::kDev ? "dev" : "test"; }

QuestionType question_type_from_string(std::string_view s) {
  for (auto t : {QuestionType::kYesOrNo, QuestionType::kWhich, QuestionType::kWhat,
                 QuestionType::kHow, QuestionType::kOthers})
    if (to_string(t) == s) return t;
  throw Error(ErrorCode::kInvalidArgument, "unknown question type '" + std::string(s) + "'");
}

Split split_from_string(std::string_view s) {
  if (s == "dev") return Split::kDev;
  if (s == "test") return Split::kTest;
  throw Error(ErrorCode::kInvalidArgument, "unknown split '" + std::string(s) + "'");
}

void MCQRecord::validate() const {
  auto bad = [&](const std::string& what) {
    throw Error(ErrorCode::kInvalidArgument, "record '" + id + "': " + what);
  };
  if (id.empty()) throw Error(ErrorCode::kInvalidArgument, "MCQ record without id");
  if (group.size() == 0) bad("no images");
  if (options.size() < 2 || options.size() > 4) bad("needs 2-4 options");
  if (answer_index && (*answer_index < 0 || *answer_index >= static_cast<int>(options.size())))
    bad("answer_index out of range");
  if (qtype == QuestionType::kYesOrNo && options.size() != 2) bad("yes_or_no needs exactly 2 options");
}

std::vector<const MCQRecord*> BenchDefinition::split_records(Split split) const {
  std::vector<const MCQRecord*> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(&r);
  return out;
}

std::size_t BenchDefinition::split_size(Split split) const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.split == split;
  return n;
}

void BenchDefinition::validate() const {
  std::unordered_set<std::string> ids;
  for (const auto& r : records) {
    r.validate();
    if (!ids.insert(r.id).second)
      throw Error(ErrorCode::kDuplicate, "duplicate record id '" + r.id + "'");
  }
  if (name == "micbench") {
    const std::size_t dev = split_size(Split::kDev), test = split_size(Split::kTest);
    if (dev != kMicbenchDev || test != kMicbenchTest)
      throw Error(ErrorCode::kInvalidArgument,
                  "micbench expects 1004 dev / 996 test records, found " + std::to_string(dev) +
                      " / " + std::to_string(test));
  }
}

std::vector<std::string> micbench_shape_violations(const BenchDefinition& bench) {
  std::vector<std::string> v;
  auto expect = [&](const std::string& what, std::size_t got, std::size_t want) {
    if (got != want)
      v.push_back(what + ": expected " + std::to_string(want) + ", found " + std::to_string(got));
  };
  expect("dev records", bench.split_size(Split::kDev), kMicbenchDev);
  expect("test records", bench.split_size(Split::kTest), kMicbenchTest);

  std::size_t yn = 0, which = 0, others = 0, three = 0, four = 0;
  for (const auto* r : bench.split_records(Split::kTest)) {
    if (r->qtype == QuestionType::kYesOrNo) ++yn;
    else if (r->qtype == QuestionType::kWhich) ++which;
    else ++others;
    if (r->group.size() == 3) ++three;
    else if (r->group.size() == 4) ++four;
    else v.push_back("test record '" + r->id + "' has " + std::to_string(r->group.size()) + " images");
  }
  expect("test yes_or_no questions", yn, 220);
  expect("test which questions", which, 594);
  expect("test others questions", others, 182);
  expect("test groups of three", three, 503);
  expect("test groups of four", four, 493);

  if (!bench.records.empty()) {
    std::size_t a_yn = 0, a_which = 0, a_other = 0;
    for (const auto& r : bench.records) {
      if (r.qtype == QuestionType::kYesOrNo) ++a_yn;
      else if (r.qtype == QuestionType::kWhich) ++a_which;
      else ++a_other;
    }
    const double n = static_cast<double>(bench.records.size());
    auto near = [&](const std::string& what, std::size_t got, double pct) {
      const double share = 100.0 * static_cast<double>(got) / n;
      if (std::abs(share - pct) > 2.0) {
        std::ostringstream s;
        s << what << " share " << share << "% is more than 2 points from " << pct << "%";
        v.push_back(s.str());
      }
    };
    near("which", a_which, 60.0);
    near("yes_or_no", a_yn, 22.0);
    near("others", a_other, 18.0);
  }
  return v;
}

// ---------------------------------------------------------------------------

namespace {

MCQRecord record_from_json(const json& j) {
  MCQRecord r;
  r.id = j.at("id").get<std::string>();
  std::vector<ImageRef> members;
  for (const auto& m : j.at("members")) members.push_back(image_from_json(m));
  r.group = members.size() == 1 ? ImageGroup::single(std::move(members[0]))
                                : ImageGroup::make(std::move(members));
  r.question = j.at("question").get<std::string>();
  r.options = j.at("options").get<std::vector<std::string>>();
  if (auto it = j.find("answer_index"); it != j.end() && !it->is_null()) r.answer_index = it->get<int>();
  r.qtype = question_type_from_string(j.value("qtype", "others"));
  r.split = split_from_string(j.value("split", "dev"));
  if (auto it = j.find("category"); it != j.end() && !it->is_null()) r.category = it->get<std::string>();
  return r;
}

json record_to_json(const MCQRecord& r) {
  json j = group_to_json(r.group);
  j["id"] = r.id;
  j["question"] = r.question;
  j["options"] = r.options;
  j["answer_index"] = r.answer_index ? json(*r.answer_index) : json(nullptr);
  j["qtype"] = to_string(r.qtype);
  j["split"] = to_string(r.split);
  if (!r.category.empty()) j["category"] = r.category;
  return j;
}

template <typename F>
auto at_line(std::size_t n, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, "line " + std::to_string(n) + ": " + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kParse) throw;
    throw Error(ErrorCode::kParse, "line " + std::to_string(n) + ": " + e.what());
  }
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::string letter(std::size_t i) { return std::string(1, static_cast<char>('A' + i)); }

}  // namespace

BenchDefinition load_bench(const std::string& name, const std::string& path,
                           const std::string& keys_path) {
  BenchDefinition bench;
  bench.name = name;
  for_each_line(path, [&](std::string_view line, std::size_t n) {
    bench.records.push_back(at_line(n, [&] { return record_from_json(parse_json_line(line, n)); }));
  });
  if (!keys_path.empty()) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < bench.records.size(); ++i) index[bench.records[i].id] = i;
    for_each_line(keys_path, [&](std::string_view line, std::size_t n) {
      at_line(n, [&] {
        json j = parse_json_line(line, n);
        const std::string id = j.at("id").get<std::string>();
        auto it = index.find(id);
        if (it == index.end())
          throw Error(ErrorCode::kNotFound, "key for unknown record '" + id + "'");
        bench.records[it->second].answer_index = j.at("answer_index").get<int>();
        return 0;
      });
    });
  }
  bench.validate();
  return bench;
}

void save_bench(const BenchDefinition& bench, const std::string& path) {
  std::vector<std::string> lines;
  for (const auto& r : bench.records) lines.push_back(record_to_json(r).dump());
  write_lines(path, lines);
}

std::string to_json_line(const MCQRecord& record) {
  record.validate();
  return record_to_json(record).dump();
}

MCQRecord mcq_record_from_json_line(std::string_view line, std::size_t line_no) {
  return at_line(line_no, [&] {
    MCQRecord r = record_from_json(parse_json_line(line, line_no));
    r.validate();
    return r;
  });
}

std::optional<std::size_t> extract_choice(std::string_view response,
                                          const std::vector<std::string>& options) {
  const std::size_t n = std::min<std::size_t>(options.size(), 4);
  const std::string low = lower(response);

  for (std::size_t i = 0; i < response.size(); ++i) {
    const char c = response[i];
    if (c < 'A' || c >= static_cast<char>('A' + n)) continue;
    const char prev = i > 0 ? response[i - 1] : '\0';
    const char next = i + 1 < response.size() ? response[i + 1] : '\0';
    if (is_word_char(prev) || is_word_char(next)) continue;

    if (prev == '(' && next == ')') return static_cast<std::size_t>(c - 'A');

    // What precedes the letter, without trailing blanks.
    std::size_t b = i;
    while (b > 0 && (response[b - 1] == ' ' || response[b - 1] == '\t')) --b;
    const std::string_view before = std::string_view(low).substr(0, b);
    const bool sentence_start =
        b == 0 || response[b - 1] == '\n' || response[b - 1] == '.' || response[b - 1] == '!' ||
        response[b - 1] == '?';
    const bool closes = next == '\0' || next == '.' || next == ')' || next == ':' ||
                        next == ',' || next == '\n' || next == '\r';
    if (sentence_start && closes) return static_cast<std::size_t>(c - 'A');
    if (ends_with(before, "answer:") || ends_with(before, "answer is") ||
        ends_with(before, "answer is:") || ends_with(before, "option"))
      return static_cast<std::size_t>(c - 'A');
  }

  std::optional<std::size_t> found;
  for (std::size_t k = 0; k < options.size(); ++k) {
    const std::string needle = lower(trim(options[k]));
    if (needle.empty()) continue;
    bool hit = false;
    for (std::size_t pos = low.find(needle); pos != std::string::npos;
         pos = low.find(needle, pos + 1)) {
      const bool left = pos == 0 || !is_word_char(low[pos - 1]);
      const std::size_t end = pos + needle.size();
      const bool right = end >= low.size() || !is_word_char(low[end]);
      if (left && right) {
        hit = true;
        break;
      }
    }
    if (hit) {
      if (found) return std::nullopt;
      found = k;
    }
  }
  return found;
}

std::string render_mcq_query(const MCQRecord& record) {
  std::string q = record.question;
  for (std::size_t i = 0; i < record.options.size(); ++i)
    q += "\n" + letter(i) + ". " + record.options[i];
  q += "\nAnswer with the option's letter from the given choices directly.";
  return q;
}

std::vector<McqResponse> run_mcq(ChatClient& client, const BenchDefinition& bench,
                                 InterleaveFormat fmt, Split split, const CallOptions& options) {
  const auto records = bench.split_records(split);
  return bounded_map<McqResponse>(records.size(), options.max_in_flight, [&](std::size_t i) {
    const MCQRecord& r = *records[i];
    Turn turn{render_interleaved(r.group.size(), render_mcq_query(r), fmt), r.group.members()};
    CallResult res = ask(client, "", {turn}, options);
    return McqResponse{r.id, res.text};
  });
}

AccuracyReport score_mcq(const std::vector<McqResponse>& responses, const BenchDefinition& bench,
                         Split split, const ScoreOptions& options) {
  const auto records = bench.split_records(split);
  if (responses.size() != records.size())
    throw Error(ErrorCode::kInvalidArgument,
                std::to_string(responses.size()) + " responses for " +
                    std::to_string(records.size()) + " records");
  std::unordered_map<std::string, const McqResponse*> by_id;
  for (const auto& r : responses) by_id[r.record_id] = &r;

  AccuracyReport rep;
  for (const MCQRecord* rec : records) {
    auto it = by_id.find(rec->id);
    if (it == by_id.end())
      throw Error(ErrorCode::kInvalidArgument, "no response for record '" + rec->id + "'");
    if (!rec->answer_index)
      throw Error(ErrorCode::kInvalidArgument, "record '" + rec->id + "' has no answer key");
    std::optional<std::size_t> choice;
    if (it->second->text) choice = extract_choice(*it->second->text, rec->options);
    if (!choice) ++rep.n_unresolved;
    const bool ok = choice && *choice == static_cast<std::size_t>(*rec->answer_index);

    QuestionType t = rec->qtype;
    if (options.fold_what_how && (t == QuestionType::kWhat || t == QuestionType::kHow))
      t = QuestionType::kOthers;
    for (Bucket* b : {&rep.by_qtype[std::string(to_string(t))], &rep.by_group_size[rec->group.size()]}) {
      ++b->count;
      b->correct += ok;
    }
    if (!rec->category.empty()) {
      Bucket& b = rep.by_category[rec->category];
      ++b.count;
      b.correct += ok;
    }
    ++rep.n_total;
    rep.n_correct += ok;
  }
  rep.overall = rep.n_total ? static_cast<double>(rep.n_correct) / rep.n_total : 0.0;
  return rep;
}

double random_baseline(const BenchDefinition& bench, Split split) {
  const auto records = bench.split_records(split);
  if (records.empty()) throw Error(ErrorCode::kInvalidArgument, "split has no records");
  double sum = 0.0;
  for (const auto* r : records) sum += 1.0 / static_cast<double>(r->options.size());
  return sum / static_cast<double>(records.size());
}

std::string AccuracyReport::to_json() const {
  auto buckets = [](const auto& m) {
    json j = json::object();
    for (const auto& [k, b] : m) {
      std::string key;
      if constexpr (std::is_same_v<std::decay_t<decltype(k)>, std::string>) key = k;
      else key = std::to_string(k);
      j[key] = json{{"correct", b.correct}, {"count", b.count}, {"accuracy", b.accuracy()}};
    }
    return j;
  };
  json j{{"overall", overall},
         {"n_correct", n_correct},
         {"n_total", n_total},
         {"n_unresolved", n_unresolved},
         {"by_qtype", buckets(by_qtype)},
         {"by_group_size", buckets(by_group_size)}};
  if (!by_category.empty()) j["by_category"] = buckets(by_category);
  return j.dump(2);
}

// ---------------------------------------------------------------------------

std::string judge_system_prompt() {
  return "You are an impartial judge of image quality comparisons. You are given a question "
         "about a group of images, a golden answer written by an expert, and a candidate answer. "
         "Score the candidate against the golden answer on three dimensions, each with an "
         "integer from 0 to 2:\n"
         "Completeness: 2 if it covers all key points of the golden answer, 1 if it covers "
         "some of them, 0 if it covers none.\n"
         "Precision: 2 if it contains no statement that contradicts the golden answer, 1 if it "
         "contains minor contradictions, 0 if it contradicts the golden answer on key points.\n"
         "Relevance: 2 if it stays on the question, 1 if it partly drifts away, 0 if it is "
         "unrelated.\n"
         "Reply with the three integers only, separated by spaces, in the order completeness "
         "precision relevance.";
}

std::string render_judge_prompt(const JudgeInput& input) {
  return "Question: " + input.question + "\nGolden answer: " + input.golden +
         "\nCandidate answer: " + input.response + "\nScores:";
}

std::optional<JudgeScores> parse_judge_scores(std::string_view text) {
  std::vector<long> nums;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!std::isdigit(static_cast<unsigned char>(text[i])) || (i > 0 && is_word_char(text[i - 1]))) {
      ++i;
      continue;
    }
    const bool negative = i > 0 && text[i - 1] == '-';
    long v = 0;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
      v = std::min(v * 10 + (text[i] - '0'), 1000L);
      ++i;
    }
    // "3rd", "2x" and the like are not scores.
    if (i < text.size() && std::isalpha(static_cast<unsigned char>(text[i]))) continue;
    nums.push_back(negative ? -v : v);
  }
  if (nums.size() != 3) return std::nullopt;
  for (long v : nums)
    if (v < 0 || v > 2) return std::nullopt;
  return JudgeScores{static_cast<int>(nums[0]), static_cast<int>(nums[1]), static_cast<int>(nums[2]),
                     false};
}

std::vector<JudgeScores> judge_responses(ChatClient& judge, const std::vector<JudgeInput>& inputs,
                                         const CallOptions& options) {
  const std::string system = judge_system_prompt();
  return bounded_map<JudgeScores>(inputs.size(), options.max_in_flight, [&](std::size_t i) {
    const std::vector<Turn> turns{Turn{render_judge_prompt(inputs[i]), {}}};
    std::string key;
    if (options.cache) {
      key = ResponseCache::key(judge, system, turns);
      if (auto hit = options.cache->get(key))
        if (auto s = parse_judge_scores(*hit)) return *s;
    }
    // Re-asks bypass the cache so a malformed answer is not replayed.
    CallOptions once = options;
    once.cache = nullptr;
    once.retry.max_attempts = 1;
    const int attempts = std::max(1, options.retry.max_attempts);
    for (int a = 0; a < attempts; ++a) {
      CallResult res = ask(judge, system, turns, once);
      if (!res.text) continue;
      if (auto s = parse_judge_scores(*res.text)) {
        if (options.cache) options.cache->put(key, *res.text);
        return *s;
      }
    }
    return JudgeScores{0, 0, 0, true};
  });
}

DimensionAggregate DimensionAggregate::from_frequencies(double p0, double p1, double p2) {
  return DimensionAggregate{p0, p1, p2, p1 + 2.0 * p2};
}

JudgeAggregate aggregate_judge(const std::vector<JudgeScores>& scores) {
  if (scores.empty()) throw Error(ErrorCode::kInvalidArgument, "no judge scores to aggregate");
  std::size_t counts[3][3] = {};
  JudgeAggregate agg;
  for (const auto& s : scores) {
    const int dims[3] = {s.completeness, s.precision, s.relevance};
    for (int d = 0; d < 3; ++d) {
      if (dims[d] < 0 || dims[d] > 2)
        throw Error(ErrorCode::kInvalidArgument, "judge score outside [0, 2]");
      ++counts[d][dims[d]];
    }
    agg.flagged += s.flagged;
  }
  const double n = static_cast<double>(scores.size());
  DimensionAggregate* out[3] = {&agg.completeness, &agg.precision, &agg.relevance};
  for (int d = 0; d < 3; ++d)
    *out[d] = DimensionAggregate::from_frequencies(counts[d][0] / n, counts[d][1] / n, counts[d][2] / n);
  agg.sum = agg.completeness.score + agg.precision.score + agg.relevance.score;
  agg.n = scores.size();
  return agg;
}

std::string JudgeAggregate::to_json() const {
  auto dim = [](const DimensionAggregate& d) {
    return json{{"P0", d.p0}, {"P1", d.p1}, {"P2", d.p2}, {"score", d.score}};
  };
  json j{{"completeness", dim(completeness)},
         {"precision", dim(precision)},
         {"relevance", dim(relevance)},
         {"sum", sum},
         {"n", n},
         {"flagged", flagged}};
  return j.dump(2);
}

}  // namespace vqc
