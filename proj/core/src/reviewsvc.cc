#include "vqc/reviewsvc.h"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <functional>
#include <mutex>
#include <set>
#include <unordered_map>

#include "json_codec.h"
#include "vqc/error.h"
#include "vqc/jsonl.h"
#include "vqc/rng.h"

namespace vqc {

namespace fs = std::filesystem;

std::string_view to_string(Arm a) { return a == Arm::kKept ? "kept" : "removed"; }

Arm arm_from_string(std::string_view s) {
  if (s == "kept") return Arm::kKept;
  if (s == "removed") return Arm::kRemoved;
  throw Error(ErrorCode::kInvalidArgument, "unknown arm '" + std::string(s) + "'");
}

std::string_view to_string(CrossExamStatus s) {
  switch (s) {
    case CrossExamStatus::kPending: return "pending";
    case CrossExamStatus::kConfirmed: return "confirmed";
    case CrossExamStatus::kEdited: return "edited";
  }
  return "?";
}

namespace {

CrossExamStatus status_from_string(std::string_view s) {
  if (s == "pending") return CrossExamStatus::kPending;
  if (s == "confirmed") return CrossExamStatus::kConfirmed;
  if (s == "edited") return CrossExamStatus::kEdited;
  throw Error(ErrorCode::kParse, "unknown cross-exam status '" + std::string(s) + "'");
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json payload_to_json(const ReviewPayload& p) {
  json j = group_to_json(p.group);
  j["descriptions"] = p.descriptions;
  j["comparison"] = p.comparison;
  return j;
}

ReviewPayload payload_from_json(const json& j) {
  ReviewPayload p;
  p.group = group_from_json(j);
  p.descriptions = j.at("descriptions").get<std::vector<std::string>>();
  p.comparison = j.at("comparison").get<std::string>();
  return p;
}

json client_task_json(const ReviewTask& t) {
  json j{{"task_id", t.task_id}};
  j["payload"] = payload_to_json(t.payload);
  return j;
}

// Lines of an append-only log. A final line without its newline is a torn
// write from a crash and is dropped; any other bad line is an error.
void replay_log(const std::string& path, const std::function<void(const json&, std::size_t)>& fn) {
  if (!fs::exists(path)) return;
  const std::string text = read_text(path);
  std::size_t start = 0, line_no = 0;
  while (start < text.size()) {
    const std::size_t nl = text.find('\n', start);
    ++line_no;
    if (nl == std::string::npos) break;
    std::string_view line(text.data() + start, nl - start);
    start = nl + 1;
    if (is_blank(line)) continue;
    try {
      fn(parse_json_line(line, line_no), line_no);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParse, path + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

json verdict_json(const ReviewVerdict& v) {
  return json{{"task_id", v.task_id},
              {"reviewer_id", v.reviewer_id},
              {"correct", v.correct},
              {"timestamp", v.timestamp}};
}

ReviewVerdict verdict_from(const json& j) {
  ReviewVerdict v;
  v.task_id = j.at("task_id").get<std::string>();
  v.reviewer_id = j.at("reviewer_id").get<std::string>();
  v.correct = j.at("correct").get<bool>();
  v.timestamp = j.value("timestamp", "");
  if (v.task_id.empty() || is_blank(v.reviewer_id))
    throw Error(ErrorCode::kInvalidArgument, "verdict needs task_id and reviewer_id");
  return v;
}

}  // namespace

std::vector<ReviewPayload> payloads_for(const std::vector<ComparisonItem>& items,
                                        const Corpus& corpus) {
  std::vector<ReviewPayload> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    ReviewPayload p{item.group, {}, item.response};
    for (const auto& m : item.group.members()) {
      const DescriptionRecord* d = corpus.find_description(m.id);
      if (!d) throw Error(ErrorCode::kNotFound, "no description for image '" + m.id + "'");
      p.descriptions.push_back(d->text);
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::string task_to_client_json(const ReviewTask& task) { return client_task_json(task).dump(); }

std::vector<ReviewTask> create_review_batch(const std::string& batch,
                                            const std::vector<ReviewPayload>& kept,
                                            const std::vector<ReviewPayload>& removed,
                                            std::size_t k, std::uint64_t seed) {
  if (batch.empty() || batch.find_first_of("/\\?&# ") != std::string::npos)
    throw Error(ErrorCode::kInvalidArgument, "batch name '" + batch + "' is not a plain token");
  if (kept.size() < k || removed.size() < k)
    throw Error(ErrorCode::kInfeasible,
                "need " + std::to_string(k) + " items per arm but have " +
                    std::to_string(kept.size()) + " kept and " + std::to_string(removed.size()) +
                    " removed; largest feasible k is " +
                    std::to_string(std::min(kept.size(), removed.size())));
  struct Pick {
    const ReviewPayload* payload;
    Arm arm;
  };
  std::vector<Pick> picks;
  picks.reserve(2 * k);
  Rng kept_rng(mix_seed(seed, 1)), removed_rng(mix_seed(seed, 2)), mix_rng(mix_seed(seed, 3));
  for (std::size_t i : kept_rng.choose(kept.size(), k)) picks.push_back({&kept[i], Arm::kKept});
  for (std::size_t i : removed_rng.choose(removed.size(), k))
    picks.push_back({&removed[i], Arm::kRemoved});
  mix_rng.shuffle(picks);

  std::vector<ReviewTask> tasks;
  tasks.reserve(picks.size());
  const int width = std::max<int>(4, static_cast<int>(std::to_string(picks.size()).size()));
  for (std::size_t i = 0; i < picks.size(); ++i) {
    std::string pos = std::to_string(i);
    pos.insert(0, static_cast<std::size_t>(width) - std::min<std::size_t>(pos.size(), width), '0');
    tasks.push_back(ReviewTask{batch + "-" + pos, *picks[i].payload, picks[i].arm});
  }
  return tasks;
}

std::string to_json_line(const ReviewVerdict& v) { return verdict_json(v).dump(); }

ReviewVerdict verdict_from_json_line(std::string_view line, std::size_t line_no) {
  try {
    return verdict_from(parse_json_line(line, line_no));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": " + e.what());
  }
}

std::string CorrectnessReport::to_json() const {
  auto arm = [](const ArmRate& a) {
    return json{{"correct", a.correct}, {"total", a.total}, {"rate", a.rate()}};
  };
  return json{{"batch", batch},
              {"kept", arm(kept)},
              {"removed", arm(removed)},
              {"overall", arm(overall)}}
      .dump();
}

std::string to_json(const CrossExamTask& t) {
  json j{{"record", json::parse(to_json_line(t.record))},
         {"proposed_index", t.proposed_index},
         {"status", to_string(t.status)},
         {"final_index", t.final_index ? json(*t.final_index) : json(nullptr)},
         {"resolved_by", t.resolved_by}};
  return j.dump();
}

// ---------------------------------------------------------------------------

struct ReviewStore::State {
  std::map<std::string, std::vector<ReviewTask>> batches;
  std::unordered_map<std::string, std::pair<std::string, std::size_t>> task_index;
  // (task_id, reviewer_id) -> verdict
  std::map<std::pair<std::string, std::string>, ReviewVerdict> verdicts;
  std::map<std::string, CrossExamTask> cross;
  std::vector<std::string> cross_order;

  void index_batch(const std::string& name, std::vector<ReviewTask> tasks) {
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (!task_index.emplace(tasks[i].task_id, std::make_pair(name, i)).second)
        throw Error(ErrorCode::kDuplicate, "task id '" + tasks[i].task_id + "' already exists");
    }
    batches.emplace(name, std::move(tasks));
  }

  void apply_resolution(const std::string& id, const json& j) {
    auto it = cross.find(id);
    if (it == cross.end()) throw Error(ErrorCode::kNotFound, "unknown cross-exam task '" + id + "'");
    it->second.status = status_from_string(j.at("status").get<std::string>());
    it->second.final_index = j.at("final_index").get<int>();
    it->second.resolved_by = j.value("reviewer_id", "");
  }
};

ReviewStore::ReviewStore(std::string dir) : dir_(std::move(dir)), state_(std::make_unique<State>()) {
  std::error_code ec;
  fs::create_directories(fs::path(dir_) / "batches", ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir_ + ": " + ec.message());
  replay();
}

ReviewStore::~ReviewStore() = default;

void ReviewStore::replay() {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(fs::path(dir_) / "batches"))
    if (e.path().extension() == ".jsonl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    std::vector<ReviewTask> tasks;
    replay_log(f.string(), [&](const json& j, std::size_t) {
      tasks.push_back(ReviewTask{j.at("task_id").get<std::string>(), payload_from_json(j.at("payload")),
                                 arm_from_string(j.at("arm").get<std::string>())});
    });
    state_->index_batch(f.stem().string(), std::move(tasks));
  }

  replay_log((fs::path(dir_) / "verdicts.log").string(), [&](const json& j, std::size_t) {
    ReviewVerdict v = verdict_from(j);
    state_->verdicts.emplace(std::make_pair(v.task_id, v.reviewer_id), std::move(v));
  });

  replay_log((fs::path(dir_) / "crossexam.jsonl").string(), [&](const json& j, std::size_t n) {
    CrossExamTask t;
    t.record = mcq_record_from_json_line(j.at("record").dump(), n);
    t.proposed_index = j.at("proposed_index").get<int>();
    state_->cross_order.push_back(t.record.id);
    state_->cross.emplace(t.record.id, std::move(t));
  });
  replay_log((fs::path(dir_) / "crossexam.log").string(), [&](const json& j, std::size_t) {
    state_->apply_resolution(j.at("id").get<std::string>(), j);
  });
}

void ReviewStore::add_batch(const std::string& name, const std::vector<ReviewTask>& tasks) {
  std::unique_lock lock(mu_);
  if (state_->batches.count(name))
    throw Error(ErrorCode::kConflict, "batch '" + name + "' already exists");
  for (const auto& t : tasks)
    if (state_->task_index.count(t.task_id))
      throw Error(ErrorCode::kDuplicate, "task id '" + t.task_id + "' already exists");
  std::vector<std::string> lines;
  lines.reserve(tasks.size());
  for (const auto& t : tasks) {
    json j = client_task_json(t);
    j["arm"] = to_string(t.hidden_arm);
    lines.push_back(j.dump());
  }
  write_lines((fs::path(dir_) / "batches" / (name + ".jsonl")).string(), lines);
  state_->index_batch(name, tasks);
}

std::vector<std::string> ReviewStore::batch_names() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [name, _] : state_->batches) out.push_back(name);
  return out;
}

std::vector<ReviewTask> ReviewStore::tasks(const std::string& batch) const {
  std::shared_lock lock(mu_);
  auto it = state_->batches.find(batch);
  if (it == state_->batches.end()) throw Error(ErrorCode::kNotFound, "unknown batch '" + batch + "'");
  return it->second;
}

SubmitOutcome ReviewStore::submit(ReviewVerdict verdict) {
  if (verdict.task_id.empty() || is_blank(verdict.reviewer_id))
    throw Error(ErrorCode::kInvalidArgument, "verdict needs task_id and reviewer_id");
  std::unique_lock lock(mu_);
  if (!state_->task_index.count(verdict.task_id))
    throw Error(ErrorCode::kNotFound, "unknown task '" + verdict.task_id + "'");
  const auto key = std::make_pair(verdict.task_id, verdict.reviewer_id);
  if (auto it = state_->verdicts.find(key); it != state_->verdicts.end()) {
    if (it->second.correct == verdict.correct) return SubmitOutcome::kAlreadyStored;
    throw Error(ErrorCode::kConflict, "reviewer '" + verdict.reviewer_id +
                                          "' already recorded a different verdict for '" +
                                          verdict.task_id + "'");
  }
  if (verdict.timestamp.empty()) verdict.timestamp = utc_now();
  append_line_durable((fs::path(dir_) / "verdicts.log").string(), to_json_line(verdict));
  state_->verdicts.emplace(key, std::move(verdict));
  return SubmitOutcome::kStored;
}

std::size_t ReviewStore::verdict_count() const {
  std::shared_lock lock(mu_);
  return state_->verdicts.size();
}

CorrectnessReport ReviewStore::report(const std::string& batch) const {
  std::shared_lock lock(mu_);
  auto bit = state_->batches.find(batch);
  if (bit == state_->batches.end()) throw Error(ErrorCode::kNotFound, "unknown batch '" + batch + "'");
  CorrectnessReport rep;
  rep.batch = batch;
  for (const auto& [key, v] : state_->verdicts) {
    const auto& [task_batch, index] = state_->task_index.at(key.first);
    if (task_batch != batch) continue;
    ArmRate& arm = bit->second[index].hidden_arm == Arm::kKept ? rep.kept : rep.removed;
    arm.total += 1;
    arm.correct += v.correct;
  }
  rep.overall.total = rep.kept.total + rep.removed.total;
  rep.overall.correct = rep.kept.correct + rep.removed.correct;
  if (rep.overall.total == 0)
    throw Error(ErrorCode::kInvalidArgument, "batch '" + batch + "' has no verdicts yet");
  return rep;
}

void ReviewStore::add_cross_exam(const std::vector<MCQRecord>& records) {
  std::unique_lock lock(mu_);
  std::set<std::string> seen;
  for (const auto& r : records) {
    r.validate();
    if (!r.answer_index)
      throw Error(ErrorCode::kInvalidArgument, "record '" + r.id + "' has no proposed answer");
    if (state_->cross.count(r.id) || !seen.insert(r.id).second)
      throw Error(ErrorCode::kDuplicate, "cross-exam task '" + r.id + "' already exists");
  }
  for (const auto& r : records) {
    json j{{"record", json::parse(to_json_line(r))}, {"proposed_index", *r.answer_index}};
    append_line_durable((fs::path(dir_) / "crossexam.jsonl").string(), j.dump());
    CrossExamTask t{r, *r.answer_index, CrossExamStatus::kPending, std::nullopt, {}};
    state_->cross_order.push_back(r.id);
    state_->cross.emplace(r.id, std::move(t));
  }
}

std::vector<CrossExamTask> ReviewStore::pending() const {
  std::shared_lock lock(mu_);
  std::vector<CrossExamTask> out;
  for (const auto& id : state_->cross_order) {
    const auto& t = state_->cross.at(id);
    if (t.status == CrossExamStatus::kPending) out.push_back(t);
  }
  return out;
}

std::optional<CrossExamTask> ReviewStore::cross_exam(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = state_->cross.find(id);
  if (it == state_->cross.end()) return std::nullopt;
  return it->second;
}

CrossExamTask ReviewStore::resolve(const std::string& id, const Resolution& resolution) {
  std::unique_lock lock(mu_);
  auto it = state_->cross.find(id);
  if (it == state_->cross.end()) throw Error(ErrorCode::kNotFound, "unknown cross-exam task '" + id + "'");
  CrossExamTask& t = it->second;
  if (t.status != CrossExamStatus::kPending)
    throw Error(ErrorCode::kConflict, "cross-exam task '" + id + "' is already " +
                                          std::string(to_string(t.status)));
  const int n = static_cast<int>(t.record.options.size());
  if (resolution.edit_index && (*resolution.edit_index < 0 || *resolution.edit_index >= n))
    throw Error(ErrorCode::kInvalidArgument, "edit index " + std::to_string(*resolution.edit_index) +
                                                 " is outside 0.." + std::to_string(n - 1));
  json j{{"id", id},
         {"status", resolution.edit_index ? "edited" : "confirmed"},
         {"original_index", t.proposed_index},
         {"final_index", resolution.edit_index.value_or(t.proposed_index)},
         {"reviewer_id", resolution.reviewer_id},
         {"timestamp", utc_now()}};
  append_line_durable((fs::path(dir_) / "crossexam.log").string(), j.dump());
  state_->apply_resolution(id, j);
  return t;
}

}  // namespace vqc
