#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "vqc/corpus.h"
#include "vqc/evalkit.h"

namespace vqc {

enum class Arm { kKept, kRemoved };
std::string_view to_string(Arm a);
Arm arm_from_string(std::string_view s);

// What a reviewer sees. Both arms fill every field the same way.
struct ReviewPayload {
  ImageGroup group;
  std::vector<std::string> descriptions;  // one per member, in member order
  std::string comparison;
};

// Builds payloads for merged items, looking descriptions up in the corpus.
std::vector<ReviewPayload> payloads_for(const std::vector<ComparisonItem>& items,
                                        const Corpus& corpus);

struct ReviewTask {
  std::string task_id;  // "<batch>-<position>", independent of the arm
  ReviewPayload payload;
  Arm hidden_arm = Arm::kKept;  // server side only
};

// Client-visible JSON object for a task; never includes the arm.
std::string task_to_client_json(const ReviewTask& task);

// Samples k payloads from each arm and shuffles them together. Throws
// kInfeasible naming the largest feasible k when an arm is short.
std::vector<ReviewTask> create_review_batch(const std::string& batch,
                                            const std::vector<ReviewPayload>& kept,
                                            const std::vector<ReviewPayload>& removed,
                                            std::size_t k, std::uint64_t seed);

struct ReviewVerdict {
  std::string task_id;
  std::string reviewer_id;
  bool correct = false;
  std::string timestamp;  // ISO-8601 UTC; filled by the store when empty
};

std::string to_json_line(const ReviewVerdict& v);
ReviewVerdict verdict_from_json_line(std::string_view line, std::size_t line_no = 0);

enum class SubmitOutcome { kStored, kAlreadyStored };

struct ArmRate {
  std::size_t correct = 0;
  std::size_t total = 0;
  double rate() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

struct CorrectnessReport {
  std::string batch;
  ArmRate kept;
  ArmRate removed;
  ArmRate overall;

  std::string to_json() const;
};

enum class CrossExamStatus { kPending, kConfirmed, kEdited };
std::string_view to_string(CrossExamStatus s);

struct CrossExamTask {
  MCQRecord record;
  int proposed_index = 0;
  CrossExamStatus status = CrossExamStatus::kPending;
  std::optional<int> final_index;
  std::string resolved_by;
};

std::string to_json(const CrossExamTask& task);

// A resolution: confirm the proposed answer, or replace it.
struct Resolution {
  std::optional<int> edit_index;  // empty means confirm
  std::string reviewer_id;
};

// Durable review state rooted at a directory:
//   batches/<name>.jsonl   tasks including the arm
//   verdicts.log           append-only verdict records
//   crossexam.jsonl        cross-examination tasks as loaded
//   crossexam.log          append-only resolutions
// Everything is replayed on construction. Reads run concurrently; writes are
// serialized and flushed before they are acknowledged.
class ReviewStore {
 public:
  explicit ReviewStore(std::string dir);
  ~ReviewStore();

  // Persists a new batch; an existing name is kConflict.
  void add_batch(const std::string& name, const std::vector<ReviewTask>& tasks);
  std::vector<std::string> batch_names() const;
  // kNotFound for an unknown batch.
  std::vector<ReviewTask> tasks(const std::string& batch) const;

  // kNotFound for an unknown task; kConflict when this reviewer already
  // recorded a different verdict; re-sending the same verdict is a no-op.
  SubmitOutcome submit(ReviewVerdict verdict);
  std::size_t verdict_count() const;

  // kInvalidArgument when the batch has no verdicts yet.
  CorrectnessReport report(const std::string& batch) const;

  // Registers MCQ records for cross-examination; each needs an answer
  // index, which becomes the proposed answer. Duplicate ids are kDuplicate.
  void add_cross_exam(const std::vector<MCQRecord>& records);
  std::vector<CrossExamTask> pending() const;
  std::optional<CrossExamTask> cross_exam(const std::string& id) const;
  // kNotFound, kConflict when not pending, kInvalidArgument for an edit
  // index outside the options.
  CrossExamTask resolve(const std::string& id, const Resolution& resolution);

 private:
  struct State;
  void replay();
  std::string dir_;
  std::unique_ptr<State> state_;
  mutable std::shared_mutex mu_;
};

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
};

// HTTP front end:
//   GET  /tasks?batch=NAME          {"batch", "tasks":[client task objects]}
//   POST /verdicts                  verdict object -> {"status":"stored"|"already_stored"}
//   GET  /report?batch=NAME         correctness report
//   GET  /crossexam/pending         {"tasks":[...]}
//   POST /crossexam/{id}/resolve    {"action":"confirm"|"edit","new_index","reviewer_id"}
// Errors come back as {"error": code, "message": text} with 400/404/409.
class ReviewServer {
 public:
  ReviewServer(ReviewStore& store, ServeOptions options);
  ~ReviewServer();
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  // Binds and serves on a background thread; returns the bound port.
  int start();
  // Binds and serves on the calling thread until stop().
  void run();
  // Blocks until a server started with start() stops.
  void wait();
  void stop();
  int port() const { return port_; }

 private:
  int bind();
  struct Impl;
  std::unique_ptr<Impl> impl_;
  ServeOptions options_;
  int port_ = 0;
};

}  // namespace vqc
