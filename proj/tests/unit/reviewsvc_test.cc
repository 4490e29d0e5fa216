#include <gtest/gtest.h>

#include <json.hpp>
#include <set>

#include "oracles/micbench_fixture.h"
#include "unit/test_util.h"
#include "vqc/error.h"
#include "vqc/net.h"
#include "vqc/reviewsvc.h"

namespace vqc {
namespace {

using json = nlohmann::json;
using testing::TempDir;
using testing::img;

ReviewPayload payload(const std::string& prefix, std::size_t i) {
  const std::string a = prefix + std::to_string(i) + "a", b = prefix + std::to_string(i) + "b";
  return ReviewPayload{ImageGroup::make({img(a), img(b)}),
                       {"The image " + a + " is sharp.", "The image " + b + " is blurry."},
                       "The first image is sharper than the second."};
}

std::vector<ReviewPayload> payloads(const std::string& prefix, std::size_t n) {
  std::vector<ReviewPayload> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(payload(prefix, i));
  return out;
}

// Structural signature of a JSON value: keys and types, not contents.
std::string shape(const json& j) {
  if (j.is_object()) {
    std::string s = "{";
    for (auto it = j.begin(); it != j.end(); ++it) s += it.key() + ":" + shape(it.value()) + ",";
    return s + "}";
  }
  if (j.is_array()) return "[" + (j.empty() ? std::string() : shape(j.front())) + "]";
  return j.type_name();
}

TEST(ReviewBatch, ArmsAreIndistinguishableToClients) {
  const auto tasks = create_review_batch("b1", payloads("k", 300), payloads("r", 300), 250, 9);
  ASSERT_EQ(tasks.size(), 500u);
  std::set<std::string> shapes, ids;
  std::size_t kept = 0;
  for (const auto& t : tasks) {
    const std::string text = task_to_client_json(t);
    EXPECT_EQ(text.find("kept"), std::string::npos);
    EXPECT_EQ(text.find("removed"), std::string::npos);
    EXPECT_EQ(text.find("arm"), std::string::npos);
    shapes.insert(shape(json::parse(text)));
    ids.insert(t.task_id);
    kept += t.hidden_arm == Arm::kKept;
  }
  EXPECT_EQ(shapes.size(), 1u);
  EXPECT_EQ(ids.size(), 500u);
  EXPECT_EQ(kept, 250u);
  EXPECT_EQ(tasks.front().task_id, "b1-0000");
  // Arms are interleaved, not blocked.
  std::size_t kept_in_first_half = 0;
  for (std::size_t i = 0; i < 250; ++i) kept_in_first_half += tasks[i].hidden_arm == Arm::kKept;
  EXPECT_GT(kept_in_first_half, 75u);
  EXPECT_LT(kept_in_first_half, 175u);
}

TEST(ReviewBatch, InfeasibleAndEmpty) {
  try {
    create_review_batch("b", payloads("k", 10), payloads("r", 4), 5, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInfeasible);
    EXPECT_NE(std::string(e.what()).find('4'), std::string::npos);
  }
  EXPECT_TRUE(create_review_batch("b", payloads("k", 3), payloads("r", 3), 0, 1).empty());
  EXPECT_THROW(create_review_batch("bad name", payloads("k", 3), payloads("r", 3), 1, 1), Error);
  EXPECT_EQ(create_review_batch("b", payloads("k", 9), payloads("r", 9), 4, 3)[2].task_id,
            create_review_batch("b", payloads("k", 9), payloads("r", 9), 4, 3)[2].task_id);
}

TEST(ReviewBatch, PayloadsFromCorpus) {
  const Corpus corpus = testing::synthetic_corpus(4);
  ComparisonItem item;
  item.group = ImageGroup::make({*corpus.find_image("img2"), *corpus.find_image("img0")});
  item.query = "q";
  item.response = "The first image is better.";
  const auto p = payloads_for({item}, corpus);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].descriptions[0], corpus.find_description("img2")->text);
  EXPECT_EQ(p[0].comparison, item.response);
}

// 8 kept tasks, 2 removed tasks.
std::vector<ReviewTask> fixture_tasks() {
  std::vector<ReviewTask> tasks;
  for (int i = 0; i < 10; ++i)
    tasks.push_back(ReviewTask{"fx-" + std::to_string(i), payload("p", i), i < 8 ? Arm::kKept : Arm::kRemoved});
  return tasks;
}

TEST(ReviewStore, CorrectnessRatesAndConservation) {
  TempDir dir;
  ReviewStore store(dir.path().string());
  store.add_batch("fx", fixture_tasks());
  for (int i = 0; i < 10; ++i) {
    const bool correct = i < 7 || i == 8;  // 7/8 kept, 1/2 removed
    EXPECT_EQ(store.submit({"fx-" + std::to_string(i), "r1", correct, ""}), SubmitOutcome::kStored);
  }
  const CorrectnessReport rep = store.report("fx");
  EXPECT_EQ(rep.kept.rate(), 0.875);
  EXPECT_EQ(rep.removed.rate(), 0.5);
  EXPECT_EQ(rep.kept.total + rep.removed.total, rep.overall.total);
  EXPECT_EQ(rep.kept.correct + rep.removed.correct, rep.overall.correct);
  EXPECT_EQ(rep.overall.total, 10u);
  EXPECT_THROW(store.report("nope"), Error);
  EXPECT_THROW(store.add_batch("fx", fixture_tasks()), Error);
}

TEST(ReviewStore, SubmitIsIdempotentAndRejectsConflicts) {
  TempDir dir;
  ReviewStore store(dir.path().string());
  store.add_batch("fx", fixture_tasks());
  EXPECT_EQ(store.submit({"fx-1", "r1", true, ""}), SubmitOutcome::kStored);
  EXPECT_EQ(store.submit({"fx-1", "r1", true, ""}), SubmitOutcome::kAlreadyStored);
  EXPECT_EQ(store.verdict_count(), 1u);
  try {
    store.submit({"fx-1", "r1", false, ""});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConflict);
  }
  EXPECT_EQ(store.submit({"fx-1", "r2", false, ""}), SubmitOutcome::kStored);
  try {
    store.submit({"missing", "r1", true, ""});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotFound);
  }
}

TEST(ReviewStore, SurvivesRestartAndTornTail) {
  TempDir dir;
  {
    ReviewStore store(dir.path().string());
    store.add_batch("fx", fixture_tasks());
    store.submit({"fx-0", "r1", true, ""});
    store.submit({"fx-9", "r1", false, ""});
  }
  // A crash mid-append leaves a partial line without a newline.
  {
    std::ofstream log(dir.file("verdicts.log"), std::ios::app);
    log << R"({"task_id":"fx-3","review)";
  }
  ReviewStore reopened(dir.path().string());
  EXPECT_EQ(reopened.batch_names(), std::vector<std::string>{"fx"});
  EXPECT_EQ(reopened.verdict_count(), 2u);
  EXPECT_EQ(reopened.submit({"fx-0", "r1", true, ""}), SubmitOutcome::kAlreadyStored);
  const auto rep = reopened.report("fx");
  EXPECT_EQ(rep.kept.correct, 1u);
  EXPECT_EQ(rep.removed.total, 1u);
  EXPECT_EQ(reopened.tasks("fx")[9].hidden_arm, Arm::kRemoved);
}

std::vector<MCQRecord> cross_exam_records() {
  return {oracle::micbench_record("q1", Split::kTest, QuestionType::kWhich, 3, 1),
          oracle::micbench_record("q2", Split::kTest, QuestionType::kYesOrNo, 2, 0)};
}

TEST(CrossExam, ConfirmEditAndConflict) {
  TempDir dir;
  {
    ReviewStore store(dir.path().string());
    store.add_cross_exam(cross_exam_records());
    EXPECT_THROW(store.add_cross_exam(cross_exam_records()), Error);
    EXPECT_EQ(store.pending().size(), 2u);
    const auto confirmed = store.resolve("q1", Resolution{std::nullopt, "rev"});
    EXPECT_EQ(confirmed.status, CrossExamStatus::kConfirmed);
    EXPECT_EQ(confirmed.final_index, 1);
    EXPECT_THROW(store.resolve("q2", Resolution{7, "rev"}), Error);
    const auto edited = store.resolve("q2", Resolution{1, "rev"});
    EXPECT_EQ(edited.status, CrossExamStatus::kEdited);
    EXPECT_EQ(edited.final_index, 1);
    EXPECT_EQ(edited.proposed_index, 0);
    try {
      store.resolve("q1", Resolution{0, "rev2"});
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kConflict);
    }
  }
  ReviewStore reopened(dir.path().string());
  EXPECT_TRUE(reopened.pending().empty());
  EXPECT_EQ(reopened.cross_exam("q2")->final_index, 1);
  EXPECT_FALSE(reopened.cross_exam("zz").has_value());
  const auto log = testing::read_file(dir.file("crossexam.log"));
  EXPECT_NE(log.find("\"original_index\":0"), std::string::npos);
}

TEST(ReviewHttp, EndpointsRoundTrip) {
  TempDir dir;
  ReviewStore store(dir.path().string());
  store.add_batch("fx", fixture_tasks());
  store.add_cross_exam(cross_exam_records());
  ReviewServer server(store, ServeOptions{"127.0.0.1", 0});
  const int port = server.start();
  ASSERT_GT(port, 0);
  const std::string base = "http://127.0.0.1:" + std::to_string(port);

  auto res = http_get(base + "/tasks?batch=fx", 5);
  ASSERT_EQ(res.status, 200);
  const json tasks = json::parse(res.body);
  ASSERT_EQ(tasks.at("tasks").size(), 10u);
  EXPECT_EQ(res.body.find("arm"), std::string::npos);

  EXPECT_EQ(http_get(base + "/tasks?batch=none", 5).status, 404);
  EXPECT_EQ(http_get(base + "/tasks", 5).status, 400);
  EXPECT_EQ(http_get(base + "/report?batch=fx", 5).status, 400);

  const std::string verdict = R"({"task_id":"fx-0","reviewer_id":"r","correct":true})";
  res = http_post_json(base + "/verdicts", verdict, {}, 5);
  EXPECT_EQ(res.status, 200);
  EXPECT_EQ(json::parse(res.body).at("status"), "stored");
  res = http_post_json(base + "/verdicts", verdict, {}, 5);
  EXPECT_EQ(json::parse(res.body).at("status"), "already_stored");
  res = http_post_json(base + "/verdicts", R"({"task_id":"fx-0","reviewer_id":"r","correct":false})", {}, 5);
  EXPECT_EQ(res.status, 409);
  EXPECT_EQ(json::parse(res.body).at("error"), "conflict");
  EXPECT_EQ(http_post_json(base + "/verdicts", R"({"task_id":"nope","reviewer_id":"r","correct":true})", {}, 5).status,
            404);
  EXPECT_EQ(http_post_json(base + "/verdicts", "not json", {}, 5).status, 400);

  res = http_get(base + "/report?batch=fx", 5);
  ASSERT_EQ(res.status, 200);
  EXPECT_EQ(json::parse(res.body).at("kept").at("correct"), 1);

  res = http_get(base + "/crossexam/pending", 5);
  EXPECT_EQ(json::parse(res.body).at("tasks").size(), 2u);
  res = http_post_json(base + "/crossexam/q1/resolve", R"({"action":"edit","new_index":2,"reviewer_id":"r"})", {}, 5);
  ASSERT_EQ(res.status, 200);
  EXPECT_EQ(json::parse(res.body).at("status"), "edited");
  EXPECT_EQ(http_post_json(base + "/crossexam/q1/resolve", R"({"action":"confirm","reviewer_id":"r"})", {}, 5).status,
            409);
  EXPECT_EQ(http_post_json(base + "/crossexam/q2/resolve", R"({"action":"bogus"})", {}, 5).status, 400);
  EXPECT_EQ(http_post_json(base + "/crossexam/zz/resolve", R"({"action":"confirm"})", {}, 5).status, 404);
  server.stop();
}

}  // namespace
}  // namespace vqc
