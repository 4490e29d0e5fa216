#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "unit/test_util.h"
#include "vqc/embedding.h"
#include "vqc/error.h"
#include "vqc/grouper.h"
#include "vqc/simfilter.h"

namespace vqc {
namespace {

using testing::synthetic_corpus;
using testing::TempDir;

// Counts texts the wrapped provider is asked to embed.
class CountingProvider : public EmbeddingProvider {
 public:
  std::string name() const override { return inner_.name(); }
  std::size_t dim() const override { return inner_.dim(); }
  std::vector<Embedding> embed(const std::vector<std::string>& texts) override {
    for (const auto& t : texts) ++seen[t];
    ++calls;
    return inner_.embed(texts);
  }
  std::map<std::string, int> seen;
  int calls = 0;

 private:
  HashingEmbeddingProvider inner_{128};
};

TEST(Embedding, HashingVectorsAreUnitNormAndDeterministic) {
  HashingEmbeddingProvider p(64);
  const auto v = p.embed({"The image is sharp", "", "!!!", "the IMAGE is sharp"});
  ASSERT_EQ(v.size(), 4u);
  for (const auto& e : v) {
    double n = 0;
    for (float x : e) n += double(x) * x;
    EXPECT_NEAR(n, 1.0, 1e-6);
  }
  EXPECT_NEAR(cosine_similarity(v[0], v[3]), 1.0, 1e-6);
  EXPECT_NO_THROW(check_embeddings(v, 4, 64, p.name()));
}

TEST(Embedding, CheckRejectsWrongShapes) {
  EXPECT_THROW(check_embeddings({{1.0f, 0.0f}}, 2, 2, "x"), Error);
  EXPECT_THROW(check_embeddings({{1.0f, 0.0f, 0.0f}}, 1, 2, "x"), Error);
  EXPECT_THROW(check_embeddings({{0.5f, 0.0f}}, 1, 2, "x"), Error);
}

TEST(Embedding, CacheHitsAndPersistence) {
  TempDir dir;
  auto inner = std::make_shared<CountingProvider>();
  {
    CachedEmbeddingProvider cached(inner, {2, 2, dir.file("emb.jsonl")});
    const auto a = cached.embed({"one", "two", "one", "three"});
    EXPECT_EQ(a.size(), 4u);
    EXPECT_EQ(a[0], a[2]);
    EXPECT_EQ(cached.provider_texts(), 3u);
    EXPECT_EQ(cached.hits(), 1u);  // the repeated "one" in the same batch
    cached.embed({"two"});
    EXPECT_EQ(cached.hits(), 2u);
  }
  CachedEmbeddingProvider reopened(inner, {2, 2, dir.file("emb.jsonl")});
  reopened.embed({"one", "two", "three"});
  EXPECT_EQ(reopened.provider_texts(), 0u);
  EXPECT_EQ(inner->seen["one"], 1);
}

TEST(SimFilter, EachImageEmbeddedOnce) {
  const Corpus corpus = synthetic_corpus(30);
  const GroupSet groups = sample_groups(corpus.image_ids(), SamplingSpec{100, 50, 30, 2});
  CountingProvider p;
  const auto sims = group_similarities(groups.groups, corpus, p);
  EXPECT_EQ(sims.size(), groups.groups.size());
  for (const auto& [text, count] : p.seen) EXPECT_EQ(count, 1) << text;
}

TEST(SimFilter, MissingDescriptionIsNotFound) {
  const Corpus corpus = synthetic_corpus(3);
  HashingEmbeddingProvider p;
  const auto g = ImageGroup::make({testing::img("img0"), testing::img("ghost")});
  try {
    max_pair_similarity(g, corpus, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotFound);
    EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
  }
}

TEST(SimFilter, IdenticalDescriptionsHaveSimilarityOne) {
  HashingEmbeddingProvider p;
  EXPECT_NEAR(max_pair_similarity({"blurry and dark", "a", "blurry and dark"}, p), 1.0, 1e-6);
}

TEST(SimFilter, RemovalRuleIsStrictlyAboveTau) {
  GroupSet set;
  for (int i = 0; i < 3; ++i)
    set.groups.push_back(ImageGroup::make({testing::img("a" + std::to_string(i)), testing::img("b" + std::to_string(i))}));
  const auto rep = filter_by_similarity(set, {0.2, 0.5, 0.9}, 0.5);
  EXPECT_EQ(rep.kept.groups.size(), 2u);
  EXPECT_EQ(rep.removed.groups.size(), 1u);
  EXPECT_DOUBLE_EQ(rep.retention_by_size.at(2), 2.0 / 3.0);
  EXPECT_THROW(filter_by_similarity(set, {0.1, 0.2}, 0.5), Error);
  EXPECT_THROW(filter_by_similarity(set, {0.1, 0.2, 0.3}, 1.5), Error);
}

TEST(SimFilter, MonotoneInTau) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  GroupSet set;
  std::vector<double> sims;
  for (int i = 0; i < 400; ++i) {
    set.groups.push_back(ImageGroup::make({testing::img("a" + std::to_string(i)), testing::img("b" + std::to_string(i))}));
    sims.push_back(u(gen));
  }
  for (int trial = 0; trial < 100; ++trial) {
    double t1 = u(gen), t2 = u(gen);
    if (t1 > t2) std::swap(t1, t2);
    const auto lo = filter_by_similarity(set, sims, t1);
    const auto hi = filter_by_similarity(set, sims, t2);
    ASSERT_LE(lo.kept.groups.size(), hi.kept.groups.size());
    std::set<std::string> hi_ids;
    for (const auto& g : hi.kept.groups) hi_ids.insert(g.id());
    for (const auto& g : lo.kept.groups) ASSERT_TRUE(hi_ids.count(g.id()));
  }
}

TEST(SimFilter, CalibrationHitsTarget) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> sims(10000);
  for (auto& s : sims) s = u(gen);
  for (double target : {0.55, 0.74, 0.86, 1.0}) {
    const double tau = calibrate_from_similarities(sims, target);
    const auto kept = std::count_if(sims.begin(), sims.end(), [&](double s) { return s <= tau; });
    EXPECT_NEAR(static_cast<double>(kept) / sims.size(), target, 1e-3) << target;
  }
}

TEST(SimFilter, CalibrationErrors) {
  EXPECT_THROW(calibrate_from_similarities({0.1, 0.2}, 0.0), Error);
  EXPECT_THROW(calibrate_from_similarities({0.1, 0.2}, 1.2), Error);
  EXPECT_THROW(calibrate_from_similarities({0.1}, 0.5), Error);
  try {
    calibrate_from_similarities({0.3, 0.3, 0.3}, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerate);
  }
}

TEST(SimFilter, CalibrationUsesMidpoint) {
  EXPECT_DOUBLE_EQ(calibrate_from_similarities({0.1, 0.2, 0.3, 0.4}, 0.5), 0.25);
  EXPECT_DOUBLE_EQ(calibrate_from_similarities({0.1, 0.2, 0.3, 0.4}, 1.0), 0.4);
}

TEST(SimFilter, EndToEndRetentionBySize) {
  const Corpus corpus = synthetic_corpus(60);
  const GroupSet groups = sample_groups(corpus.image_ids(), SamplingSpec{200, 80, 40, 9});
  HashingEmbeddingProvider p;
  GroupSet pairs;
  pairs.groups.assign(groups.groups.begin(), groups.groups.begin() + 200);
  const double tau = calibrate_threshold(pairs, corpus, p, 0.86);
  const auto rep = filter_groups(groups, corpus, p, tau);
  EXPECT_NEAR(rep.retention_by_size.at(2), 0.86, 0.02);
  // Larger groups contain more pairs, so they are removed at least as often.
  EXPECT_LE(rep.retention_by_size.at(4), rep.retention_by_size.at(2) + 1e-12);
  EXPECT_EQ(rep.kept.groups.size() + rep.removed.groups.size(), groups.groups.size());
}

}  // namespace
}  // namespace vqc
