#pragma once

#include <atomic>
#include <cstddef>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

namespace vqc {

using Embedding = std::vector<float>;

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::string name() const = 0;
  virtual std::size_t dim() const = 0;

  // One unit-length vector of dim() entries per input text, in input order.
  virtual std::vector<Embedding> embed(const std::vector<std::string>& texts) = 0;
};

// Throws Error(kClient) unless every vector has `dim` entries and unit norm
// within 1e-6.
void check_embeddings(const std::vector<Embedding>& vectors, std::size_t expected_count,
                      std::size_t dim, const std::string& provider_name);

// Offline, deterministic bag-of-words provider: each lowercase alphanumeric
// token is hashed into a signed bucket and the counts are L2-normalized.
class HashingEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HashingEmbeddingProvider(std::size_t dim = 256);

  std::string name() const override;
  std::size_t dim() const override { return dim_; }
  std::vector<Embedding> embed(const std::vector<std::string>& texts) override;

 private:
  std::size_t dim_;
};

struct HttpEmbeddingOptions {
  std::string url;  // full endpoint, e.g. http://localhost:8080/v1/embeddings
  std::string model;
  std::string api_key;  // sent as a bearer token when non-empty
  std::size_t dim = 0;  // 0 = learn from the first response
  int timeout_seconds = 60;
};

// Speaks the common embeddings wire format: request {"model","input":[...]},
// response {"data":[{"embedding":[...]}, ...]} (a bare {"embeddings":[[...]]}
// body is accepted too). Vectors are renormalized on receipt.
class HttpEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(HttpEmbeddingOptions options);

  std::string name() const override;
  std::size_t dim() const override;
  std::vector<Embedding> embed(const std::vector<std::string>& texts) override;

 private:
  HttpEmbeddingOptions options_;
  std::atomic<std::size_t> dim_;
};

// Memoizes another provider. Keys are (inner provider name, text digest);
// misses are sent in batches with a bounded number of concurrent requests.
// With a non-empty cache_path, entries are loaded at construction and
// appended as they are computed.
class CachedEmbeddingProvider : public EmbeddingProvider {
 public:
  struct Options {
    std::size_t batch_size = 64;
    std::size_t max_in_flight = 4;
    std::string cache_path;
  };

  CachedEmbeddingProvider(std::shared_ptr<EmbeddingProvider> inner, Options options);
  explicit CachedEmbeddingProvider(std::shared_ptr<EmbeddingProvider> inner)
      : CachedEmbeddingProvider(std::move(inner), Options{}) {}

  std::string name() const override { return inner_->name(); }
  std::size_t dim() const override { return inner_->dim(); }
  std::vector<Embedding> embed(const std::vector<std::string>& texts) override;

  std::size_t hits() const { return hits_.load(); }
  std::size_t misses() const { return misses_.load(); }
  // Texts forwarded to the wrapped provider.
  std::size_t provider_texts() const { return provider_texts_.load(); }
  std::size_t provider_calls() const { return provider_calls_.load(); }

 private:
  std::string key_for(const std::string& text) const;
  void load_cache();

  std::shared_ptr<EmbeddingProvider> inner_;
  Options options_;
  std::mutex mu_;
  std::unordered_map<std::string, Embedding> cache_;
  std::atomic<std::size_t> hits_{0}, misses_{0}, provider_texts_{0}, provider_calls_{0};
};

double cosine_similarity(const Embedding& a, const Embedding& b);

}  // namespace vqc
