#include "vqc/embedding.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "vqc/digest.h"
#include "vqc/error.h"
#include "vqc/jsonl.h"
#include "vqc/net.h"
#include "vqc/parallel.h"

namespace vqc {

using json = nlohmann::json;

namespace {

void normalize(Embedding& v) {
  double sq = 0.0;
  for (float x : v) sq += static_cast<double>(x) * x;
  if (sq <= 0.0) throw Error(ErrorCode::kClient, "zero embedding vector");
  const double inv = 1.0 / std::sqrt(sq);
  for (float& x : v) x = static_cast<float>(x * inv);
}

}  // namespace

void check_embeddings(const std::vector<Embedding>& vectors, std::size_t expected_count,
                      std::size_t dim, const std::string& provider_name) {
  if (vectors.size() != expected_count)
    throw Error(ErrorCode::kClient, provider_name + " returned " +
                                        std::to_string(vectors.size()) + " vectors for " +
                                        std::to_string(expected_count) + " texts");
  for (const auto& v : vectors) {
    if (v.size() != dim)
      throw Error(ErrorCode::kClient, provider_name + " returned a " + std::to_string(v.size()) +
                                          "-d vector, expected " + std::to_string(dim));
    double sq = 0.0;
    for (float x : v) sq += static_cast<double>(x) * x;
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-6)
      throw Error(ErrorCode::kClient, provider_name + " returned a non-unit vector");
  }
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kInvalidArgument, "embedding size mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::kInvalidArgument, "zero embedding");
  double c = dot / std::sqrt(na * nb);
  return std::clamp(c, -1.0, 1.0);
}

// ---------------------------------------------------------------------------

HashingEmbeddingProvider::HashingEmbeddingProvider(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw Error(ErrorCode::kInvalidArgument, "embedding dim must be positive");
}

std::string HashingEmbeddingProvider::name() const { return "hash-bow-" + std::to_string(dim_); }

std::vector<Embedding> HashingEmbeddingProvider::embed(const std::vector<std::string>& texts) {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    Embedding v(dim_, 0.0f);
    std::string token;
    auto flush = [&] {
      if (token.empty()) return;
      const std::uint64_t h = fnv1a64(token);
      v[h % dim_] += (h >> 63) ? -1.0f : 1.0f;
      token.clear();
    };
    for (unsigned char c : text) {
      if (std::isalnum(c))
        token.push_back(static_cast<char>(std::tolower(c)));
      else
        flush();
    }
    flush();
    bool any = false;
    for (float x : v) any = any || x != 0.0f;
    // Token-free (or fully cancelled) texts map to a fixed basis vector.
    if (!any) v[fnv1a64("") % dim_] = 1.0f;
    normalize(v);
    out.push_back(std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------

HttpEmbeddingProvider::HttpEmbeddingProvider(HttpEmbeddingOptions options)
    : options_(std::move(options)), dim_(options_.dim) {
  if (options_.url.empty()) throw Error(ErrorCode::kInvalidArgument, "embedding URL not set");
}

std::string HttpEmbeddingProvider::name() const {
  return "http:" + (options_.model.empty() ? options_.url : options_.model);
}

std::size_t HttpEmbeddingProvider::dim() const { return dim_.load(); }

std::vector<Embedding> HttpEmbeddingProvider::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) return {};
  json req{{"input", texts}};
  if (!options_.model.empty()) req["model"] = options_.model;
  std::vector<std::pair<std::string, std::string>> headers;
  if (!options_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + options_.api_key);
  HttpResponse res = http_post_json(options_.url, req.dump(), headers, options_.timeout_seconds);
  if (res.status < 200 || res.status >= 300)
    throw Error(ErrorCode::kClient, name() + ": HTTP " + std::to_string(res.status));
  json body = json::parse(res.body, nullptr, false);
  if (body.is_discarded()) throw Error(ErrorCode::kClient, name() + ": malformed response body");

  std::vector<Embedding> out;
  try {
    if (body.contains("data")) {
      for (const auto& d : body.at("data")) out.push_back(d.at("embedding").get<Embedding>());
    } else {
      out = body.at("embeddings").get<std::vector<Embedding>>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kClient, name() + ": " + e.what());
  }
  for (auto& v : out) normalize(v);
  std::size_t expected = dim_.load();
  if (expected == 0 && !out.empty()) {
    dim_.compare_exchange_strong(expected, out.front().size());
    expected = dim_.load();
  }
  check_embeddings(out, texts.size(), expected, name());
  return out;
}

// ---------------------------------------------------------------------------

CachedEmbeddingProvider::CachedEmbeddingProvider(std::shared_ptr<EmbeddingProvider> inner,
                                                 Options options)
    : inner_(std::move(inner)), options_(std::move(options)) {
  if (!inner_) throw Error(ErrorCode::kInvalidArgument, "null embedding provider");
  if (options_.batch_size == 0) options_.batch_size = 1;
  if (!options_.cache_path.empty()) load_cache();
}

std::string CachedEmbeddingProvider::key_for(const std::string& text) const {
  return inner_->name() + '\x1f' + digest_hex(text);
}

void CachedEmbeddingProvider::load_cache() {
  std::ifstream probe(options_.cache_path);
  if (!probe) return;
  probe.close();
  const std::string prefix = inner_->name() + '\x1f';
  for_each_line(options_.cache_path, [&](std::string_view line, std::size_t) {
    json j = json::parse(line, nullptr, false);
    // A torn final line from an interrupted run is skipped.
    if (j.is_discarded() || !j.is_object()) return;
    if (j.value("provider", "") != inner_->name()) return;
    cache_[prefix + j.value("digest", "")] = j.at("vector").get<Embedding>();
  });
}

std::vector<Embedding> CachedEmbeddingProvider::embed(const std::vector<std::string>& texts) {
  std::vector<Embedding> out(texts.size());
  std::vector<std::string> missing;
  std::unordered_map<std::string, std::vector<std::size_t>> pending;  // key -> positions
  {
    std::lock_guard lock(mu_);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      const std::string key = key_for(texts[i]);
      if (auto it = cache_.find(key); it != cache_.end()) {
        out[i] = it->second;
        hits_.fetch_add(1);
        continue;
      }
      auto [slot, fresh] = pending.try_emplace(key);
      if (fresh) {
        missing.push_back(texts[i]);
        misses_.fetch_add(1);
      } else {
        hits_.fetch_add(1);
      }
      slot->second.push_back(i);
    }
  }
  if (missing.empty()) return out;

  const std::size_t n_batches = (missing.size() + options_.batch_size - 1) / options_.batch_size;
  auto batches = bounded_map<std::vector<Embedding>>(
      n_batches, options_.max_in_flight, [&](std::size_t b) {
        const std::size_t lo = b * options_.batch_size;
        const std::size_t hi = std::min(missing.size(), lo + options_.batch_size);
        std::vector<std::string> chunk(missing.begin() + static_cast<std::ptrdiff_t>(lo),
                                       missing.begin() + static_cast<std::ptrdiff_t>(hi));
        provider_calls_.fetch_add(1);
        provider_texts_.fetch_add(chunk.size());
        auto vecs = inner_->embed(chunk);
        check_embeddings(vecs, chunk.size(), inner_->dim(), inner_->name());
        return vecs;
      });

  std::lock_guard lock(mu_);
  std::ofstream log;
  if (!options_.cache_path.empty()) log.open(options_.cache_path, std::ios::app);
  std::size_t m = 0;
  for (auto& batch : batches) {
    for (auto& vec : batch) {
      const std::string& text = missing[m++];
      const std::string key = key_for(text);
      for (std::size_t pos : pending[key]) out[pos] = vec;
      if (log) {
        log << json{{"provider", inner_->name()}, {"digest", digest_hex(text)}, {"vector", vec}}.dump()
            << '\n';
      }
      cache_[key] = std::move(vec);
    }
  }
  return out;
}

}  // namespace vqc
