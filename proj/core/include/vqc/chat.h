#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "vqc/corpus.h"

namespace vqc {

// One user turn. Image slots are literal <img_k> placeholders in `text`;
// `images` optionally carries the payload references bound to those slots,
// in slot order.
struct Turn {
  std::string text;
  std::vector<ImageRef> images;
};

// Number of <img_k> placeholders in text.
std::size_t count_image_slots(std::string_view text);

class ChatClient {
 public:
  virtual ~ChatClient() = default;

  virtual std::string name() const = 0;
  // Largest number of image slots accepted in one request; 0 = text only.
  virtual std::size_t max_images() const = 0;

  // Rejects requests with more image slots than max_images() with
  // Error(kCapability) before any transport happens; an empty response is
  // reported as Error(kClient).
  std::string complete(const std::string& system, const std::vector<Turn>& turns);

  std::size_t calls() const { return calls_.load(); }

 protected:
  virtual std::string do_complete(const std::string& system, const std::vector<Turn>& turns) = 0;

 private:
  std::atomic<std::size_t> calls_{0};
};

// Test and dry-run double backed by a callable.
class FunctionChatClient : public ChatClient {
 public:
  using Fn = std::function<std::string(const std::string& system, const std::vector<Turn>& turns)>;

  FunctionChatClient(std::string name, std::size_t max_images, Fn fn)
      : name_(std::move(name)), max_images_(max_images), fn_(std::move(fn)) {}

  std::string name() const override { return name_; }
  std::size_t max_images() const override { return max_images_; }

 protected:
  std::string do_complete(const std::string& system, const std::vector<Turn>& turns) override {
    return fn_(system, turns);
  }

 private:
  std::string name_;
  std::size_t max_images_;
  Fn fn_;
};

// Always answers with the same text.
class ConstantChatClient : public FunctionChatClient {
 public:
  ConstantChatClient(std::string name, std::string reply, std::size_t max_images = 4)
      : FunctionChatClient(std::move(name), max_images,
                           [reply = std::move(reply)](const auto&, const auto&) { return reply; }) {}
};

struct HttpChatOptions {
  std::string url;  // full chat-completions endpoint
  std::string model;
  std::string api_key;
  std::size_t max_images = 4;
  double temperature = 0.0;
  int max_tokens = 1024;
  int timeout_seconds = 120;
};

// Chat-completions wire format. Text is split at each <img_k> placeholder
// and the bound image URI is sent as an image_url content part in its place.
class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(HttpChatOptions options);

  std::string name() const override;
  std::size_t max_images() const override { return options_.max_images; }

  // Request body for the given conversation; exposed for tests.
  std::string request_body(const std::string& system, const std::vector<Turn>& turns) const;

 protected:
  std::string do_complete(const std::string& system, const std::vector<Turn>& turns) override;

 private:
  HttpChatOptions options_;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{500};
  double multiplier = 2.0;
};

// Responses keyed by (client name, request digest). Thread-safe; with a
// path, prior entries are replayed at construction and new ones appended.
class ResponseCache {
 public:
  ResponseCache() = default;
  explicit ResponseCache(std::string path);

  static std::string key(const ChatClient& client, const std::string& system,
                         const std::vector<Turn>& turns);

  std::optional<std::string> get(const std::string& key);
  void put(const std::string& key, const std::string& value);

  std::size_t size() const;
  std::size_t hits() const { return hits_.load(); }

 private:
  std::string path_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::string> entries_;
  std::atomic<std::size_t> hits_{0};
};

struct CallOptions {
  RetryPolicy retry;
  ResponseCache* cache = nullptr;
  std::size_t max_in_flight = 8;
};

struct CallResult {
  std::optional<std::string> text;  // empty when the call ultimately failed
  int attempts = 0;
  bool from_cache = false;
  bool capability_rejected = false;
  std::string error;
};

// Cache lookup, then up to retry.max_attempts calls with exponential
// backoff. Capability rejections are not retried. Never throws for client
// failures; the outcome is in the result.
CallResult ask(ChatClient& client, const std::string& system, const std::vector<Turn>& turns,
               const CallOptions& options);

}  // namespace vqc
