#include "vqc/chat.h"

#include <cctype>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "vqc/digest.h"
#include "vqc/error.h"
#include "vqc/jsonl.h"
#include "vqc/net.h"

namespace vqc {

using json = nlohmann::json;

namespace {

// Finds the next "<img_k>" at or after pos. Returns npos when none.
std::size_t find_slot(std::string_view text, std::size_t pos, std::size_t* len, int* index) {
  for (;;) {
    pos = text.find("<img_", pos);
    if (pos == std::string_view::npos) return pos;
    std::size_t i = pos + 5;
    int value = 0;
    const std::size_t digits_start = i;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
      value = value * 10 + (text[i] - '0');
      ++i;
    }
    if (i > digits_start && i < text.size() && text[i] == '>') {
      if (len) *len = i + 1 - pos;
      if (index) *index = value;
      return pos;
    }
    pos += 5;
  }
}

}  // namespace

std::size_t count_image_slots(std::string_view text) {
  std::size_t n = 0, pos = 0, len = 0;
  while ((pos = find_slot(text, pos, &len, nullptr)) != std::string_view::npos) {
    ++n;
    pos += len;
  }
  return n;
}

std::string ChatClient::complete(const std::string& system, const std::vector<Turn>& turns) {
  std::size_t slots = 0;
  for (const auto& t : turns) {
    const std::size_t s = count_image_slots(t.text);
    if (!t.images.empty() && t.images.size() != s)
      throw Error(ErrorCode::kInvalidArgument,
                  "turn binds " + std::to_string(t.images.size()) + " images to " +
                      std::to_string(s) + " slots");
    slots += s;
  }
  if (slots > max_images())
    throw Error(ErrorCode::kCapability, name() + " accepts at most " +
                                            std::to_string(max_images()) + " images, request has " +
                                            std::to_string(slots));
  calls_.fetch_add(1);
  std::string out = do_complete(system, turns);
  if (is_blank(out)) throw Error(ErrorCode::kClient, name() + " returned an empty response");
  return out;
}

// ---------------------------------------------------------------------------

HttpChatClient::HttpChatClient(HttpChatOptions options) : options_(std::move(options)) {
  if (options_.url.empty()) throw Error(ErrorCode::kInvalidArgument, "chat URL not set");
}

std::string HttpChatClient::name() const {
  return "http:" + (options_.model.empty() ? options_.url : options_.model);
}

std::string HttpChatClient::request_body(const std::string& system,
                                         const std::vector<Turn>& turns) const {
  json messages = json::array();
  if (!system.empty()) messages.push_back({{"role", "system"}, {"content", system}});
  for (const auto& turn : turns) {
    if (turn.images.empty()) {
      messages.push_back({{"role", "user"}, {"content", turn.text}});
      continue;
    }
    json parts = json::array();
    std::string_view text = turn.text;
    std::size_t pos = 0, len = 0;
    int index = 0;
    for (;;) {
      const std::size_t at = find_slot(text, pos, &len, &index);
      const std::string_view chunk = text.substr(pos, at == std::string_view::npos ? text.size() - pos : at - pos);
      if (!is_blank(chunk)) parts.push_back({{"type", "text"}, {"text", std::string(chunk)}});
      if (at == std::string_view::npos) break;
      if (index < 0 || static_cast<std::size_t>(index) >= turn.images.size())
        throw Error(ErrorCode::kInvalidArgument, "image slot <img_" + std::to_string(index) + "> is unbound");
      const ImageRef& img = turn.images[static_cast<std::size_t>(index)];
      if (!img.uri)
        throw Error(ErrorCode::kCapability, "image '" + img.id + "' has no uri to transmit");
      parts.push_back({{"type", "image_url"}, {"image_url", {{"url", *img.uri}}}});
      pos = at + len;
    }
    messages.push_back({{"role", "user"}, {"content", std::move(parts)}});
  }
  json body{{"messages", std::move(messages)},
            {"temperature", options_.temperature},
            {"max_tokens", options_.max_tokens}};
  if (!options_.model.empty()) body["model"] = options_.model;
  return body.dump();
}

std::string HttpChatClient::do_complete(const std::string& system, const std::vector<Turn>& turns) {
  std::vector<std::pair<std::string, std::string>> headers;
  if (!options_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + options_.api_key);
  HttpResponse res =
      http_post_json(options_.url, request_body(system, turns), headers, options_.timeout_seconds);
  if (res.status < 200 || res.status >= 300)
    throw Error(ErrorCode::kClient, name() + ": HTTP " + std::to_string(res.status));
  json body = json::parse(res.body, nullptr, false);
  if (body.is_discarded()) throw Error(ErrorCode::kClient, name() + ": malformed response body");
  try {
    return body.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kClient, name() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

ResponseCache::ResponseCache(std::string path) : path_(std::move(path)) {
  std::ifstream probe(path_);
  if (!probe) return;
  probe.close();
  for_each_line(path_, [&](std::string_view line, std::size_t) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return;
    entries_[j.value("key", "")] = j.value("response", "");
  });
}

std::string ResponseCache::key(const ChatClient& client, const std::string& system,
                               const std::vector<Turn>& turns) {
  std::vector<std::string> parts{system};
  for (const auto& t : turns) {
    parts.push_back(t.text);
    for (const auto& img : t.images) parts.push_back(img.id + '\x1e' + img.uri.value_or(""));
  }
  return client.name() + '\x1f' + digest_ordered(parts);
}

std::optional<std::string> ResponseCache::get(const std::string& key) {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  hits_.fetch_add(1);
  return it->second;
}

void ResponseCache::put(const std::string& key, const std::string& value) {
  std::lock_guard lock(mu_);
  entries_[key] = value;
  if (!path_.empty()) {
    std::ofstream out(path_, std::ios::app);
    out << json{{"key", key}, {"response", value}}.dump() << '\n';
  }
}

std::size_t ResponseCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

CallResult ask(ChatClient& client, const std::string& system, const std::vector<Turn>& turns,
               const CallOptions& options) {
  CallResult result;
  std::string key;
  if (options.cache) {
    key = ResponseCache::key(client, system, turns);
    if (auto hit = options.cache->get(key)) {
      result.text = std::move(hit);
      result.from_cache = true;
      return result;
    }
  }
  auto delay = options.retry.base_delay;
  const int attempts = std::max(1, options.retry.max_attempts);
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    result.attempts = attempt;
    try {
      std::string text = client.complete(system, turns);
      if (options.cache) options.cache->put(key, text);
      result.text = std::move(text);
      result.error.clear();
      return result;
    } catch (const Error& e) {
      result.error = e.what();
      if (e.code() == ErrorCode::kCapability || e.code() == ErrorCode::kInvalidArgument) {
        result.capability_rejected = e.code() == ErrorCode::kCapability;
        return result;
      }
    } catch (const std::exception& e) {
      result.error = e.what();
    }
    if (attempt < attempts && delay.count() > 0) {
      std::this_thread::sleep_for(delay);
      delay = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(delay.count()) * options.retry.multiplier));
    }
  }
  return result;
}

}  // namespace vqc
