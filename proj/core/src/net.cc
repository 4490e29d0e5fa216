#include "vqc/net.h"

#include <httplib.h>

#include <atomic>
#include <cstdlib>

#include "vqc/error.h"

namespace vqc {

namespace {

std::atomic<std::size_t> g_requests{0};

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw Error(ErrorCode::kInvalidArgument, "URL without scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

std::size_t network_request_count() { return g_requests.load(); }

HttpResponse http_post_json(const std::string& url, const std::string& body,
                            const std::vector<std::pair<std::string, std::string>>& headers,
                            int timeout_seconds) {
  const SplitUrl parts = split_url(url);
  httplib::Client client(parts.origin);
  client.set_connection_timeout(timeout_seconds, 0);
  client.set_read_timeout(timeout_seconds, 0);
  client.set_write_timeout(timeout_seconds, 0);
  httplib::Headers hdrs;
  for (const auto& [k, v] : headers) hdrs.emplace(k, v);
  g_requests.fetch_add(1);
  auto res = client.Post(parts.path, hdrs, body, "application/json");
  if (!res)
    throw Error(ErrorCode::kClient,
                "POST " + url + " failed: " + httplib::to_string(res.error()));
  return HttpResponse{res->status, res->body};
}

HttpResponse http_get(const std::string& url, int timeout_seconds) {
  const SplitUrl parts = split_url(url);
  httplib::Client client(parts.origin);
  client.set_connection_timeout(timeout_seconds, 0);
  client.set_read_timeout(timeout_seconds, 0);
  g_requests.fetch_add(1);
  auto res = client.Get(parts.path);
  if (!res)
    throw Error(ErrorCode::kClient, "GET " + url + " failed: " + httplib::to_string(res.error()));
  return HttpResponse{res->status, res->body};
}

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}

}  // namespace vqc
