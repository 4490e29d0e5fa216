#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace vqc {

// Count of outbound HTTP requests issued by clients and providers in this
// process. Dry runs assert it stays at zero.
std::size_t network_request_count();

struct HttpResponse {
  int status = 0;
  std::string body;
};

// POST a JSON body. Throws Error(kClient) on transport failure; non-2xx
// statuses are returned to the caller.
HttpResponse http_post_json(const std::string& url, const std::string& body,
                            const std::vector<std::pair<std::string, std::string>>& headers,
                            int timeout_seconds);

// GET a URL (path and query included as given). Same error contract.
HttpResponse http_get(const std::string& url, int timeout_seconds);

// Reads an environment variable; empty string when unset.
std::string env_or_empty(const char* name);

}  // namespace vqc
