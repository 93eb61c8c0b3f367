#pragma once

#include <chrono>
#include <string>
#include <utility>
#include <vector>

namespace rsvp {

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// POSTs a JSON body to `base_url` + `path` ("http://host:port" or https).
/// Transport failures throw TransientBackendError; HTTP status codes are
/// returned for the caller to classify.
HttpResponse post_json(const std::string& base_url, const std::string& path, const std::string& body,
                       const std::vector<std::pair<std::string, std::string>>& headers,
                       std::chrono::milliseconds timeout);

}  // namespace rsvp
