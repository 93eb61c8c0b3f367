#include "rsvp/http.hpp"

#include <httplib.h>

#include "rsvp/errors.hpp"

namespace rsvp {

HttpResponse post_json(const std::string& base_url, const std::string& path, const std::string& body,
                       const std::vector<std::pair<std::string, std::string>>& headers,
                       std::chrono::milliseconds timeout) {
    httplib::Client client(base_url);
    if (!client.is_valid()) {
        throw BackendUnavailable("invalid endpoint url: " + base_url);
    }
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers h;
    for (const auto& [k, v] : headers) {
        h.emplace(k, v);
    }
    auto res = client.Post(path, h, body, "application/json");
    if (!res) {
        throw TransientBackendError("POST " + base_url + path + " failed: " + httplib::to_string(res.error()));
    }
    return {res->status, res->body};
}

}  // namespace rsvp
