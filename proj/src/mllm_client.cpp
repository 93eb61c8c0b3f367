#include "rsvp/mllm_client.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <thread>

#include "rsvp/encoding.hpp"
#include "rsvp/errors.hpp"
#include "rsvp/http.hpp"

namespace rsvp {

using nlohmann::json;

namespace {

std::vector<std::string_view> fenced_blocks(std::string_view raw) {
    std::vector<std::string_view> blocks;
    std::size_t pos = 0;
    while (true) {
        const auto open = raw.find("```", pos);
        if (open == std::string_view::npos) break;
        // Skip the info string ("json") up to the end of the fence line.
        auto body = raw.find('\n', open + 3);
        const auto close = raw.find("```", open + 3);
        if (close == std::string_view::npos) break;
        if (body == std::string_view::npos || body > close) {
            body = open + 2;
        }
        blocks.push_back(raw.substr(body + 1, close - body - 1));
        pos = close + 3;
    }
    return blocks;
}

// End offset (exclusive) of the balanced object starting at `start`, if any.
std::optional<std::size_t> balanced_end(std::string_view s, std::size_t start) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) {
                return i + 1;
            }
        }
    }
    return std::nullopt;
}

const json* find_key(const json& obj, std::initializer_list<const char*> names) {
    for (const char* n : names) {
        const auto it = obj.find(n);
        if (it != obj.end()) {
            return &*it;
        }
    }
    return nullptr;
}

bool has_required_keys(const json& j) {
    if (!j.is_object()) return false;
    const bool ids = find_key(j, {"ids_v", "id_v"}) != nullptr && find_key(j, {"ids_h", "id_h"}) != nullptr;
    const bool cells = find_key(j, {"cells"}) != nullptr;
    return find_key(j, {"object", "object_name"}) != nullptr && (ids || cells);
}

std::optional<int> coerce_id(const json& v) {
    if (v.is_number_integer()) {
        const auto i = v.get<std::int64_t>();
        if (i < INT32_MIN / 2 || i > INT32_MAX / 2) return std::nullopt;
        return static_cast<int>(i);
    }
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (!std::isfinite(d) || d != std::floor(d) || std::fabs(d) > 1e9) return std::nullopt;
        return static_cast<int>(d);
    }
    if (v.is_string()) {
        const auto& s = v.get_ref<const std::string&>();
        std::size_t b = 0;
        std::size_t e = s.size();
        while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
        if (b == e || e - b > 9) return std::nullopt;
        std::size_t i = b;
        if (s[i] == '-' || s[i] == '+') ++i;
        if (i == e) return std::nullopt;
        for (std::size_t k = i; k < e; ++k) {
            if (!std::isdigit(static_cast<unsigned char>(s[k]))) return std::nullopt;
        }
        return std::stoi(s.substr(b, e - b));
    }
    return std::nullopt;
}

// Reads an id list, clamping each id into [1, limit].
bool read_ids(const json& v, std::string_view key, int limit, std::vector<int>& out,
              std::vector<std::string>& warnings, std::string& error) {
    if (v.is_null()) {
        return true;
    }
    if (!v.is_array()) {
        error = std::string(key) + " is not a list";
        return false;
    }
    for (const auto& item : v) {
        const auto id = coerce_id(item);
        if (!id) {
            error = std::string(key) + " contains a non-integer id: " + item.dump();
            return false;
        }
        const int clamped = std::clamp(*id, 1, limit);
        if (clamped != *id) {
            warnings.push_back(std::string(key) + ": id " + std::to_string(*id) + " clamped to " +
                               std::to_string(clamped));
        }
        out.push_back(clamped);
    }
    return true;
}

std::string string_field(const json* v) {
    if (v == nullptr || v->is_null()) return {};
    if (v->is_string()) return v->get<std::string>();
    return v->dump();
}

ParseOutcome interpret(const json& j, const GridSpec& grid) {
    ParseOutcome out;
    RegionProposal p;
    p.object_name = string_field(find_key(j, {"object", "object_name"}));
    p.rationale = string_field(find_key(j, {"rationale", "reason", "reasoning"}));

    if (const json* attrs = find_key(j, {"attributes"}); attrs != nullptr && !attrs->is_null()) {
        if (attrs->is_array()) {
            for (const auto& a : *attrs) {
                p.attributes.push_back(a.is_string() ? a.get<std::string>() : a.dump());
            }
        } else {
            p.attributes.push_back(string_field(attrs));
        }
    }

    std::vector<int> cells;
    if (const json* c = find_key(j, {"cells"}); c != nullptr) {
        if (!read_ids(*c, "cells", grid.rows * grid.cols, cells, out.warnings, out.error)) {
            return out;
        }
    }
    if (!cells.empty()) {
        std::set<int> rows;
        std::set<int> cols;
        for (const int cell : cells) {
            rows.insert((cell - 1) / grid.cols + 1);
            cols.insert((cell - 1) % grid.cols + 1);
        }
        p.ids_v.assign(rows.begin(), rows.end());
        p.ids_h.assign(cols.begin(), cols.end());
    } else {
        const json* v = find_key(j, {"ids_v", "id_v"});
        const json* h = find_key(j, {"ids_h", "id_h"});
        if (v != nullptr && !read_ids(*v, "ids_v", grid.rows, p.ids_v, out.warnings, out.error)) {
            return out;
        }
        if (h != nullptr && !read_ids(*h, "ids_h", grid.cols, p.ids_h, out.warnings, out.error)) {
            return out;
        }
    }

    p.absent = p.ids_v.empty() && p.ids_h.empty();
    if (p.absent && p.rationale.empty()) {
        out.error = "empty region lists without a rationale";
        return out;
    }
    if (!p.absent && (p.ids_v.empty() || p.ids_h.empty())) {
        out.warnings.push_back("only one id list is empty; no region can be formed");
    }
    out.proposal = std::move(p);
    return out;
}

constexpr int kMaxBareCandidates = 4096;

std::optional<json> try_parse(std::string_view text) {
    json j = json::parse(text.begin(), text.end(), nullptr, false);
    if (j.is_discarded() || !has_required_keys(j)) {
        return std::nullopt;
    }
    return j;
}

}  // namespace

ParseOutcome parse_proposal(std::string_view raw, const GridSpec& grid) {
    try {
        std::optional<json> found;
        for (const auto block : fenced_blocks(raw)) {
            if ((found = try_parse(block))) break;
        }
        if (!found) {
            int budget = kMaxBareCandidates;
            for (std::size_t i = raw.find('{'); i != std::string_view::npos && budget-- > 0;
                 i = raw.find('{', i + 1)) {
                const auto end = balanced_end(raw, i);
                if (end && (found = try_parse(raw.substr(i, *end - i)))) break;
            }
        }
        if (!found) {
            ParseOutcome out;
            out.error = "no JSON object with object/ids_v/ids_h keys found";
            return out;
        }
        return interpret(*found, grid);
    } catch (const std::exception& e) {
        ParseOutcome out;
        out.error = std::string("parse failure: ") + e.what();
        return out;
    }
}

nlohmann::json proposal_to_json(const RegionProposal& p) {
    return json{{"object", p.object_name}, {"attributes", p.attributes}, {"ids_v", p.ids_v},
                {"ids_h", p.ids_h},        {"rationale", p.rationale}};
}

std::string serialize_proposal(const RegionProposal& p) {
    return proposal_to_json(p).dump();
}

std::string target_text(const RegionProposal& p) {
    std::string text;
    for (const auto& a : p.attributes) {
        if (a.empty()) continue;
        text += a;
        text += ' ';
    }
    text += p.object_name;
    return text;
}

ScriptedBackend::ScriptedBackend(std::filesystem::path dir, int max_parallelism)
    : dir_(std::move(dir)), max_parallelism_(max_parallelism) {
    if (!std::filesystem::is_directory(dir_)) {
        throw ConfigurationError("scripted response directory does not exist: " + dir_.string());
    }
}

std::string ScriptedBackend::id() const {
    return "scripted:" + dir_.filename().string();
}

std::string ScriptedBackend::complete(const PromptBundle&, double, std::string_view sample_id) {
    const auto path = dir_ / (std::string(sample_id) + ".txt");
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw BackendError("no scripted response for sample '" + std::string(sample_id) + "'");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ChatCompletionsBackend::ChatCompletionsBackend(ChatCompletionsConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.base_url.empty() || cfg_.model.empty()) {
        throw ConfigurationError("chat backend needs a base url and a model name");
    }
    if (cfg_.max_parallelism < 1) {
        throw ConfigurationError("max_parallelism must be at least 1");
    }
}

std::string ChatCompletionsBackend::id() const {
    return "chat:" + cfg_.model;
}

nlohmann::json ChatCompletionsBackend::build_request(const PromptBundle& bundle, double temperature) const {
    json content = json::array();
    content.push_back({{"type", "text"}, {"text", bundle.user_text}});
    for (const auto& img : bundle.images) {
        content.push_back({{"type", "image_url"},
                           {"image_url", {{"url", "data:image/png;base64," + base64_encode(encode_png(img))}}}});
    }
    return json{{"model", cfg_.model},
                {"temperature", temperature},
                {"max_tokens", cfg_.max_tokens},
                {"messages",
                 json::array({json{{"role", "system"}, {"content", bundle.system_text}},
                              json{{"role", "user"}, {"content", std::move(content)}}})}};
}

std::string ChatCompletionsBackend::parse_response(const std::string& body) {
    const json j = json::parse(body, nullptr, false);
    if (j.is_discarded()) {
        throw ProtocolError("chat response is not JSON");
    }
    const auto choices = j.find("choices");
    if (choices == j.end() || !choices->is_array() || choices->empty()) {
        throw ProtocolError("chat response has no choices");
    }
    const auto& msg = (*choices)[0].value("message", json::object());
    const auto c = msg.find("content");
    if (c == msg.end()) {
        throw ProtocolError("chat response choice has no message content");
    }
    if (c->is_string()) {
        return c->get<std::string>();
    }
    if (c->is_array()) {
        std::string text;
        for (const auto& part : *c) {
            if (part.is_object() && part.value("type", "") == "text") {
                text += part.value("text", "");
            }
        }
        return text;
    }
    throw ProtocolError("chat response content has unexpected type");
}

std::string ChatCompletionsBackend::complete(const PromptBundle& bundle, double temperature, std::string_view) {
    std::vector<std::pair<std::string, std::string>> headers;
    if (!cfg_.api_key.empty()) {
        headers.emplace_back("Authorization", "Bearer " + cfg_.api_key);
    }
    const auto res = post_json(cfg_.base_url, cfg_.path, build_request(bundle, temperature).dump(), headers,
                               cfg_.timeout);
    if (res.status == 401 || res.status == 403) {
        throw ConfigurationError("chat backend rejected credentials (HTTP " + std::to_string(res.status) + ")");
    }
    if (res.status == 408 || res.status == 429 || res.status >= 500) {
        throw TransientBackendError("chat backend returned HTTP " + std::to_string(res.status));
    }
    if (res.status != 200) {
        throw BackendError("chat backend returned HTTP " + std::to_string(res.status) + ": " + res.body.substr(0, 200));
    }
    return parse_response(res.body);
}

QueryResult query_backend(MllmBackend& backend, const PromptBundle& bundle, double temperature,
                          std::string_view sample_id, const RetryPolicy& retry) {
    if (!(temperature >= 0.0 && temperature <= 2.0)) {
        throw InvalidInput("temperature must lie in [0, 2]");
    }
    const auto start = std::chrono::steady_clock::now();
    auto backoff = retry.initial_backoff;
    std::string last_error;
    for (int attempt = 1; attempt <= retry.max_retries + 1; ++attempt) {
        try {
            QueryResult r;
            r.text = backend.complete(bundle, temperature, sample_id);
            r.attempts = attempt;
            r.latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            return r;
        } catch (const TransientBackendError& e) {
            last_error = e.what();
        }
        if (attempt <= retry.max_retries) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
    throw BackendUnavailable(backend.id() + " unavailable after " + std::to_string(retry.max_retries + 1) +
                             " attempts: " + last_error);
}

std::string request_digest(const PromptBundle& bundle) {
    Sha256 h;
    h.update("system\n").update(bundle.system_text).update("\nuser\n").update(bundle.user_text);
    for (const auto& img : bundle.images) {
        h.update("\nimage " + std::to_string(img.width()) + "x" + std::to_string(img.height()) + "\n");
        h.update(img.bytes());
    }
    return h.hex_digest();
}

nlohmann::json transcript_to_json(const MllmTranscript& t) {
    json j{{"sample_id", t.sample_id},
           {"request_digest", t.request_digest},
           {"backend_id", t.backend_id},
           {"temperature", t.temperature},
           {"parsed", t.parsed ? proposal_to_json(*t.parsed) : json(nullptr)},
           {"parse_error", t.parse_error},
           {"backend_error", t.backend_error},
           {"warnings", t.warnings},
           {"latency_s", t.latency_s},
           {"attempts", t.attempts}};
    if (t.parsed) {
        j["parsed"]["absent"] = t.parsed->absent;
    }
    // Replies that are not valid UTF-8 cannot be stored as JSON strings.
    try {
        (void)json(t.raw_response).dump();
        j["raw_response"] = t.raw_response;
    } catch (const json::type_error&) {
        j["raw_response_b64"] = base64_encode(
            std::span(reinterpret_cast<const std::uint8_t*>(t.raw_response.data()), t.raw_response.size()));
    }
    return j;
}

MllmTranscript transcript_from_json(const nlohmann::json& j) {
    MllmTranscript t;
    t.sample_id = j.at("sample_id").get<std::string>();
    t.request_digest = j.value("request_digest", "");
    t.backend_id = j.value("backend_id", "");
    t.temperature = j.value("temperature", 0.0);
    if (const auto b = j.find("raw_response_b64"); b != j.end()) {
        const auto bytes = base64_decode(b->get<std::string>());
        t.raw_response.assign(bytes.begin(), bytes.end());
    } else {
        t.raw_response = j.value("raw_response", "");
    }
    if (const auto p = j.find("parsed"); p != j.end() && p->is_object()) {
        RegionProposal r;
        r.object_name = p->value("object", "");
        r.attributes = p->value("attributes", std::vector<std::string>{});
        r.ids_v = p->value("ids_v", std::vector<int>{});
        r.ids_h = p->value("ids_h", std::vector<int>{});
        r.rationale = p->value("rationale", "");
        r.absent = r.ids_v.empty() && r.ids_h.empty();
        t.parsed = std::move(r);
    }
    t.parse_error = j.value("parse_error", "");
    t.backend_error = j.value("backend_error", "");
    t.warnings = j.value("warnings", std::vector<std::string>{});
    t.latency_s = j.value("latency_s", 0.0);
    t.attempts = j.value("attempts", 0);
    return t;
}

TranscriptWriter::TranscriptWriter(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    out_.open(path, std::ios::binary | std::ios::app);
    if (!out_) {
        throw ConfigurationError("cannot open transcript file " + path.string());
    }
}

void TranscriptWriter::append(const MllmTranscript& t) {
    const std::string line = transcript_to_json(t).dump() + "\n";
    std::lock_guard lock(mutex_);
    out_ << line;
    out_.flush();
}

}  // namespace rsvp
