#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rsvp/geometry.hpp"
#include "rsvp/visual_prompt.hpp"

namespace rsvp {

/// Stage-one answer: which object the query refers to and where it is.
struct RegionProposal {
    std::string object_name;
    std::vector<std::string> attributes;
    std::string rationale;
    std::vector<int> ids_v;  // row strip ids, 1-based
    std::vector<int> ids_h;  // column strip ids, 1-based
    bool absent = false;     // both id lists empty

    friend bool operator==(const RegionProposal&, const RegionProposal&) = default;
};

struct ParseOutcome {
    std::optional<RegionProposal> proposal;
    std::vector<std::string> warnings;
    std::string error;  // set when proposal is empty

    bool ok() const { return proposal.has_value(); }
};

/// Pulls the JSON answer out of a free-form reply. Fenced blocks are tried
/// first, then bare balanced-brace objects; the first candidate with the
/// required keys wins. Never throws.
ParseOutcome parse_proposal(std::string_view raw, const GridSpec& grid);

/// JSON object in the schema the prompts request.
std::string serialize_proposal(const RegionProposal& p);

/// Target description handed to the segmenter: attributes then object name.
std::string target_text(const RegionProposal& p);

class MllmBackend {
public:
    virtual ~MllmBackend() = default;
    virtual std::string id() const = 0;
    /// Upper bound on concurrent complete() calls the orchestrator may issue.
    virtual int max_parallelism() const = 0;
    /// One completion. Throws TransientBackendError for retryable failures,
    /// ConfigurationError for credential problems, BackendError otherwise.
    virtual std::string complete(const PromptBundle& bundle, double temperature, std::string_view sample_id) = 0;
};

/// Replays canned replies from `{dir}/{sample_id}.txt`.
class ScriptedBackend final : public MllmBackend {
public:
    explicit ScriptedBackend(std::filesystem::path dir, int max_parallelism = 64);
    std::string id() const override;
    int max_parallelism() const override { return max_parallelism_; }
    std::string complete(const PromptBundle& bundle, double temperature, std::string_view sample_id) override;

private:
    std::filesystem::path dir_;
    int max_parallelism_;
};

struct ChatCompletionsConfig {
    std::string base_url = "https://api.openai.com";
    std::string path = "/v1/chat/completions";
    std::string model = "gpt-4o";
    std::string api_key;  // sent as a bearer token when non-empty
    int max_tokens = 1024;
    int max_parallelism = 4;
    std::chrono::milliseconds timeout{120000};
};

/// Vision chat-completions client: text parts plus base64 PNG data URIs.
class ChatCompletionsBackend final : public MllmBackend {
public:
    explicit ChatCompletionsBackend(ChatCompletionsConfig cfg);
    std::string id() const override;
    int max_parallelism() const override { return cfg_.max_parallelism; }
    std::string complete(const PromptBundle& bundle, double temperature, std::string_view sample_id) override;

    nlohmann::json build_request(const PromptBundle& bundle, double temperature) const;
    /// Extracts choices[0].message.content; throws ProtocolError otherwise.
    static std::string parse_response(const std::string& body);

private:
    ChatCompletionsConfig cfg_;
};

struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{1000};  // doubled after every failed attempt
};

struct QueryResult {
    std::string text;
    double latency_s = 0.0;
    int attempts = 0;
};

/// Calls the backend, retrying transient failures with exponential backoff.
/// Throws BackendUnavailable once retries are exhausted; configuration and
/// other backend errors propagate immediately.
QueryResult query_backend(MllmBackend& backend, const PromptBundle& bundle, double temperature,
                          std::string_view sample_id, const RetryPolicy& retry = {});

/// SHA-256 over the prompt texts and the image pixels.
std::string request_digest(const PromptBundle& bundle);

struct MllmTranscript {
    std::string sample_id;
    std::string request_digest;
    std::string backend_id;
    double temperature = 0.0;
    std::string raw_response;  // byte-exact
    std::optional<RegionProposal> parsed;
    std::string parse_error;
    std::string backend_error;
    std::vector<std::string> warnings;
    double latency_s = 0.0;
    int attempts = 0;
};

nlohmann::json proposal_to_json(const RegionProposal& p);
nlohmann::json transcript_to_json(const MllmTranscript& t);
MllmTranscript transcript_from_json(const nlohmann::json& j);

/// Appends transcripts as JSON lines; safe to call from several workers.
class TranscriptWriter {
public:
    explicit TranscriptWriter(const std::filesystem::path& path);
    void append(const MllmTranscript& t);

private:
    std::mutex mutex_;
    std::ofstream out_;
};

}  // namespace rsvp
