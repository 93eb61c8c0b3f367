#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rsvp/corpus.hpp"
#include "rsvp/geometry.hpp"
#include "rsvp/metrics.hpp"
#include "rsvp/mllm_client.hpp"
#include "rsvp/segmentation_backend.hpp"
#include "rsvp/visual_prompt.hpp"

namespace rsvp {

struct MllmBackendConfig {
    std::string type = "scripted";  // scripted | chat
    std::filesystem::path scripted_dir;
    ChatCompletionsConfig chat;     // api_key is filled from api_key_env, never from files
    std::string api_key_env = "RSVP_API_KEY";
    RetryPolicy retry;
};

struct SegBackendConfig {
    std::string type = "oracle";  // oracle | trivial | remote
    RemoteSegmenterConfig remote;
};

struct RunConfig {
    GridSpec grid;
    PromptVariant prompt_variant = PromptVariant::hierarchical;
    VisualStyle visual_style = VisualStyle::split;
    double temperature = 0.0;
    MllmBackendConfig mllm;
    SegBackendConfig seg;
    int parallelism = 1;
    std::filesystem::path output_dir;
    bool fail_fast = false;
    double failure_budget = 0.05;  // fraction of errored samples tolerated
    EmptyPairPolicy empty_policy = EmptyPairPolicy::score_one;
    bool compute_map = false;
    bool emit_overlays = false;
    int ablation_cap = 64;

    void validate() const;
};

nlohmann::json config_to_json(const RunConfig& cfg);
/// Fields absent from `j` keep their value from `base`.
RunConfig config_from_json(const nlohmann::json& j, const RunConfig& base = {});

struct Backends {
    std::shared_ptr<MllmBackend> mllm;
    std::shared_ptr<SegBackend> seg;
};

/// Builds the backends a config describes; reads the API key from the environment.
Backends make_backends(const RunConfig& cfg);

struct StageTimes {
    double stage1_s = 0.0;  // prompt rendering, MLLM query, parsing
    double stage2_s = 0.0;  // cropping, segmentation, pasting
    double total_s = 0.0;   // whole sample including image I/O and scoring
};

struct SampleResult {
    std::string sample_id;
    BinaryMask prediction;  // native resolution
    IoURecord record;
    MllmTranscript transcript;
    std::optional<CropRect> crop;
    bool errored = false;
    std::string error;
    StageTimes times;
};

class BackendGates;

/// normalize -> render -> prompt -> query -> parse -> bounds -> crop ->
/// segment -> paste -> resize to native -> IoU. Backend and parse failures
/// yield an empty prediction unless cfg.fail_fast.
SampleResult run_sample(const RunConfig& cfg, const Sample& sample, Backends& backends,
                        BackendGates* gates = nullptr);

struct SampleReport {
    IoURecord record;
    bool errored = false;
    std::string error;
    std::string transcript_digest;
    std::optional<RegionProposal> proposal;
    std::optional<CropRect> crop;
    std::vector<std::string> warnings;
    StageTimes times;
};

struct RunTiming {
    double stage1_s = 0.0;
    double stage2_s = 0.0;
    double overhead_s = 0.0;
    double total_s = 0.0;  // sum of per-sample totals
    double wall_s = 0.0;   // elapsed time of the whole run
};

struct EvalReport {
    nlohmann::json config;
    std::vector<SampleReport> samples;  // manifest order
    double giou = 0.0;
    double ciou = 0.0;
    std::optional<double> map;
    std::size_t errored = 0;
    bool failed = false;
    RunTiming timing;
    std::string generated_at;
};

/// Evaluates every sample on `parallelism` workers. Records come back in
/// manifest order. Writes report.json, report.md and transcripts.jsonl
/// into cfg.output_dir when it is set.
EvalReport run_eval(const RunConfig& cfg, const Corpus& corpus);
EvalReport run_eval(const RunConfig& cfg, const Corpus& corpus, Backends& backends);

nlohmann::json report_to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);
std::string report_markdown(const EvalReport& r);
/// Removes timestamps, latencies and timings, leaving the deterministic part.
nlohmann::json strip_volatile(nlohmann::json report);

using AblationAxes = std::vector<std::pair<std::string, std::vector<nlohmann::json>>>;
using BackendFactory = std::function<Backends(const RunConfig&)>;

struct AblationResult {
    std::vector<std::string> axis_names;
    std::vector<std::vector<nlohmann::json>> settings;  // one row of axis values per report
    std::vector<EvalReport> reports;
};

/// Applies one axis value. Axis names are config keys ("temperature",
/// "grid.rows", "mllm.chat.model", ...) plus the shorthands "density"
/// (rows = cols) and "padding" (grid.padding_ratio).
RunConfig apply_axis(const RunConfig& cfg, const std::string& axis, const nlohmann::json& value);

/// Runs the cross product of `axes`; throws InvalidInput before running
/// anything when it exceeds cfg.ablation_cap.
AblationResult run_ablation(const RunConfig& base, const Corpus& corpus, const AblationAxes& axes,
                            const BackendFactory& factory = make_backends);

std::string ablation_csv(const AblationResult& r);
std::string ablation_table(const AblationResult& r);

}  // namespace rsvp
