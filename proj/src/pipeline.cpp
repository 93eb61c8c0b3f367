#include "rsvp/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <semaphore>
#include <sstream>
#include <thread>

#include "rsvp/encoding.hpp"
#include "rsvp/errors.hpp"

namespace rsvp {

using nlohmann::json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

void RunConfig::validate() const {
    grid.validate();
    if (!(temperature >= 0.0 && temperature <= 2.0)) {
        throw InvalidInput("temperature must lie in [0, 2]");
    }
    if (parallelism < 1) {
        throw InvalidInput("parallelism must be at least 1");
    }
    if (!(failure_budget >= 0.0 && failure_budget <= 1.0)) {
        throw InvalidInput("failure budget must lie in [0, 1]");
    }
    if (ablation_cap < 1) {
        throw InvalidInput("ablation cap must be at least 1");
    }
}

json config_to_json(const RunConfig& cfg) {
    return json{
        {"grid",
         {{"rows", cfg.grid.rows},
          {"cols", cfg.grid.cols},
          {"norm_width", cfg.grid.norm_width},
          {"norm_height", cfg.grid.norm_height},
          {"padding_ratio", cfg.grid.padding_ratio}}},
        {"prompt_variant", to_string(cfg.prompt_variant)},
        {"visual_style", to_string(cfg.visual_style)},
        {"template_version", kTemplateVersion},
        {"temperature", cfg.temperature},
        {"mllm",
         {{"type", cfg.mllm.type},
          {"scripted_dir", cfg.mllm.scripted_dir.generic_string()},
          {"api_key_env", cfg.mllm.api_key_env},
          {"retries", cfg.mllm.retry.max_retries},
          {"backoff_ms", cfg.mllm.retry.initial_backoff.count()},
          {"chat",
           {{"base_url", cfg.mllm.chat.base_url},
            {"path", cfg.mllm.chat.path},
            {"model", cfg.mllm.chat.model},
            {"max_tokens", cfg.mllm.chat.max_tokens},
            {"max_parallelism", cfg.mllm.chat.max_parallelism},
            {"timeout_ms", cfg.mllm.chat.timeout.count()}}}}},
        {"seg",
         {{"type", cfg.seg.type},
          {"remote",
           {{"base_url", cfg.seg.remote.base_url},
            {"path", cfg.seg.remote.path},
            {"max_parallelism", cfg.seg.remote.max_parallelism},
            {"timeout_ms", cfg.seg.remote.timeout.count()}}}}},
        {"parallelism", cfg.parallelism},
        {"output_dir", cfg.output_dir.generic_string()},
        {"fail_fast", cfg.fail_fast},
        {"failure_budget", cfg.failure_budget},
        {"empty_policy", cfg.empty_policy == EmptyPairPolicy::score_one ? "score_one" : "score_zero"},
        {"compute_map", cfg.compute_map},
        {"emit_overlays", cfg.emit_overlays},
        {"ablation_cap", cfg.ablation_cap},
    };
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (const auto it = j.find(key); it != j.end() && !it->is_null()) {
        out = it->get<T>();
    }
}

void read_ms(const json& j, const char* key, std::chrono::milliseconds& out) {
    if (const auto it = j.find(key); it != j.end() && !it->is_null()) {
        out = std::chrono::milliseconds(it->get<std::int64_t>());
    }
}

}  // namespace

RunConfig config_from_json(const json& j, const RunConfig& base) {
    if (!j.is_object()) {
        throw ConfigurationError("run config must be a JSON object");
    }
    RunConfig cfg = base;
    try {
        if (const auto g = j.find("grid"); g != j.end()) {
            read(*g, "rows", cfg.grid.rows);
            read(*g, "cols", cfg.grid.cols);
            read(*g, "norm_width", cfg.grid.norm_width);
            read(*g, "norm_height", cfg.grid.norm_height);
            read(*g, "padding_ratio", cfg.grid.padding_ratio);
        }
        if (const auto v = j.find("prompt_variant"); v != j.end()) {
            cfg.prompt_variant = parse_prompt_variant(v->get<std::string>());
        }
        if (const auto v = j.find("visual_style"); v != j.end()) {
            cfg.visual_style = parse_visual_style(v->get<std::string>());
        }
        read(j, "temperature", cfg.temperature);
        if (const auto m = j.find("mllm"); m != j.end()) {
            read(*m, "type", cfg.mllm.type);
            std::string dir;
            read(*m, "scripted_dir", dir);
            if (!dir.empty()) cfg.mllm.scripted_dir = dir;
            read(*m, "api_key_env", cfg.mllm.api_key_env);
            read(*m, "retries", cfg.mllm.retry.max_retries);
            read_ms(*m, "backoff_ms", cfg.mllm.retry.initial_backoff);
            if (const auto c = m->find("chat"); c != m->end()) {
                read(*c, "base_url", cfg.mllm.chat.base_url);
                read(*c, "path", cfg.mllm.chat.path);
                read(*c, "model", cfg.mllm.chat.model);
                read(*c, "max_tokens", cfg.mllm.chat.max_tokens);
                read(*c, "max_parallelism", cfg.mllm.chat.max_parallelism);
                read_ms(*c, "timeout_ms", cfg.mllm.chat.timeout);
            }
        }
        if (const auto s = j.find("seg"); s != j.end()) {
            read(*s, "type", cfg.seg.type);
            if (const auto r = s->find("remote"); r != s->end()) {
                read(*r, "base_url", cfg.seg.remote.base_url);
                read(*r, "path", cfg.seg.remote.path);
                read(*r, "max_parallelism", cfg.seg.remote.max_parallelism);
                read_ms(*r, "timeout_ms", cfg.seg.remote.timeout);
            }
        }
        read(j, "parallelism", cfg.parallelism);
        std::string out;
        read(j, "output_dir", out);
        if (j.contains("output_dir")) cfg.output_dir = out;
        read(j, "fail_fast", cfg.fail_fast);
        read(j, "failure_budget", cfg.failure_budget);
        if (const auto p = j.find("empty_policy"); p != j.end()) {
            const auto s = p->get<std::string>();
            if (s == "score_one") {
                cfg.empty_policy = EmptyPairPolicy::score_one;
            } else if (s == "score_zero") {
                cfg.empty_policy = EmptyPairPolicy::score_zero;
            } else {
                throw ConfigurationError("unknown empty_policy '" + s + "'");
            }
        }
        read(j, "compute_map", cfg.compute_map);
        read(j, "emit_overlays", cfg.emit_overlays);
        read(j, "ablation_cap", cfg.ablation_cap);
    } catch (const json::exception& e) {
        throw ConfigurationError(std::string("bad run config: ") + e.what());
    } catch (const InvalidInput& e) {
        throw ConfigurationError(std::string("bad run config: ") + e.what());
    }
    return cfg;
}

Backends make_backends(const RunConfig& cfg) {
    Backends b;
    if (cfg.mllm.type == "scripted") {
        b.mllm = std::make_shared<ScriptedBackend>(cfg.mllm.scripted_dir);
    } else if (cfg.mllm.type == "chat") {
        ChatCompletionsConfig chat = cfg.mllm.chat;
        if (!cfg.mllm.api_key_env.empty()) {
            if (const char* key = std::getenv(cfg.mllm.api_key_env.c_str())) {
                chat.api_key = key;
            }
        }
        b.mllm = std::make_shared<ChatCompletionsBackend>(std::move(chat));
    } else {
        throw ConfigurationError("unknown mllm backend type '" + cfg.mllm.type + "'");
    }
    if (cfg.seg.type == "oracle") {
        b.seg = std::make_shared<OracleSegmenter>();
    } else if (cfg.seg.type == "trivial") {
        b.seg = std::make_shared<FullCropSegmenter>();
    } else if (cfg.seg.type == "remote") {
        b.seg = std::make_shared<RemoteSegmenter>(cfg.seg.remote);
    } else {
        throw ConfigurationError("unknown segmentation backend type '" + cfg.seg.type + "'");
    }
    return b;
}

/// Per-backend concurrency limits taken from the backends' declared parallelism.
class BackendGates {
public:
    explicit BackendGates(const Backends& b)
        : mllm_(std::clamp(b.mllm->max_parallelism(), 1, kMax)), seg_(std::clamp(b.seg->max_parallelism(), 1, kMax)) {}

    template <typename F>
    auto with_mllm(F&& f) {
        return guarded(mllm_, std::forward<F>(f));
    }
    template <typename F>
    auto with_seg(F&& f) {
        return guarded(seg_, std::forward<F>(f));
    }

private:
    static constexpr int kMax = 1024;
    using Semaphore = std::counting_semaphore<kMax>;

    template <typename F>
    static auto guarded(Semaphore& s, F&& f) {
        s.acquire();
        struct Release {
            Semaphore& s;
            ~Release() { s.release(); }
        } release{s};
        return f();
    }

    Semaphore mllm_;
    Semaphore seg_;
};

namespace {

double seconds_since(Clock::time_point t) {
    return std::chrono::duration<double>(Clock::now() - t).count();
}

}  // namespace

SampleResult run_sample(const RunConfig& cfg, const Sample& sample, Backends& backends, BackendGates* gates) {
    const auto t_start = Clock::now();
    SampleResult result;
    result.sample_id = sample.id;
    result.transcript.sample_id = sample.id;
    result.transcript.backend_id = backends.mllm->id();
    result.transcript.temperature = cfg.temperature;

    const BinaryMask gt = sample.ground_truth();
    BinaryMask normalized_prediction(cfg.grid.norm_width, cfg.grid.norm_height);

    auto with_mllm = [&](auto&& f) { return gates ? gates->with_mllm(f) : f(); };
    auto with_seg = [&](auto&& f) { return gates ? gates->with_seg(f) : f(); };

    try {
        const Raster image = sample.load_image();
        if (image.width() != sample.dims.width || image.height() != sample.dims.height) {
            throw CorpusError("decoded image size differs from its header");
        }
        const Raster normalized = normalize_image(image, cfg.grid);

        const auto t1 = Clock::now();
        const PromptBundle bundle =
            build_prompt_bundle(normalized, sample.query, cfg.prompt_variant, cfg.visual_style, cfg.grid);
        result.transcript.request_digest = request_digest(bundle);
        try {
            const QueryResult q = with_mllm([&] {
                return query_backend(*backends.mllm, bundle, cfg.temperature, sample.id, cfg.mllm.retry);
            });
            result.transcript.raw_response = q.text;
            result.transcript.latency_s = q.latency_s;
            result.transcript.attempts = q.attempts;
        } catch (const Error& e) {
            result.transcript.backend_error = e.what();
            throw;
        }
        ParseOutcome parsed = parse_proposal(result.transcript.raw_response, cfg.grid);
        result.transcript.warnings = parsed.warnings;
        result.times.stage1_s = seconds_since(t1);
        if (!parsed.ok()) {
            result.transcript.parse_error = parsed.error;
            throw FormatError("unparsable MLLM reply: " + parsed.error);
        }
        result.transcript.parsed = parsed.proposal;
        const RegionProposal& proposal = *parsed.proposal;

        const auto t2 = Clock::now();
        result.crop = region_pixel_bounds(cfg.grid, proposal.ids_v, proposal.ids_h);
        if (result.crop) {
            SegmentationRequest req;
            req.crop_image = crop(normalized, *result.crop);
            req.target_text = target_text(proposal);
            if (req.target_text.empty()) {
                req.target_text = sample.query;
            }
            req.crop_rect = *result.crop;
            if (cfg.seg.type == "oracle" || backends.seg->id() == "oracle") {
                req.reference_mask =
                    std::make_shared<const BinaryMask>(resize_mask_nearest(gt, cfg.grid.norm_width, cfg.grid.norm_height));
            }
            const BinaryMask crop_prediction = with_seg([&] { return backends.seg->segment(req); });
            if (crop_prediction.width() != result.crop->width() || crop_prediction.height() != result.crop->height()) {
                throw ProtocolError("segmenter returned a mask of the wrong size");
            }
            normalized_prediction =
                paste_mask(crop_prediction, *result.crop, {cfg.grid.norm_width, cfg.grid.norm_height});
        }
        result.times.stage2_s = seconds_since(t2);
    } catch (const std::exception& e) {
        if (cfg.fail_fast) {
            throw;
        }
        result.errored = true;
        result.error = e.what();
        normalized_prediction = BinaryMask(cfg.grid.norm_width, cfg.grid.norm_height);
    }

    result.prediction = resize_mask_nearest(normalized_prediction, sample.dims.width, sample.dims.height);
    result.record = iou(result.prediction, gt, cfg.empty_policy);
    result.record.sample_id = sample.id;
    result.times.total_s = seconds_since(t_start);
    return result;
}

namespace {

std::string transcript_digest(const MllmTranscript& t) {
    json j = transcript_to_json(t);
    j.erase("latency_s");
    return sha256_hex(j.dump());
}

json rect_to_json(const std::optional<CropRect>& r) {
    if (!r) return nullptr;
    return json{{"x0", r->x0}, {"y0", r->y0}, {"x1", r->x1}, {"y1", r->y1}};
}

std::optional<CropRect> rect_from_json(const json& j) {
    if (!j.is_object()) return std::nullopt;
    return CropRect{j.at("x0").get<int>(), j.at("y0").get<int>(), j.at("x1").get<int>(), j.at("y1").get<int>()};
}

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

Raster overlay(const Raster& image, const BinaryMask& prediction, const BinaryMask& gt) {
    Raster out = image;
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) {
            Rgb c = out.at(x, y);
            const bool p = prediction.at(x, y);
            const bool g = gt.at(x, y);
            if (p || g) {
                const Rgb tint = p && g ? Rgb{255, 220, 0} : (p ? Rgb{255, 0, 0} : Rgb{0, 160, 255});
                c = {static_cast<std::uint8_t>((c.r + tint.r) / 2), static_cast<std::uint8_t>((c.g + tint.g) / 2),
                     static_cast<std::uint8_t>((c.b + tint.b) / 2)};
                out.set(x, y, c);
            }
        }
    }
    return out;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw ConfigurationError("cannot write " + p.string());
    }
    out << text;
}

}  // namespace

EvalReport run_eval(const RunConfig& cfg, const Corpus& corpus) {
    Backends backends = make_backends(cfg);
    return run_eval(cfg, corpus, backends);
}

EvalReport run_eval(const RunConfig& cfg, const Corpus& corpus, Backends& backends) {
    cfg.validate();
    if (corpus.samples.empty()) {
        throw InvalidInput("cannot evaluate an empty corpus");
    }
    const auto t_start = Clock::now();
    std::unique_ptr<TranscriptWriter> writer;
    if (!cfg.output_dir.empty()) {
        fs::create_directories(cfg.output_dir);
        fs::remove(cfg.output_dir / "transcripts.jsonl");
        writer = std::make_unique<TranscriptWriter>(cfg.output_dir / "transcripts.jsonl");
        if (cfg.emit_overlays) {
            fs::create_directories(cfg.output_dir / "overlays");
        }
    }

    const std::size_t n = corpus.samples.size();
    std::vector<SampleReport> reports(n);
    std::vector<ImageInstances> instances(cfg.compute_map ? n : 0);
    BackendGates gates(backends);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&] {
        while (!stop.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) break;
            const Sample& sample = corpus.samples[i];
            try {
                SampleResult r = run_sample(cfg, sample, backends, &gates);
                if (writer) {
                    writer->append(r.transcript);
                }
                if (cfg.emit_overlays && !cfg.output_dir.empty()) {
                    write_png(overlay(sample.load_image(), r.prediction, sample.ground_truth()),
                              cfg.output_dir / "overlays" / (sample.id + ".png"));
                }
                SampleReport& rep = reports[i];
                rep.record = r.record;
                rep.errored = r.errored;
                rep.error = r.error;
                rep.transcript_digest = transcript_digest(r.transcript);
                rep.proposal = r.transcript.parsed;
                rep.crop = r.crop;
                rep.warnings = r.transcript.warnings;
                rep.times = r.times;
                if (cfg.compute_map) {
                    const std::string category = sample.category.value_or("object");
                    auto& inst = instances[i];
                    if (r.prediction.any()) {
                        inst.predictions.push_back({std::move(r.prediction), 1.0, category});
                    }
                    for (const auto& m : sample.gt_masks) {
                        inst.ground_truth.push_back({m, category});
                    }
                }
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                stop.store(true);
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        const int workers = std::min<int>(cfg.parallelism, static_cast<int>(n));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back(worker);
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }

    EvalReport report;
    report.config = config_to_json(cfg);
    report.samples = std::move(reports);
    std::vector<IoURecord> records;
    for (const auto& s : report.samples) {
        records.push_back(s.record);
        report.errored += s.errored ? 1 : 0;
        report.timing.stage1_s += s.times.stage1_s;
        report.timing.stage2_s += s.times.stage2_s;
        report.timing.total_s += s.times.total_s;
    }
    report.timing.overhead_s = report.timing.total_s - report.timing.stage1_s - report.timing.stage2_s;
    report.giou = giou(records);
    report.ciou = ciou(records);
    if (cfg.compute_map) {
        try {
            report.map = map_eval(instances).map;
        } catch (const InvalidInput&) {
            report.map.reset();  // corpus without ground-truth instances
        }
    }
    report.failed = static_cast<double>(report.errored) > cfg.failure_budget * static_cast<double>(n);
    report.timing.wall_s = seconds_since(t_start);
    report.generated_at = utc_timestamp();

    if (!cfg.output_dir.empty()) {
        write_text(cfg.output_dir / "report.json", report_to_json(report).dump(2) + "\n");
        write_text(cfg.output_dir / "report.md", report_markdown(report));
    }
    return report;
}

json report_to_json(const EvalReport& r) {
    json samples = json::array();
    for (const auto& s : r.samples) {
        samples.push_back(json{
            {"id", s.record.sample_id},
            {"intersection", s.record.intersection},
            {"union", s.record.union_},
            {"iou", s.record.iou},
            {"errored", s.errored},
            {"error", s.error},
            {"transcript_digest", s.transcript_digest},
            {"proposal", s.proposal ? proposal_to_json(*s.proposal) : json(nullptr)},
            {"crop", rect_to_json(s.crop)},
            {"warnings", s.warnings},
            {"timing", {{"stage1_s", s.times.stage1_s}, {"stage2_s", s.times.stage2_s}, {"total_s", s.times.total_s}}},
        });
    }
    return json{
        {"format", "rsvp-eval-report"},
        {"version", 1},
        {"config", r.config},
        {"summary",
         {{"samples", r.samples.size()},
          {"giou", r.giou},
          {"ciou", r.ciou},
          {"map", r.map ? json(*r.map) : json(nullptr)},
          {"errored", r.errored},
          {"failed", r.failed}}},
        {"samples", std::move(samples)},
        {"timing",
         {{"stage1_s", r.timing.stage1_s},
          {"stage2_s", r.timing.stage2_s},
          {"overhead_s", r.timing.overhead_s},
          {"total_s", r.timing.total_s},
          {"wall_s", r.timing.wall_s}}},
        {"generated_at", r.generated_at},
    };
}

EvalReport report_from_json(const json& j) {
    if (j.value("format", "") != "rsvp-eval-report") {
        throw FormatError("not an evaluation report");
    }
    EvalReport r;
    r.config = j.value("config", json::object());
    const auto& summary = j.at("summary");
    r.giou = summary.at("giou").get<double>();
    r.ciou = summary.at("ciou").get<double>();
    if (const auto m = summary.find("map"); m != summary.end() && m->is_number()) {
        r.map = m->get<double>();
    }
    r.errored = summary.value("errored", std::size_t{0});
    r.failed = summary.value("failed", false);
    for (const auto& s : j.at("samples")) {
        SampleReport rep;
        rep.record.sample_id = s.at("id").get<std::string>();
        rep.record.intersection = s.at("intersection").get<std::uint64_t>();
        rep.record.union_ = s.at("union").get<std::uint64_t>();
        rep.record.iou = s.at("iou").get<double>();
        rep.errored = s.value("errored", false);
        rep.error = s.value("error", "");
        rep.transcript_digest = s.value("transcript_digest", "");
        if (const auto p = s.find("proposal"); p != s.end() && p->is_object()) {
            RegionProposal prop;
            prop.object_name = p->value("object", "");
            prop.attributes = p->value("attributes", std::vector<std::string>{});
            prop.ids_v = p->value("ids_v", std::vector<int>{});
            prop.ids_h = p->value("ids_h", std::vector<int>{});
            prop.rationale = p->value("rationale", "");
            prop.absent = prop.ids_v.empty() && prop.ids_h.empty();
            rep.proposal = std::move(prop);
        }
        rep.crop = rect_from_json(s.value("crop", json(nullptr)));
        rep.warnings = s.value("warnings", std::vector<std::string>{});
        if (const auto t = s.find("timing"); t != s.end()) {
            rep.times = {t->value("stage1_s", 0.0), t->value("stage2_s", 0.0), t->value("total_s", 0.0)};
        }
        r.samples.push_back(std::move(rep));
    }
    if (const auto t = j.find("timing"); t != j.end()) {
        r.timing = {t->value("stage1_s", 0.0), t->value("stage2_s", 0.0), t->value("overhead_s", 0.0),
                    t->value("total_s", 0.0), t->value("wall_s", 0.0)};
    }
    r.generated_at = j.value("generated_at", "");
    return r;
}

json strip_volatile(json report) {
    report.erase("timing");
    report.erase("generated_at");
    if (const auto c = report.find("config"); c != report.end()) {
        c->erase("output_dir");
    }
    if (const auto s = report.find("samples"); s != report.end()) {
        for (auto& item : *s) {
            item.erase("timing");
        }
    }
    return report;
}

namespace {

std::string fixed(double v, int digits) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(digits) << v;
    return out.str();
}

}  // namespace

std::string report_markdown(const EvalReport& r) {
    std::ostringstream out;
    out << "# Evaluation report\n\n";
    out << "| samples | errored | gIoU | cIoU | mAP | status |\n";
    out << "|---:|---:|---:|---:|---:|:---|\n";
    out << "| " << r.samples.size() << " | " << r.errored << " | " << fixed(100.0 * r.giou, 2) << " | "
        << fixed(100.0 * r.ciou, 2) << " | " << (r.map ? fixed(100.0 * *r.map, 2) : std::string("-")) << " | "
        << (r.failed ? "FAILED" : "ok") << " |\n\n";
    out << "| stage | seconds |\n|:---|---:|\n";
    out << "| first stage (MLLM) | " << fixed(r.timing.stage1_s, 3) << " |\n";
    out << "| second stage (segmentation) | " << fixed(r.timing.stage2_s, 3) << " |\n";
    out << "| overhead | " << fixed(r.timing.overhead_s, 3) << " |\n";
    out << "| total | " << fixed(r.timing.total_s, 3) << " |\n";
    out << "| wall clock | " << fixed(r.timing.wall_s, 3) << " |\n\n";
    out << "| sample | I | U | IoU | note |\n|:---|---:|---:|---:|:---|\n";
    for (const auto& s : r.samples) {
        std::string note = s.error;
        if (note.empty() && s.proposal && s.proposal->absent) note = "absent";
        for (auto& c : note) {
            if (c == '|' || c == '\n') c = ' ';
        }
        out << "| " << s.record.sample_id << " | " << s.record.intersection << " | " << s.record.union_ << " | "
            << fixed(s.record.iou, 4) << " | " << note << " |\n";
    }
    return out.str();
}

RunConfig apply_axis(const RunConfig& cfg, const std::string& axis, const json& value) {
    if (axis == "density") {
        RunConfig out = cfg;
        out.grid.rows = value.get<int>();
        out.grid.cols = value.get<int>();
        return out;
    }
    if (axis == "padding") {
        return apply_axis(cfg, "grid.padding_ratio", value);
    }
    json patch = json::object();
    json* node = &patch;
    std::size_t start = 0;
    while (true) {
        const auto dot = axis.find('.', start);
        const std::string key = axis.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) {
            throw InvalidInput("bad ablation axis '" + axis + "'");
        }
        if (dot == std::string::npos) {
            (*node)[key] = value;
            break;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
    // Reject keys the config does not know, so a typo cannot silently run the base config N times.
    const json known = config_to_json(cfg);
    const json::json_pointer ptr("/" + [&] {
        std::string p = axis;
        std::replace(p.begin(), p.end(), '.', '/');
        return p;
    }());
    if (!known.contains(ptr)) {
        throw InvalidInput("unknown ablation axis '" + axis + "'");
    }
    return config_from_json(patch, cfg);
}

AblationResult run_ablation(const RunConfig& base, const Corpus& corpus, const AblationAxes& axes,
                            const BackendFactory& factory) {
    base.validate();
    std::size_t combos = 1;
    for (const auto& [name, values] : axes) {
        if (values.empty()) {
            throw InvalidInput("ablation axis '" + name + "' has no values");
        }
        combos *= values.size();
        if (combos > static_cast<std::size_t>(base.ablation_cap)) {
            throw InvalidInput("ablation grid exceeds the cap of " + std::to_string(base.ablation_cap) + " runs");
        }
    }

    // Build every config first so a bad axis fails before any run starts.
    AblationResult result;
    std::vector<RunConfig> configs;
    for (const auto& axis : axes) {
        result.axis_names.push_back(axis.first);
    }
    for (std::size_t c = 0; c < combos; ++c) {
        RunConfig cfg = base;
        std::vector<json> row;
        std::size_t rest = c;
        for (auto it = axes.rbegin(); it != axes.rend(); ++it) {
            const auto& values = it->second;
            const json& v = values[rest % values.size()];
            rest /= values.size();
            cfg = apply_axis(cfg, it->first, v);
            row.insert(row.begin(), v);
        }
        if (!base.output_dir.empty()) {
            char name[32];
            std::snprintf(name, sizeof name, "run_%03zu", c);
            cfg.output_dir = base.output_dir / name;
        }
        cfg.validate();
        configs.push_back(std::move(cfg));
        result.settings.push_back(std::move(row));
    }
    for (const auto& cfg : configs) {
        Backends backends = factory(cfg);
        result.reports.push_back(run_eval(cfg, corpus, backends));
    }
    if (!base.output_dir.empty()) {
        fs::create_directories(base.output_dir);
        write_text(base.output_dir / "ablation.csv", ablation_csv(result));
        write_text(base.output_dir / "ablation.txt", ablation_table(result));
    }
    return result;
}

namespace {

std::string cell(const json& v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
}

}  // namespace

std::string ablation_csv(const AblationResult& r) {
    std::ostringstream out;
    for (const auto& name : r.axis_names) {
        out << name << ',';
    }
    out << "giou,ciou,map,errored,failed\n";
    for (std::size_t i = 0; i < r.reports.size(); ++i) {
        for (const auto& v : r.settings[i]) {
            std::string s = cell(v);
            if (s.find_first_of(",\"") != std::string::npos) {
                std::string q = "\"";
                for (char c : s) {
                    if (c == '"') q += '"';
                    q += c;
                }
                s = q + "\"";
            }
            out << s << ',';
        }
        const auto& rep = r.reports[i];
        out << fixed(rep.giou, 6) << ',' << fixed(rep.ciou, 6) << ',' << (rep.map ? fixed(*rep.map, 6) : "") << ','
            << rep.errored << ',' << (rep.failed ? "true" : "false") << '\n';
    }
    return out.str();
}

std::string ablation_table(const AblationResult& r) {
    std::vector<std::string> header = r.axis_names;
    header.insert(header.end(), {"gIoU", "cIoU", "mAP", "errored"});
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < r.reports.size(); ++i) {
        std::vector<std::string> row;
        for (const auto& v : r.settings[i]) {
            row.push_back(cell(v));
        }
        const auto& rep = r.reports[i];
        row.push_back(fixed(100.0 * rep.giou, 2));
        row.push_back(fixed(100.0 * rep.ciou, 2));
        row.push_back(rep.map ? fixed(100.0 * *rep.map, 2) : "-");
        row.push_back(std::to_string(rep.errored));
        rows.push_back(std::move(row));
    }
    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
        width[c] = header[c].size();
        for (const auto& row : rows) {
            width[c] = std::max(width[c], row[c].size());
        }
    }
    std::ostringstream out;
    auto line = [&](const std::vector<std::string>& row) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            out << (c == 0 ? "" : "  ") << std::setw(static_cast<int>(width[c])) << row[c];
        }
        out << '\n';
    };
    line(header);
    std::size_t total = 0;
    for (const auto w : width) total += w + 2;
    out << std::string(total - 2, '-') << '\n';
    for (const auto& row : rows) {
        line(row);
    }
    return out.str();
}

}  // namespace rsvp
