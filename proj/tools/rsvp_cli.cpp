// Command-line front end: render, infer, eval, ablate, import-*, report, synth.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "rsvp/corpus.hpp"
#include "rsvp/errors.hpp"
#include "rsvp/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flags that mirror RunConfig. Unset flags leave the config file (or the
// defaults) untouched.
struct RunFlags {
    std::string config_file;
    std::optional<int> rows, cols, density, parallelism;
    std::optional<double> padding, temperature, failure_budget;
    std::optional<std::string> variant, style, mllm, scripted_dir, base_url, model, api_key_env, seg, seg_url,
        out, empty_policy;
    std::optional<int> retries;
    bool fail_fast = false;
    bool map = false;
    bool overlays = false;

    void add_to(CLI::App* app) {
        app->add_option("--config", config_file, "JSON run config");
        app->add_option("--rows", rows, "horizontal strips (M)");
        app->add_option("--cols", cols, "vertical strips (N)");
        app->add_option("--density", density, "sets rows and cols together");
        app->add_option("--padding", padding, "padding ratio of one strip");
        app->add_option("--variant", variant, "prompt variant A (hierarchical) or B (plain)");
        app->add_option("--style", style, "visual prompt: split, grid or none");
        app->add_option("--temperature", temperature);
        app->add_option("--mllm", mllm, "scripted or chat");
        app->add_option("--scripted-dir", scripted_dir, "directory of {sample_id}.txt replies");
        app->add_option("--base-url", base_url, "chat completions server");
        app->add_option("--model", model);
        app->add_option("--api-key-env", api_key_env, "environment variable holding the API key");
        app->add_option("--retries", retries);
        app->add_option("--seg", seg, "oracle, trivial or remote");
        app->add_option("--seg-url", seg_url, "mask server base url");
        app->add_option("--parallelism,-j", parallelism);
        app->add_option("--out,-o", out, "output directory");
        app->add_option("--failure-budget", failure_budget);
        app->add_option("--empty-policy", empty_policy, "score_one or score_zero");
        app->add_flag("--fail-fast", fail_fast);
        app->add_flag("--map", map, "also compute mAP");
        app->add_flag("--overlays", overlays, "write prediction/GT overlay PNGs");
    }

    rsvp::RunConfig resolve() const {
        json j = json::object();
        if (!config_file.empty()) {
            std::ifstream in(config_file);
            if (!in) throw rsvp::ConfigurationError("cannot open config " + config_file);
            j = json::parse(in);
        }
        if (density) j["grid"]["rows"] = j["grid"]["cols"] = *density;
        if (rows) j["grid"]["rows"] = *rows;
        if (cols) j["grid"]["cols"] = *cols;
        if (padding) j["grid"]["padding_ratio"] = *padding;
        if (variant) j["prompt_variant"] = *variant;
        if (style) j["visual_style"] = *style;
        if (temperature) j["temperature"] = *temperature;
        if (mllm) j["mllm"]["type"] = *mllm;
        if (scripted_dir) j["mllm"]["scripted_dir"] = *scripted_dir;
        if (base_url) j["mllm"]["chat"]["base_url"] = *base_url;
        if (model) j["mllm"]["chat"]["model"] = *model;
        if (api_key_env) j["mllm"]["api_key_env"] = *api_key_env;
        if (retries) j["mllm"]["retries"] = *retries;
        if (seg) j["seg"]["type"] = *seg;
        if (seg_url) j["seg"]["remote"]["base_url"] = *seg_url;
        if (parallelism) j["parallelism"] = *parallelism;
        if (out) j["output_dir"] = *out;
        if (failure_budget) j["failure_budget"] = *failure_budget;
        if (empty_policy) j["empty_policy"] = *empty_policy;
        if (fail_fast) j["fail_fast"] = true;
        if (map) j["compute_map"] = true;
        if (overlays) j["emit_overlays"] = true;
        auto cfg = rsvp::config_from_json(j);
        cfg.validate();
        return cfg;
    }
};

json parse_axis_value(const std::string& text) {
    json v = json::parse(text, nullptr, false);
    return v.is_discarded() ? json(text) : v;
}

std::pair<std::string, std::vector<json>> parse_axis(const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw rsvp::InvalidInput("axis must look like name=v1,v2,...: " + spec);
    }
    std::vector<json> values;
    std::stringstream rest(spec.substr(eq + 1));
    std::string item;
    while (std::getline(rest, item, ',')) {
        values.push_back(parse_axis_value(item));
    }
    return {spec.substr(0, eq), values};
}

void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    out << j.dump(1) << "\n";
}

void print_summary(const rsvp::EvalReport& r) {
    std::cout << "samples " << r.samples.size() << "  errored " << r.errored << "  gIoU " << r.giou << "  cIoU "
              << r.ciou;
    if (r.map) std::cout << "  mAP " << *r.map;
    std::cout << (r.failed ? "  FAILED" : "") << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-stage reasoning segmentation: region-aware visual prompting + mask backends"};
    app.require_subcommand(1);

    // render
    auto* render = app.add_subcommand("render", "write the annotated prompt images for one image");
    std::string render_image;
    std::string render_out = ".";
    RunFlags render_flags;
    render->add_option("--image", render_image)->required();
    render_flags.add_to(render);

    // infer
    auto* infer = app.add_subcommand("infer", "run one image + query through the pipeline");
    std::string infer_image, infer_query, infer_id = "infer";
    RunFlags infer_flags;
    infer->add_option("--image", infer_image)->required();
    infer->add_option("--query", infer_query)->required();
    infer->add_option("--id", infer_id, "sample id (scripted replies are looked up by it)");
    infer_flags.add_to(infer);

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a corpus");
    std::string eval_manifest, eval_root;
    RunFlags eval_flags;
    eval->add_option("--manifest", eval_manifest)->required();
    eval->add_option("--root", eval_root, "image root (defaults to the manifest's directory)");
    eval_flags.add_to(eval);

    // ablate
    auto* ablate = app.add_subcommand("ablate", "evaluate the cross product of config axes");
    std::string ablate_manifest, ablate_root;
    std::vector<std::string> ablate_axes;
    std::optional<int> ablate_cap;
    RunFlags ablate_flags;
    ablate->add_option("--manifest", ablate_manifest)->required();
    ablate->add_option("--root", ablate_root);
    ablate->add_option("--axis", ablate_axes, "name=v1,v2 (repeatable), e.g. density=5,9,13");
    ablate->add_option("--cap", ablate_cap, "maximum number of runs");
    ablate_flags.add_to(ablate);

    // import-reasonseg
    auto* imp_rs = app.add_subcommand("import-reasonseg", "convert a ReasonSeg split directory to a manifest");
    std::string rs_dir, rs_split = "test", rs_out;
    imp_rs->add_option("--dir", rs_dir)->required();
    imp_rs->add_option("--split", rs_split);
    imp_rs->add_option("--out,-o", rs_out)->required();

    // import-coco
    auto* imp_coco = app.add_subcommand("import-coco", "convert COCO instance annotations to a manifest");
    std::string coco_ann, coco_prefix, coco_split = "test", coco_out;
    imp_coco->add_option("--annotations", coco_ann)->required();
    imp_coco->add_option("--image-prefix", coco_prefix, "prepended to every file_name");
    imp_coco->add_option("--split", coco_split);
    imp_coco->add_option("--out,-o", coco_out)->required();

    // report
    auto* report = app.add_subcommand("report", "re-render report.json files as tables");
    std::vector<std::string> report_files;
    report->add_option("reports", report_files)->required();

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus with scripted replies");
    rsvp::SyntheticSpec synth_spec;
    std::string synth_out, synth_cover = "exact";
    RunFlags synth_flags;
    synth->add_option("--dir", synth_out)->required();
    synth->add_option("--seed", synth_spec.seed);
    synth->add_option("--count", synth_spec.count);
    synth->add_option("--cover", synth_cover, "exact or half");
    synth->add_option("--absent-every", synth_spec.absent_every);
    synth_flags.add_to(synth);

    CLI11_PARSE(app, argc, argv);

    try {
        if (render->parsed()) {
            const auto cfg = render_flags.resolve();
            const fs::path out = cfg.output_dir.empty() ? fs::path(render_out) : cfg.output_dir;
            fs::create_directories(out);
            const auto normalized = rsvp::normalize_image(rsvp::load_image(render_image), cfg.grid);
            rsvp::write_png(normalized, out / "normalized.png");
            if (cfg.visual_style == rsvp::VisualStyle::grid) {
                rsvp::write_png(rsvp::render_grid_prompt(normalized, cfg.grid), out / "grid.png");
            } else {
                const auto pair = rsvp::render_split_prompts(normalized, cfg.grid);
                rsvp::write_png(pair.row_annotated, out / "rows.png");
                rsvp::write_png(pair.col_annotated, out / "cols.png");
            }
            std::cout << "wrote prompt images to " << out.string() << "\n";
        } else if (infer->parsed()) {
            auto cfg = infer_flags.resolve();
            if (!infer_flags.seg) cfg.seg.type = "trivial";
            rsvp::Sample sample;
            sample.id = infer_id;
            sample.image_path = infer_image;
            sample.query = infer_query;
            sample.dims = rsvp::read_image_dims(infer_image);
            auto backends = rsvp::make_backends(cfg);
            cfg.fail_fast = true;
            const auto r = rsvp::run_sample(cfg, sample, backends);
            json out = rsvp::transcript_to_json(r.transcript);
            out["crop"] = r.crop ? json{{"x0", r.crop->x0}, {"y0", r.crop->y0}, {"x1", r.crop->x1}, {"y1", r.crop->y1}}
                                 : json(nullptr);
            out["mask_pixels"] = r.prediction.popcount();
            std::cout << out.dump(2) << "\n";
            if (!cfg.output_dir.empty()) {
                rsvp::Raster mask(r.prediction.width(), r.prediction.height());
                for (int y = 0; y < mask.height(); ++y)
                    for (int x = 0; x < mask.width(); ++x)
                        if (r.prediction.at(x, y)) mask.set(x, y, {255, 255, 255});
                rsvp::write_png(mask, cfg.output_dir / (infer_id + "_mask.png"));
            }
        } else if (eval->parsed()) {
            const auto cfg = eval_flags.resolve();
            const fs::path manifest = eval_manifest;
            const fs::path root = eval_root.empty() ? manifest.parent_path() : fs::path(eval_root);
            const auto corpus = rsvp::load_corpus(root, manifest);
            for (const auto& issue : corpus.issues) {
                std::cerr << "skipped entry " << issue.index << " (" << issue.id << "): " << issue.message << "\n";
            }
            const auto r = rsvp::run_eval(cfg, corpus);
            print_summary(r);
            return r.failed ? 1 : 0;
        } else if (ablate->parsed()) {
            auto cfg = ablate_flags.resolve();
            if (ablate_cap) cfg.ablation_cap = *ablate_cap;
            const fs::path manifest = ablate_manifest;
            const fs::path root = ablate_root.empty() ? manifest.parent_path() : fs::path(ablate_root);
            const auto corpus = rsvp::load_corpus(root, manifest);
            rsvp::AblationAxes axes;
            for (const auto& a : ablate_axes) axes.push_back(parse_axis(a));
            const auto result = rsvp::run_ablation(cfg, corpus, axes);
            std::cout << rsvp::ablation_table(result);
        } else if (imp_rs->parsed()) {
            write_json(rs_out, rsvp::import_reasonseg(rs_dir, rsvp::parse_split(rs_split)));
        } else if (imp_coco->parsed()) {
            write_json(coco_out, rsvp::import_coco(coco_ann, coco_prefix, rsvp::parse_split(coco_split)));
        } else if (report->parsed()) {
            for (const auto& file : report_files) {
                std::ifstream in(file);
                if (!in) throw rsvp::InvalidInput("cannot open " + file);
                std::cout << "<!-- " << file << " -->\n" << rsvp::report_markdown(rsvp::report_from_json(json::parse(in)));
            }
        } else if (synth->parsed()) {
            const auto cfg = synth_flags.resolve();
            synth_spec.grid = cfg.grid;
            synth_spec.output_dir = synth_out;
            if (synth_cover == "exact") {
                synth_spec.cover = rsvp::CoverMode::exact;
            } else if (synth_cover == "half") {
                synth_spec.cover = rsvp::CoverMode::half;
            } else {
                throw rsvp::InvalidInput("cover must be exact or half");
            }
            const auto corpus = rsvp::make_synthetic_corpus(synth_spec);
            std::cout << "manifest " << corpus.manifest.string() << "\nresponses " << corpus.responses_dir.string() << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
