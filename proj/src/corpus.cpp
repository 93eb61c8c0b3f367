#include "rsvp/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "rsvp/errors.hpp"
#include "rsvp/metrics.hpp"
#include "rsvp/mllm_client.hpp"
#include "rsvp/segmentation_backend.hpp"

namespace rsvp {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Split s) {
    switch (s) {
        case Split::val: return "val";
        case Split::test: return "test";
        case Split::short_query: return "short_query";
        case Split::long_query: return "long_query";
    }
    return "test";
}

Split parse_split(std::string_view s) {
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    if (s == "short_query") return Split::short_query;
    if (s == "long_query") return Split::long_query;
    throw InvalidInput("unknown split '" + std::string(s) + "'");
}

Raster Sample::load_image() const {
    return rsvp::load_image(image_path);
}

BinaryMask Sample::ground_truth() const {
    BinaryMask out(dims.width, dims.height);
    for (const auto& m : gt_masks) {
        out |= m;
    }
    return out;
}

BinaryMask rasterize_polygon(std::span<const double> flat, ImageDims dims) {
    if (flat.size() % 2 != 0) {
        throw FormatError("polygon has an odd number of coordinates");
    }
    BinaryMask out(dims.width, dims.height);
    const std::size_t n = flat.size() / 2;
    if (n < 3) {
        return out;
    }
    std::vector<double> xs;
    for (int y = 0; y < dims.height; ++y) {
        const double yc = y + 0.5;
        xs.clear();
        for (std::size_t i = 0; i < n; ++i) {
            const double ax = flat[2 * i];
            const double ay = flat[2 * i + 1];
            const double bx = flat[2 * ((i + 1) % n)];
            const double by = flat[2 * ((i + 1) % n) + 1];
            // Half-open in y so shared vertices are counted once.
            if ((ay > yc) != (by > yc)) {
                xs.push_back(ax + (yc - ay) * (bx - ax) / (by - ay));
            }
        }
        std::sort(xs.begin(), xs.end());
        // Centers with s[2k] <= xc < s[2k+1] have an odd crossing count to their right.
        for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
            const int first = std::max(0, static_cast<int>(std::ceil(xs[k] - 0.5)));
            const int last = std::min(dims.width, static_cast<int>(std::ceil(xs[k + 1] - 0.5)));
            for (int x = first; x < last; ++x) {
                out.set(x, y);
            }
        }
    }
    return out;
}

BinaryMask rasterize_polygons(const std::vector<std::vector<double>>& rings, ImageDims dims) {
    BinaryMask out(dims.width, dims.height);
    for (const auto& ring : rings) {
        out |= rasterize_polygon(ring, dims);
    }
    return out;
}

BinaryMask decode_annotation(const json& annotation, ImageDims dims) {
    if (!annotation.is_object()) {
        throw FormatError("annotation must be an object");
    }
    const std::string type = annotation.value("type", "");
    const auto data = annotation.find("data");
    if (data == annotation.end()) {
        throw FormatError("annotation has no data");
    }
    if (type == "polygon") {
        if (!data->is_array()) {
            throw FormatError("polygon data must be a list");
        }
        std::vector<std::vector<double>> rings;
        if (!data->empty() && (*data)[0].is_number()) {
            rings.push_back(data->get<std::vector<double>>());
        } else {
            for (const auto& ring : *data) {
                rings.push_back(ring.get<std::vector<double>>());
            }
        }
        return rasterize_polygons(rings, dims);
    }
    if (type == "rle") {
        BinaryMask m = mask_from_json(*data);
        if (m.width() != dims.width || m.height() != dims.height) {
            throw FormatError("rle mask is " + std::to_string(m.width()) + "x" + std::to_string(m.height()) +
                              " but the image is " + std::to_string(dims.width) + "x" +
                              std::to_string(dims.height));
        }
        return m;
    }
    throw FormatError("unknown annotation type '" + type + "'");
}

namespace {

Sample load_entry(const json& e, const fs::path& root) {
    if (!e.is_object()) {
        throw FormatError("manifest entry is not an object");
    }
    Sample s;
    s.id = e.at("id").get<std::string>();
    if (s.id.empty()) {
        throw FormatError("empty sample id");
    }
    s.query = e.at("query").get<std::string>();
    s.split = parse_split(e.value("split", "test"));
    if (const auto c = e.find("category"); c != e.end() && c->is_string()) {
        s.category = c->get<std::string>();
    }
    const fs::path rel = e.at("image").get<std::string>();
    s.image_path = rel.is_absolute() ? rel : root / rel;
    if (!fs::is_regular_file(s.image_path)) {
        throw CorpusError("image not found: " + s.image_path.string());
    }
    s.dims = read_image_dims(s.image_path);
    if (s.dims.width <= 0 || s.dims.height <= 0) {
        throw FormatError("image has zero size: " + s.image_path.string());
    }
    std::vector<const json*> annotations;
    if (const auto a = e.find("annotation"); a != e.end() && !a->is_null()) {
        annotations.push_back(&*a);
    }
    if (const auto a = e.find("annotations"); a != e.end() && !a->is_null()) {
        if (!a->is_array()) {
            throw FormatError("annotations must be a list");
        }
        for (const auto& item : *a) {
            annotations.push_back(&item);
        }
    }
    for (const json* a : annotations) {
        s.gt_masks.push_back(decode_annotation(*a, s.dims));
    }
    return s;
}

}  // namespace

Corpus load_corpus(const fs::path& root, const fs::path& manifest) {
    std::ifstream in(manifest);
    if (!in) {
        throw CorpusError("cannot open manifest " + manifest.string());
    }
    const json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw CorpusError("manifest is not a JSON object: " + manifest.string());
    }
    if (doc.value("version", 0) != kManifestVersion) {
        throw CorpusError("unsupported manifest version in " + manifest.string());
    }
    const auto entries = doc.find("samples");
    if (entries == doc.end() || !entries->is_array()) {
        throw CorpusError("manifest has no samples list");
    }

    Corpus corpus;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < entries->size(); ++i) {
        const auto& e = (*entries)[i];
        const std::string id = e.is_object() ? e.value("id", "") : "";
        try {
            Sample s = load_entry(e, root);
            if (!seen.insert(s.id).second) {
                throw CorpusError("duplicate sample id '" + s.id + "'");
            }
            corpus.samples.push_back(std::move(s));
        } catch (const std::exception& ex) {
            corpus.issues.push_back({i, id, ex.what()});
        }
    }
    if (corpus.samples.empty()) {
        throw CorpusError("no valid samples in " + manifest.string() + " (" + std::to_string(corpus.issues.size()) +
                          " rejected)");
    }
    return corpus;
}

double SyntheticShape::area() const {
    switch (kind) {
        case Kind::rectangle: return (x1 - x0) * (y1 - y0);
        case Kind::ellipse: return std::numbers::pi * rx * ry;
        case Kind::none: return 0.0;
    }
    return 0.0;
}

double SyntheticShape::area_left_of(double cut) const {
    switch (kind) {
        case Kind::rectangle: return (std::clamp(cut, x0, x1) - x0) * (y1 - y0);
        case Kind::ellipse: {
            const double u = std::clamp((cut - cx) / rx, -1.0, 1.0);
            return rx * ry * (u * std::sqrt(1.0 - u * u) + std::asin(u) + std::numbers::pi / 2.0);
        }
        case Kind::none: return 0.0;
    }
    return 0.0;
}

bool SyntheticShape::contains(double px, double py) const {
    switch (kind) {
        case Kind::rectangle: return px >= x0 && px < x1 && py >= y0 && py < y1;
        case Kind::ellipse: {
            const double dx = (px - cx) / rx;
            const double dy = (py - cy) / ry;
            return dx * dx + dy * dy <= 1.0;
        }
        case Kind::none: return false;
    }
    return false;
}

namespace {

// mt19937_64 output is fully specified by the standard, unlike the
// distributions, so draws are built on it directly.
class SeededDraws {
public:
    explicit SeededDraws(std::uint64_t seed) : engine_(seed) {}
    int uniform(int lo, int hi) {
        return lo + static_cast<int>(engine_() % static_cast<std::uint64_t>(hi - lo + 1));
    }

private:
    std::mt19937_64 engine_;
};

struct NamedColor {
    const char* name;
    Rgb rgb;
};

constexpr NamedColor kShapeColors[] = {
    {"red", {220, 40, 40}},     {"blue", {40, 70, 220}},    {"yellow", {235, 205, 40}},
    {"purple", {140, 50, 170}}, {"orange", {240, 140, 30}}, {"cyan", {40, 200, 210}},
};

constexpr int kNativeSides[] = {200, 250, 500, 1000};

// Strip containing pixel offset `p` (1-based).
int strip_of(int p, int extent, int count) {
    for (int k = 1; k <= count; ++k) {
        if (p < strip_boundary(k, extent, count)) {
            return k;
        }
    }
    return count;
}

std::vector<int> id_range(int first, int last) {
    std::vector<int> ids;
    for (int k = first; k <= last; ++k) {
        ids.push_back(k);
    }
    return ids;
}

std::string scripted_reply(const RegionProposal& p, const std::string& shape_word) {
    std::ostringstream out;
    if (p.absent) {
        out << "Step 1 - Object class: the query asks for a " << shape_word << ".\n"
            << "Step 2 - Attributes: none observed.\n"
            << "Step 3 - Region IDs: no region contains such an object.\n"
            << "Step 4 - Rationale: " << p.rationale << "\n\n";
    } else {
        out << "Step 1 - Object class: the query refers to the " << p.object_name << ".\n"
            << "Step 2 - Attributes: it is " << p.attributes.front() << " and " << p.attributes.back() << ".\n"
            << "Step 3 - Region IDs: it spans the listed rows and columns.\n"
            << "Step 4 - Rationale: " << p.rationale << "\n\n";
    }
    out << "```json\n" << proposal_to_json(p).dump(2) << "\n```\n";
    return out.str();
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec) {
    if (spec.count < 1) {
        throw InvalidInput("synthetic corpus needs at least one sample");
    }
    spec.grid.validate();
    const fs::path out_dir = spec.output_dir;
    fs::create_directories(out_dir / "images");
    fs::create_directories(out_dir / "responses");
    SeededDraws draw(spec.seed);
    const GridSpec& grid = spec.grid;

    json entries = json::array();
    std::vector<SyntheticShape> shapes;
    for (int i = 0; i < spec.count; ++i) {
        char id_buf[32];
        std::snprintf(id_buf, sizeof id_buf, "syn%04d", i);
        const std::string id = id_buf;
        const int w = kNativeSides[draw.uniform(0, 3)];
        const int h = kNativeSides[draw.uniform(0, 3)];
        const Rgb background{static_cast<std::uint8_t>(draw.uniform(90, 160)),
                             static_cast<std::uint8_t>(draw.uniform(90, 160)),
                             static_cast<std::uint8_t>(draw.uniform(90, 160))};
        const NamedColor color = kShapeColors[draw.uniform(0, 5)];
        const bool absent = spec.absent_every > 0 && (i + 1) % spec.absent_every == 0;

        SyntheticShape shape;
        if (!absent) {
            if (draw.uniform(0, 1) == 0) {
                shape.kind = SyntheticShape::Kind::rectangle;
                const int sw = draw.uniform(w / 8, w / 2);
                const int sh = draw.uniform(h / 8, h / 2);
                shape.x0 = draw.uniform(0, w - sw);
                shape.y0 = draw.uniform(0, h - sh);
                shape.x1 = shape.x0 + sw;
                shape.y1 = shape.y0 + sh;
            } else {
                shape.kind = SyntheticShape::Kind::ellipse;
                shape.rx = draw.uniform(w / 10, w / 4);
                shape.ry = draw.uniform(h / 10, h / 4);
                shape.cx = draw.uniform(static_cast<int>(shape.rx) + 1, w - static_cast<int>(shape.rx) - 1);
                shape.cy = draw.uniform(static_cast<int>(shape.ry) + 1, h - static_cast<int>(shape.ry) - 1);
            }
        }
        const std::string shape_word = shape.kind == SyntheticShape::Kind::ellipse ? "ellipse" : "rectangle";

        Raster image(w, h, background);
        BinaryMask gt(w, h);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (shape.contains(x + 0.5, y + 0.5)) {
                    image.set(x, y, color.rgb);
                    gt.set(x, y);
                }
            }
        }
        const fs::path image_rel = fs::path("images") / (id + ".png");
        write_png(image, out_dir / image_rel);

        RegionProposal reply;
        std::string query;
        if (absent) {
            query = std::string("Point out the ") + color.name + " triangle in this picture.";
            reply.rationale = "The picture shows only a plain background; there is no triangle.";
            reply.absent = true;
        } else {
            query = std::string("Which object in this picture is the ") + color.name + " " + shape_word + "?";
            const BinaryMask norm = resize_mask_nearest(gt, grid.norm_width, grid.norm_height);
            int bx0 = grid.norm_width, by0 = grid.norm_height, bx1 = -1, by1 = -1;
            for (int y = 0; y < norm.height(); ++y) {
                for (int x = 0; x < norm.width(); ++x) {
                    if (norm.at(x, y)) {
                        bx0 = std::min(bx0, x);
                        bx1 = std::max(bx1, x);
                        by0 = std::min(by0, y);
                        by1 = std::max(by1, y);
                    }
                }
            }
            int last_col = strip_of(bx1, grid.norm_width, grid.cols);
            if (spec.cover == CoverMode::half) {
                const int center = (bx0 + bx1) / 2;
                last_col = strip_of(center, grid.norm_width, grid.cols);
            }
            reply.object_name = shape_word;
            reply.attributes = {color.name, shape.kind == SyntheticShape::Kind::ellipse ? "round" : "rectangular"};
            reply.ids_v = id_range(strip_of(by0, grid.norm_height, grid.rows), strip_of(by1, grid.norm_height, grid.rows));
            reply.ids_h = id_range(strip_of(bx0, grid.norm_width, grid.cols), last_col);
            reply.rationale = std::string("The only ") + color.name + " " + shape_word +
                              " in the picture occupies these regions.";
        }
        std::ofstream(out_dir / "responses" / (id + ".txt"), std::ios::binary) << scripted_reply(reply, absent ? "triangle" : shape_word);

        json entry{{"id", id}, {"image", image_rel.generic_string()}, {"query", query}, {"split", "test"},
                   {"category", absent ? "triangle" : shape_word}};
        if (!absent) {
            entry["annotations"] = json::array({json{{"type", "rle"}, {"data", mask_to_json(gt)}}});
        }
        entries.push_back(std::move(entry));
        shapes.push_back(shape);
    }

    const json manifest{{"version", kManifestVersion}, {"samples", std::move(entries)}};
    const fs::path manifest_path = out_dir / "manifest.json";
    std::ofstream(manifest_path) << manifest.dump(1) << "\n";

    SyntheticCorpus result{manifest_path, out_dir / "responses", load_corpus(out_dir, manifest_path), std::move(shapes)};
    return result;
}

namespace {

json read_json_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) {
        throw CorpusError("cannot open " + p.string());
    }
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) {
        throw CorpusError("invalid JSON in " + p.string());
    }
    return j;
}

}  // namespace

json import_reasonseg(const fs::path& dir, Split split) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".json") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());

    json samples = json::array();
    for (const auto& file : files) {
        const json src = read_json_file(file);
        fs::path image;
        for (const char* ext : {".jpg", ".jpeg", ".png"}) {
            auto candidate = file;
            candidate.replace_extension(ext);
            if (fs::exists(candidate)) {
                image = candidate.filename();
                break;
            }
        }
        if (image.empty()) {
            image = file.stem().string() + ".jpg";
        }
        json rings = json::array();
        for (const auto& shape : src.value("shapes", json::array())) {
            if (shape.value("label", "") != "target") continue;
            std::vector<double> flat;
            for (const auto& pt : shape.value("points", json::array())) {
                flat.push_back(pt.at(0).get<double>());
                flat.push_back(pt.at(1).get<double>());
            }
            rings.push_back(std::move(flat));
        }
        Split sample_split = split;
        if (split == Split::test) {
            sample_split = src.value("is_sentence", false) ? Split::long_query : Split::short_query;
        }
        const auto texts = src.value("text", json::array());
        for (std::size_t t = 0; t < texts.size(); ++t) {
            json s{{"id", file.stem().string() + "#" + std::to_string(t)},
                   {"image", image.generic_string()},
                   {"query", texts[t].get<std::string>()},
                   {"split", to_string(sample_split)}};
            if (!rings.empty()) {
                s["annotations"] = json::array({json{{"type", "polygon"}, {"data", rings}}});
            }
            samples.push_back(std::move(s));
        }
    }
    return json{{"version", kManifestVersion}, {"samples", std::move(samples)}};
}

json import_coco(const fs::path& annotations, const std::string& image_prefix, Split split) {
    const json src = read_json_file(annotations);
    std::map<std::int64_t, std::string> category_names;
    for (const auto& c : src.value("categories", json::array())) {
        category_names[c.at("id").get<std::int64_t>()] = c.at("name").get<std::string>();
    }
    // image id -> category id -> annotations, both in ascending id order.
    std::map<std::int64_t, std::map<std::int64_t, json>> grouped;
    for (const auto& a : src.value("annotations", json::array())) {
        const auto image_id = a.at("image_id").get<std::int64_t>();
        const auto category_id = a.at("category_id").get<std::int64_t>();
        const auto& seg = a.at("segmentation");
        json ann;
        if (seg.is_array()) {
            ann = json{{"type", "polygon"}, {"data", seg}};
        } else {
            const auto size = seg.at("size");
            ann = json{{"type", "rle"},
                       {"data", {{"height", size.at(0)}, {"width", size.at(1)}, {"counts", seg.at("counts")}}}};
        }
        auto& slot = grouped[image_id][category_id];
        if (slot.is_null()) slot = json::array();
        slot.push_back(std::move(ann));
    }
    json samples = json::array();
    for (const auto& img : src.value("images", json::array())) {
        const auto image_id = img.at("id").get<std::int64_t>();
        const auto it = grouped.find(image_id);
        if (it == grouped.end()) continue;
        const fs::path file = fs::path(image_prefix) / img.at("file_name").get<std::string>();
        for (const auto& [category_id, anns] : it->second) {
            const auto name_it = category_names.find(category_id);
            const std::string name = name_it == category_names.end() ? std::to_string(category_id) : name_it->second;
            samples.push_back(json{{"id", std::to_string(image_id) + "_" + std::to_string(category_id)},
                                   {"image", file.generic_string()},
                                   {"query", name},
                                   {"split", to_string(split)},
                                   {"category", name},
                                   {"annotations", anns}});
        }
    }
    return json{{"version", kManifestVersion}, {"samples", std::move(samples)}};
}

}  // namespace rsvp
