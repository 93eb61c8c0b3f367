#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rsvp/geometry.hpp"
#include "rsvp/image.hpp"
#include "rsvp/mask.hpp"

namespace rsvp {

inline constexpr int kManifestVersion = 1;

enum class Split { val, test, short_query, long_query };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct Sample {
    std::string id;
    std::filesystem::path image_path;
    std::string query;
    ImageDims dims;                     // native resolution
    std::vector<BinaryMask> gt_masks;   // each at native resolution; may be empty
    Split split = Split::test;
    std::optional<std::string> category;

    /// Decodes the image from disk; samples hold only the path.
    Raster load_image() const;
    /// Union of all ground-truth masks (all zeros for absence samples).
    BinaryMask ground_truth() const;
};

struct LoadIssue {
    std::size_t index = 0;  // position in the manifest
    std::string id;
    std::string message;
};

struct Corpus {
    std::vector<Sample> samples;     // manifest order
    std::vector<LoadIssue> issues;   // entries that were skipped
};

/// Image paths in the manifest resolve against `root`. Bad entries are
/// skipped and reported; throws CorpusError when nothing loads.
Corpus load_corpus(const std::filesystem::path& root, const std::filesystem::path& manifest);

/// Even-odd fill sampled at pixel centers. `flat` is x0, y0, x1, y1, ...
BinaryMask rasterize_polygon(std::span<const double> flat, ImageDims dims);
/// Union of several rings, each filled with the even-odd rule.
BinaryMask rasterize_polygons(const std::vector<std::vector<double>>& rings, ImageDims dims);

/// Decodes one manifest annotation ({type: polygon|rle, data}).
BinaryMask decode_annotation(const nlohmann::json& annotation, ImageDims dims);

// Synthetic corpora for desk-scale verification.

enum class CoverMode {
    exact,  // scripted ids span the whole ground truth
    half,   // scripted columns stop at the column holding the shape's center
};

struct SyntheticSpec {
    std::uint64_t seed = 7;
    int count = 50;
    CoverMode cover = CoverMode::exact;
    GridSpec grid;          // ids in the scripted replies refer to this grid
    int absent_every = 0;   // every k-th sample has no target; 0 disables
    std::filesystem::path output_dir;
};

struct SyntheticShape {
    enum class Kind { none, rectangle, ellipse } kind = Kind::none;
    // Rectangle: [x0, x1) x [y0, y1). Ellipse: center and radii.
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    double cx = 0, cy = 0, rx = 0, ry = 0;

    double area() const;
    /// Analytic area of the part of the shape left of the vertical line x = cut.
    double area_left_of(double cut) const;
    bool contains(double px, double py) const;
};

struct SyntheticCorpus {
    std::filesystem::path manifest;
    std::filesystem::path responses_dir;  // {id}.txt scripted replies
    Corpus corpus;
    std::vector<SyntheticShape> shapes;   // parallel to corpus.samples
};

SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec);

/// Converts a ReasonSeg directory (image + LabelMe-style json pairs) into a
/// manifest. Every query of an image becomes its own sample; for split
/// "test" the sentence flag picks short_query or long_query.
nlohmann::json import_reasonseg(const std::filesystem::path& dir, Split split);

/// Converts a COCO instances file into a manifest with one sample per
/// (image, category) pair; the category name is the query.
nlohmann::json import_coco(const std::filesystem::path& annotations, const std::string& image_prefix,
                           Split split);

}  // namespace rsvp
