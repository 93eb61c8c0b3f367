#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rsvp/mask.hpp"

namespace rsvp {

/// How a sample whose prediction and ground truth are both empty scores.
enum class EmptyPairPolicy {
    score_one,   // a correct "no target" answer counts as IoU 1
    score_zero,
};

struct IoURecord {
    std::string sample_id;
    std::uint64_t intersection = 0;
    std::uint64_t union_ = 0;
    double iou = 0.0;

    friend bool operator==(const IoURecord&, const IoURecord&) = default;
};

IoURecord iou(const BinaryMask& a, const BinaryMask& b, EmptyPairPolicy policy = EmptyPairPolicy::score_one);
// Builds a record from counts, applying the same empty-pair rule.
IoURecord make_record(std::string sample_id, std::uint64_t intersection, std::uint64_t union_,
                      EmptyPairPolicy policy = EmptyPairPolicy::score_one);

/// Mean of per-record IoU. Throws InvalidInput on an empty list.
double giou(std::span<const IoURecord> records);
/// Cumulative intersection over cumulative union; 1.0 when every union is empty.
double ciou(std::span<const IoURecord> records);

struct ScoredInstance {
    BinaryMask mask;
    double score = 1.0;
    std::string category;
};

struct GroundTruthInstance {
    BinaryMask mask;
    std::string category;
};

struct ImageInstances {
    std::vector<ScoredInstance> predictions;
    std::vector<GroundTruthInstance> ground_truth;
};

std::vector<double> default_map_thresholds();  // 0.50, 0.55, ..., 0.95

struct MapResult {
    double map = 0.0;
    std::vector<double> thresholds;
    std::vector<std::string> categories;   // categories that have ground truth
    std::vector<std::vector<double>> ap;   // ap[threshold][category]
};

/// COCO-style instance evaluation: greedy matching by descending score,
/// 101-point interpolated AP, averaged over categories then thresholds.
MapResult map_eval(std::span<const ImageInstances> images,
                   std::span<const double> thresholds);
MapResult map_eval(std::span<const ImageInstances> images);

/// COCO run-length counts: column-major order, alternating runs, first run is zeros.
std::vector<std::uint32_t> rle_encode(const BinaryMask& mask);
/// Throws FormatError when the counts do not sum to width * height.
BinaryMask rle_decode(std::span<const std::uint32_t> counts, int width, int height);

/// COCO's compact string form of run-length counts.
std::vector<std::uint32_t> rle_counts_from_string(const std::string& s);
std::string rle_counts_to_string(std::span<const std::uint32_t> counts);

}  // namespace rsvp
