#pragma once

#include <chrono>
#include <memory>
#include <string>

#include <json.hpp>

#include "rsvp/geometry.hpp"
#include "rsvp/image.hpp"
#include "rsvp/mask.hpp"

namespace rsvp {

inline constexpr int kSegmenterInputSize = 224;

struct SegmentationRequest {
    Raster crop_image;
    std::string target_text;
    CropRect crop_rect;  // in normalized canvas coordinates
    /// Normalized-space ground truth; only the oracle backend reads it.
    std::shared_ptr<const BinaryMask> reference_mask;

    void validate() const;
};

class SegBackend {
public:
    virtual ~SegBackend() = default;
    virtual std::string id() const = 0;
    virtual int max_parallelism() const = 0;
    /// Mask with the crop's dimensions.
    virtual BinaryMask segment(const SegmentationRequest& req) = 0;
};

/// Baseline: the whole crop.
class FullCropSegmenter final : public SegBackend {
public:
    std::string id() const override { return "trivial"; }
    int max_parallelism() const override { return 64; }
    BinaryMask segment(const SegmentationRequest& req) override;
};

/// Verification harness: returns the reference mask restricted to the crop.
class OracleSegmenter final : public SegBackend {
public:
    std::string id() const override { return "oracle"; }
    int max_parallelism() const override { return 64; }
    BinaryMask segment(const SegmentationRequest& req) override;
};

BinaryMask oracle_segment(const BinaryMask& gt, const CropRect& rect);

struct RemoteSegmenterConfig {
    std::string base_url = "http://127.0.0.1:8000";
    std::string path = "/segment";
    int max_parallelism = 1;
    std::chrono::milliseconds timeout{60000};
};

/// HTTP mask service. Request {image: base64 PNG (224x224), text};
/// response {width, height, rle: COCO counts}.
class RemoteSegmenter final : public SegBackend {
public:
    explicit RemoteSegmenter(RemoteSegmenterConfig cfg);
    std::string id() const override;
    int max_parallelism() const override { return cfg_.max_parallelism; }
    BinaryMask segment(const SegmentationRequest& req) override;

    nlohmann::json build_request(const SegmentationRequest& req) const;
    /// Decodes a response body; throws ProtocolError on malformed payloads.
    static BinaryMask parse_response(const std::string& body);

private:
    RemoteSegmenterConfig cfg_;
};

nlohmann::json mask_to_json(const BinaryMask& mask);
/// Accepts {width, height, rle|counts} with counts as an array or COCO string.
BinaryMask mask_from_json(const nlohmann::json& j);

}  // namespace rsvp
