#include "rsvp/segmentation_backend.hpp"

#include "rsvp/encoding.hpp"
#include "rsvp/errors.hpp"
#include "rsvp/http.hpp"
#include "rsvp/metrics.hpp"

namespace rsvp {

using nlohmann::json;

void SegmentationRequest::validate() const {
    if (crop_image.empty()) {
        throw InvalidInput("segmentation request has an empty crop");
    }
    if (target_text.empty()) {
        throw InvalidInput("segmentation request has no target text");
    }
    if (crop_image.width() != crop_rect.width() || crop_image.height() != crop_rect.height()) {
        throw InvalidInput("crop image does not match its rect");
    }
}

BinaryMask FullCropSegmenter::segment(const SegmentationRequest& req) {
    req.validate();
    return BinaryMask(req.crop_image.width(), req.crop_image.height(), true);
}

BinaryMask oracle_segment(const BinaryMask& gt, const CropRect& rect) {
    return crop_mask(gt, rect);
}

BinaryMask OracleSegmenter::segment(const SegmentationRequest& req) {
    req.validate();
    if (!req.reference_mask) {
        throw BackendError("oracle segmenter needs a reference mask");
    }
    return oracle_segment(*req.reference_mask, req.crop_rect);
}

RemoteSegmenter::RemoteSegmenter(RemoteSegmenterConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.base_url.empty()) {
        throw ConfigurationError("remote segmenter needs a url");
    }
    if (cfg_.max_parallelism < 1) {
        throw ConfigurationError("max_parallelism must be at least 1");
    }
}

std::string RemoteSegmenter::id() const {
    return "remote:" + cfg_.base_url + cfg_.path;
}

nlohmann::json RemoteSegmenter::build_request(const SegmentationRequest& req) const {
    const Raster resized = resize_bilinear(req.crop_image, kSegmenterInputSize, kSegmenterInputSize);
    return json{{"image", base64_encode(encode_png(resized))}, {"text", req.target_text}};
}

nlohmann::json mask_to_json(const BinaryMask& mask) {
    return json{{"width", mask.width()}, {"height", mask.height()}, {"rle", rle_encode(mask)}};
}

BinaryMask mask_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw FormatError("mask must be a JSON object");
    }
    const auto w = j.find("width");
    const auto h = j.find("height");
    if (w == j.end() || h == j.end() || !w->is_number_integer() || !h->is_number_integer()) {
        throw FormatError("mask needs integer width and height");
    }
    auto counts_it = j.find("rle");
    if (counts_it == j.end()) {
        counts_it = j.find("counts");
    }
    if (counts_it == j.end()) {
        throw FormatError("mask has no rle counts");
    }
    std::vector<std::uint32_t> counts;
    if (counts_it->is_string()) {
        counts = rle_counts_from_string(counts_it->get<std::string>());
    } else if (counts_it->is_array()) {
        for (const auto& c : *counts_it) {
            if (!c.is_number_integer() || c.get<std::int64_t>() < 0 ||
                c.get<std::int64_t>() > static_cast<std::int64_t>(UINT32_MAX)) {
                throw FormatError("rle counts must be non-negative 32-bit integers");
            }
            counts.push_back(c.get<std::uint32_t>());
        }
    } else {
        throw FormatError("rle counts must be an array or string");
    }
    return rle_decode(counts, w->get<int>(), h->get<int>());
}

BinaryMask RemoteSegmenter::parse_response(const std::string& body) {
    const json j = json::parse(body, nullptr, false);
    if (j.is_discarded()) {
        throw ProtocolError("mask response is not JSON");
    }
    try {
        return mask_from_json(j);
    } catch (const FormatError& e) {
        throw ProtocolError(std::string("malformed mask response: ") + e.what());
    }
}

BinaryMask RemoteSegmenter::segment(const SegmentationRequest& req) {
    req.validate();
    const auto res = post_json(cfg_.base_url, cfg_.path, build_request(req).dump(), {}, cfg_.timeout);
    if (res.status != 200) {
        throw BackendError("mask server returned HTTP " + std::to_string(res.status));
    }
    const BinaryMask mask = parse_response(res.body);
    if (mask.width() == 0 || mask.height() == 0) {
        throw ProtocolError("mask server returned an empty mask");
    }
    return resize_mask_nearest(mask, req.crop_image.width(), req.crop_image.height());
}

}  // namespace rsvp
