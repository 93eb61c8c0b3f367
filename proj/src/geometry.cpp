#include "rsvp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rsvp/errors.hpp"

namespace rsvp {

void GridSpec::validate() const {
    if (rows < 1 || cols < 1) {
        throw InvalidInput("grid needs at least one row and one column");
    }
    if (norm_height < rows || norm_width < cols) {
        throw InvalidInput("grid strips must be at least one pixel (" + std::to_string(rows) + "x" +
                           std::to_string(cols) + " on " + std::to_string(norm_width) + "x" +
                           std::to_string(norm_height) + ")");
    }
    if (!(padding_ratio >= 0.0 && padding_ratio <= 1.0)) {
        throw InvalidInput("padding ratio must lie in [0, 1]");
    }
}

int strip_boundary(int k, int extent, int count) {
    // floor(k*E/n + 1/2) in exact integer arithmetic; all operands are non-negative.
    const auto num = 2 * std::int64_t{k} * extent + count;
    return static_cast<int>(num / (2 * std::int64_t{count}));
}

PaddingPx padding_pixels(const GridSpec& grid) {
    // std::lround rounds half away from zero.
    const double px = grid.padding_ratio * static_cast<double>(grid.norm_width) / grid.cols;
    const double py = grid.padding_ratio * static_cast<double>(grid.norm_height) / grid.rows;
    return {static_cast<int>(std::lround(px)), static_cast<int>(std::lround(py))};
}

std::optional<CropRect> region_pixel_bounds(const GridSpec& grid, std::span<const int> ids_v,
                                            std::span<const int> ids_h) {
    if (ids_v.empty() || ids_h.empty()) {
        return std::nullopt;
    }
    const auto [min_v, max_v] = std::minmax_element(ids_v.begin(), ids_v.end());
    const auto [min_h, max_h] = std::minmax_element(ids_h.begin(), ids_h.end());
    const int start_v = std::clamp(*min_v, 1, grid.rows);
    const int end_v = std::clamp(*max_v, 1, grid.rows);
    const int start_h = std::clamp(*min_h, 1, grid.cols);
    const int end_h = std::clamp(*max_h, 1, grid.cols);

    const PaddingPx pad = padding_pixels(grid);
    CropRect r;
    r.y0 = std::max(0, strip_boundary(start_v - 1, grid.norm_height, grid.rows) - pad.y);
    r.y1 = std::min(grid.norm_height, strip_boundary(end_v, grid.norm_height, grid.rows) + pad.y);
    r.x0 = std::max(0, strip_boundary(start_h - 1, grid.norm_width, grid.cols) - pad.x);
    r.x1 = std::min(grid.norm_width, strip_boundary(end_h, grid.norm_width, grid.cols) + pad.x);
    return r;
}

namespace {

struct Tap {
    int lo;
    int hi;
    double frac;
};

// Sample positions for one axis: destination center (i + 0.5) maps to
// source coordinate (i + 0.5) * src / dst - 0.5, clamped to the edge.
std::vector<Tap> bilinear_taps(int src, int dst) {
    std::vector<Tap> taps(static_cast<std::size_t>(dst));
    const double scale = static_cast<double>(src) / dst;
    for (int i = 0; i < dst; ++i) {
        double s = (i + 0.5) * scale - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(src - 1));
        const int lo = static_cast<int>(std::floor(s));
        const int hi = std::min(lo + 1, src - 1);
        taps[static_cast<std::size_t>(i)] = {lo, hi, s - lo};
    }
    return taps;
}

}  // namespace

Raster resize_bilinear(const Raster& image, int width, int height) {
    if (image.empty()) {
        throw InvalidInput("cannot resize an empty image");
    }
    if (width <= 0 || height <= 0) {
        throw InvalidInput("resize target must be positive");
    }
    if (image.width() == width && image.height() == height) {
        return image;
    }
    const auto xs = bilinear_taps(image.width(), width);
    const auto ys = bilinear_taps(image.height(), height);
    Raster out(width, height);
    const auto src = image.bytes();
    const auto sw = static_cast<std::size_t>(image.width());
    auto dst = out.bytes();
    for (int y = 0; y < height; ++y) {
        const Tap ty = ys[static_cast<std::size_t>(y)];
        const std::uint8_t* row0 = src.data() + static_cast<std::size_t>(ty.lo) * sw * 3;
        const std::uint8_t* row1 = src.data() + static_cast<std::size_t>(ty.hi) * sw * 3;
        std::uint8_t* o = dst.data() + static_cast<std::size_t>(y) * static_cast<std::size_t>(width) * 3;
        for (int x = 0; x < width; ++x) {
            const Tap tx = xs[static_cast<std::size_t>(x)];
            const auto a = static_cast<std::size_t>(tx.lo) * 3;
            const auto b = static_cast<std::size_t>(tx.hi) * 3;
            for (int c = 0; c < 3; ++c) {
                const double top = row0[a + c] + (row0[b + c] - row0[a + c]) * tx.frac;
                const double bot = row1[a + c] + (row1[b + c] - row1[a + c]) * tx.frac;
                const double v = top + (bot - top) * ty.frac;
                o[static_cast<std::size_t>(x) * 3 + c] =
                    static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return out;
}

Raster normalize_image(const Raster& image, const GridSpec& grid) {
    if (image.empty()) {
        throw InvalidInput("cannot normalize an empty image");
    }
    return resize_bilinear(image, grid.norm_width, grid.norm_height);
}

namespace {

void check_rect_inside(const CropRect& rect, int width, int height) {
    if (rect.x0 < 0 || rect.y0 < 0 || rect.x1 > width || rect.y1 > height || rect.x0 >= rect.x1 ||
        rect.y0 >= rect.y1) {
        throw ContractViolation("crop rect [" + std::to_string(rect.x0) + "," + std::to_string(rect.x1) +
                                ")x[" + std::to_string(rect.y0) + "," + std::to_string(rect.y1) +
                                ") is not inside " + std::to_string(width) + "x" + std::to_string(height));
    }
}

}  // namespace

Raster crop(const Raster& image, const CropRect& rect) {
    check_rect_inside(rect, image.width(), image.height());
    Raster out(rect.width(), rect.height());
    const auto row_bytes = static_cast<std::size_t>(rect.width()) * 3;
    for (int y = 0; y < rect.height(); ++y) {
        const auto* src = image.bytes().data() +
                          (static_cast<std::size_t>(rect.y0 + y) * static_cast<std::size_t>(image.width()) +
                           static_cast<std::size_t>(rect.x0)) * 3;
        std::copy_n(src, row_bytes, out.bytes().data() + static_cast<std::size_t>(y) * row_bytes);
    }
    return out;
}

BinaryMask crop_mask(const BinaryMask& mask, const CropRect& rect) {
    check_rect_inside(rect, mask.width(), mask.height());
    BinaryMask out(rect.width(), rect.height());
    for (int y = 0; y < rect.height(); ++y) {
        for (int x = 0; x < rect.width(); ++x) {
            out.set(x, y, mask.at(rect.x0 + x, rect.y0 + y));
        }
    }
    return out;
}

BinaryMask paste_mask(const BinaryMask& crop_mask, const CropRect& rect, ImageDims full_dims) {
    if (crop_mask.width() != rect.width() || crop_mask.height() != rect.height()) {
        throw InvalidInput("crop mask is " + std::to_string(crop_mask.width()) + "x" +
                           std::to_string(crop_mask.height()) + " but rect is " + std::to_string(rect.width()) +
                           "x" + std::to_string(rect.height()));
    }
    if (rect.x0 < 0 || rect.y0 < 0 || rect.x1 > full_dims.width || rect.y1 > full_dims.height) {
        throw InvalidInput("rect does not fit inside the full mask");
    }
    BinaryMask out(full_dims.width, full_dims.height);
    for (int y = 0; y < rect.height(); ++y) {
        for (int x = 0; x < rect.width(); ++x) {
            if (crop_mask.at(x, y)) {
                out.set(rect.x0 + x, rect.y0 + y);
            }
        }
    }
    return out;
}

BinaryMask resize_mask_nearest(const BinaryMask& mask, int width, int height) {
    if (width < 0 || height < 0) {
        throw InvalidInput("resize target must be non-negative");
    }
    if (mask.width() == width && mask.height() == height) {
        return mask;
    }
    if (mask.width() == 0 || mask.height() == 0) {
        throw InvalidInput("cannot resample an empty mask");
    }
    auto index_map = [](int src, int dst) {
        std::vector<int> m(static_cast<std::size_t>(dst));
        for (int i = 0; i < dst; ++i) {
            m[static_cast<std::size_t>(i)] =
                static_cast<int>((2 * std::int64_t{i} + 1) * src / (2 * std::int64_t{dst}));
        }
        return m;
    };
    const auto xs = index_map(mask.width(), width);
    const auto ys = index_map(mask.height(), height);
    BinaryMask out(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (mask.at(xs[static_cast<std::size_t>(x)], ys[static_cast<std::size_t>(y)])) {
                out.set(x, y);
            }
        }
    }
    return out;
}

}  // namespace rsvp
