#pragma once

#include <optional>
#include <span>

#include "rsvp/image.hpp"
#include "rsvp/mask.hpp"

namespace rsvp {

/// Region-division scheme: `rows` horizontal strips stacked top to bottom
/// and `cols` vertical strips left to right over a normalized canvas.
struct GridSpec {
    int rows = 9;
    int cols = 9;
    int norm_width = 1000;
    int norm_height = 1000;
    double padding_ratio = 0.20;

    /// Throws InvalidInput unless every strip is at least one pixel wide
    /// and the padding ratio lies in [0, 1].
    void validate() const;

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct CropRect {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    bool contains(const CropRect& other) const {
        return x0 <= other.x0 && y0 <= other.y0 && other.x1 <= x1 && other.y1 <= y1;
    }

    friend bool operator==(const CropRect&, const CropRect&) = default;
};

struct PaddingPx {
    int x = 0;
    int y = 0;
    friend bool operator==(const PaddingPx&, const PaddingPx&) = default;
};

/// Pixel offset of the k-th strip boundary, round(k * extent / count) with
/// ties away from zero. Boundaries 0 and `count` are the canvas edges.
/// Both the cropper and the prompt renderer use this.
int strip_boundary(int k, int extent, int count);

PaddingPx padding_pixels(const GridSpec& grid);

/// Pixel rectangle spanned by the row ids `ids_v` and column ids `ids_h`
/// (1-based), grown by the grid's padding and clamped to the canvas.
/// Ids outside [1, rows] / [1, cols] are clamped; only min and max matter.
/// Returns nullopt when either list is empty.
std::optional<CropRect> region_pixel_bounds(const GridSpec& grid, std::span<const int> ids_v,
                                            std::span<const int> ids_h);

/// Bilinear resize (pixel centers at +0.5, edge-clamped) to the grid's canvas.
Raster normalize_image(const Raster& image, const GridSpec& grid);
Raster resize_bilinear(const Raster& image, int width, int height);

Raster crop(const Raster& image, const CropRect& rect);
BinaryMask crop_mask(const BinaryMask& mask, const CropRect& rect);

/// Places a crop-space mask into an all-zero mask of `full_dims`.
BinaryMask paste_mask(const BinaryMask& crop_mask, const CropRect& rect, ImageDims full_dims);

/// Nearest-neighbour resample; source index floor((2i + 1) * src / (2 * dst)).
BinaryMask resize_mask_nearest(const BinaryMask& mask, int width, int height);

}  // namespace rsvp
