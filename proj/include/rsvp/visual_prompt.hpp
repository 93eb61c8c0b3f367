#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "rsvp/geometry.hpp"
#include "rsvp/image.hpp"

namespace rsvp {

enum class PromptVariant {
    hierarchical,  // four-step chain of thought (variant A)
    plain,         // task statement plus schema (variant B)
};

enum class VisualStyle {
    split,  // separate row-strip and column-strip images
    grid,   // one image with numbered cells
    none,   // raw image only
};

std::string_view to_string(PromptVariant v);
std::string_view to_string(VisualStyle s);
PromptVariant parse_prompt_variant(std::string_view s);  // "A"/"hierarchical", "B"/"plain"
VisualStyle parse_visual_style(std::string_view s);

inline constexpr std::string_view kTemplateVersion = "v1";

// Drawing constants, in pixels on the normalized canvas.
inline constexpr int kLineThickness = 3;
inline constexpr int kGlyphScale = 4;                  // 5x7 cell font -> 20x28 glyphs
inline constexpr int kGlyphHeight = 7 * kGlyphScale;   // 28 px
inline constexpr int kLabelPadding = 4;
inline constexpr Rgb kLineColor{0, 255, 0};
inline constexpr Rgb kLabelBackground{0, 0, 0};
inline constexpr Rgb kLabelForeground{255, 255, 255};

struct AnnotatedImagePair {
    Raster row_annotated;  // rows horizontal strips, ids 1..rows top to bottom
    Raster col_annotated;  // cols vertical strips, ids 1..cols left to right
};

/// White digits on a black patch. Only digits and ',' are supported.
Raster render_label(std::string_view text);

AnnotatedImagePair render_split_prompts(const Raster& image, const GridSpec& grid);
/// Both line sets on one image; cells numbered 1..rows*cols row by row.
Raster render_grid_prompt(const Raster& image, const GridSpec& grid);

struct PromptText {
    std::string system_text;
    std::string user_text;
};

struct PromptBundle {
    std::string system_text;
    std::string user_text;
    /// Raw image first, then the annotated images for the chosen style.
    std::vector<Raster> images;
};

PromptText build_cot_prompt(std::string_view query, PromptVariant variant, const GridSpec& grid,
                            VisualStyle style = VisualStyle::split);

/// `image` must already be normalized to the grid's canvas.
PromptBundle build_prompt_bundle(const Raster& image, std::string_view query, PromptVariant variant,
                                 VisualStyle style, const GridSpec& grid);

}  // namespace rsvp
