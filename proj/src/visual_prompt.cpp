#include "rsvp/visual_prompt.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>

#include "prompt_templates.inc"
#include "rsvp/errors.hpp"

namespace rsvp {

std::string_view to_string(PromptVariant v) {
    return v == PromptVariant::hierarchical ? "A" : "B";
}

std::string_view to_string(VisualStyle s) {
    switch (s) {
        case VisualStyle::split: return "split";
        case VisualStyle::grid: return "grid";
        case VisualStyle::none: return "none";
    }
    return "split";
}

PromptVariant parse_prompt_variant(std::string_view s) {
    if (s == "A" || s == "a" || s == "hierarchical") {
        return PromptVariant::hierarchical;
    }
    if (s == "B" || s == "b" || s == "plain") {
        return PromptVariant::plain;
    }
    throw InvalidInput("unknown prompt variant '" + std::string(s) + "'");
}

VisualStyle parse_visual_style(std::string_view s) {
    if (s == "split") return VisualStyle::split;
    if (s == "grid") return VisualStyle::grid;
    if (s == "none") return VisualStyle::none;
    throw InvalidInput("unknown visual style '" + std::string(s) + "'");
}

namespace {

// 5x7 cell font, one byte per row, bit 4 is the leftmost column.
using Glyph = std::array<std::uint8_t, 7>;

const Glyph* glyph_for(char c) {
    static const std::map<char, Glyph> font = {
        {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
        {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
        {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
        {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
        {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
        {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
        {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
        {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
        {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
        {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
        {',', {0x00, 0x00, 0x00, 0x00, 0x0c, 0x04, 0x08}},
    };
    const auto it = font.find(c);
    return it == font.end() ? nullptr : &it->second;
}

constexpr int kGlyphWidth = 5 * kGlyphScale;
constexpr int kGlyphGap = kGlyphScale;

void draw_hline(Raster& img, int boundary) {
    const int top = boundary - kLineThickness / 2;
    for (int y = std::max(0, top); y < std::min(img.height(), top + kLineThickness); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            img.set(x, y, kLineColor);
        }
    }
}

void draw_vline(Raster& img, int boundary) {
    const int left = boundary - kLineThickness / 2;
    for (int y = 0; y < img.height(); ++y) {
        for (int x = std::max(0, left); x < std::min(img.width(), left + kLineThickness); ++x) {
            img.set(x, y, kLineColor);
        }
    }
}

// Blits the label patch centered on (cx, cy), clipped to the canvas.
void draw_label(Raster& img, std::string_view text, int cx, int cy) {
    const Raster patch = render_label(text);
    const int left = cx - patch.width() / 2;
    const int top = cy - patch.height() / 2;
    for (int y = 0; y < patch.height(); ++y) {
        const int ty = top + y;
        if (ty < 0 || ty >= img.height()) continue;
        for (int x = 0; x < patch.width(); ++x) {
            const int tx = left + x;
            if (tx < 0 || tx >= img.width()) continue;
            img.set(tx, ty, patch.at(x, y));
        }
    }
}

int strip_center(int k, int extent, int count) {
    return (strip_boundary(k - 1, extent, count) + strip_boundary(k, extent, count)) / 2;
}

void check_normalized(const Raster& image, const GridSpec& grid) {
    grid.validate();
    if (image.width() != grid.norm_width || image.height() != grid.norm_height) {
        throw InvalidInput("visual prompts need a " + std::to_string(grid.norm_width) + "x" +
                           std::to_string(grid.norm_height) + " image, got " + std::to_string(image.width()) +
                           "x" + std::to_string(image.height()));
    }
}

}  // namespace

Raster render_label(std::string_view text) {
    if (text.empty()) {
        throw InvalidInput("empty label text");
    }
    const int n = static_cast<int>(text.size());
    const int width = 2 * kLabelPadding + n * kGlyphWidth + (n - 1) * kGlyphGap;
    const int height = 2 * kLabelPadding + kGlyphHeight;
    Raster patch(width, height, kLabelBackground);
    for (int i = 0; i < n; ++i) {
        const Glyph* g = glyph_for(text[static_cast<std::size_t>(i)]);
        if (g == nullptr) {
            throw InvalidInput("label font has no glyph for '" + std::string(1, text[static_cast<std::size_t>(i)]) +
                               "'");
        }
        const int ox = kLabelPadding + i * (kGlyphWidth + kGlyphGap);
        for (int row = 0; row < 7; ++row) {
            for (int col = 0; col < 5; ++col) {
                if (((*g)[static_cast<std::size_t>(row)] >> (4 - col)) & 1) {
                    for (int dy = 0; dy < kGlyphScale; ++dy) {
                        for (int dx = 0; dx < kGlyphScale; ++dx) {
                            patch.set(ox + col * kGlyphScale + dx, kLabelPadding + row * kGlyphScale + dy,
                                      kLabelForeground);
                        }
                    }
                }
            }
        }
    }
    return patch;
}

AnnotatedImagePair render_split_prompts(const Raster& image, const GridSpec& grid) {
    check_normalized(image, grid);
    AnnotatedImagePair out{image, image};
    const int w = grid.norm_width;
    const int h = grid.norm_height;
    for (int k = 1; k < grid.rows; ++k) {
        draw_hline(out.row_annotated, strip_boundary(k, h, grid.rows));
    }
    for (int k = 1; k <= grid.rows; ++k) {
        draw_label(out.row_annotated, std::to_string(k), w / 2, strip_center(k, h, grid.rows));
    }
    for (int k = 1; k < grid.cols; ++k) {
        draw_vline(out.col_annotated, strip_boundary(k, w, grid.cols));
    }
    for (int k = 1; k <= grid.cols; ++k) {
        draw_label(out.col_annotated, std::to_string(k), strip_center(k, w, grid.cols), h / 2);
    }
    return out;
}

Raster render_grid_prompt(const Raster& image, const GridSpec& grid) {
    check_normalized(image, grid);
    Raster out = image;
    const int w = grid.norm_width;
    const int h = grid.norm_height;
    for (int k = 1; k < grid.rows; ++k) {
        draw_hline(out, strip_boundary(k, h, grid.rows));
    }
    for (int k = 1; k < grid.cols; ++k) {
        draw_vline(out, strip_boundary(k, w, grid.cols));
    }
    for (int r = 1; r <= grid.rows; ++r) {
        for (int c = 1; c <= grid.cols; ++c) {
            const int index = (r - 1) * grid.cols + c;
            draw_label(out, std::to_string(index), strip_center(c, w, grid.cols), strip_center(r, h, grid.rows));
        }
    }
    return out;
}

namespace {

std::string_view trim_trailing(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
    }
    return s;
}

// Single pass: substituted values are never rescanned, so a query that
// happens to contain "{M}" stays literal.
std::string fill_template(std::string_view tpl, const std::map<std::string, std::string, std::less<>>& values) {
    std::string out;
    std::size_t i = 0;
    while (i < tpl.size()) {
        if (tpl[i] == '{') {
            const auto close = tpl.find('}', i + 1);
            if (close != std::string_view::npos) {
                const auto key = tpl.substr(i + 1, close - i - 1);
                const auto it = values.find(key);
                if (it != values.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tpl[i]);
        ++i;
    }
    return out;
}

}  // namespace

PromptText build_cot_prompt(std::string_view query, PromptVariant variant, const GridSpec& grid,
                            VisualStyle style) {
    grid.validate();
    if (std::all_of(query.begin(), query.end(), [](unsigned char c) { return std::isspace(c); })) {
        throw InvalidInput("query must not be empty");
    }
    const std::string m = std::to_string(grid.rows);
    const std::string n = std::to_string(grid.cols);
    const std::map<std::string, std::string, std::less<>> dims = {
        {"M", m}, {"N", n}, {"cells", std::to_string(grid.rows * grid.cols)}};

    std::string_view guide = templates::guide_split;
    if (style == VisualStyle::grid) {
        guide = templates::guide_grid;
    } else if (style == VisualStyle::none) {
        guide = templates::guide_none;
    }
    const std::string_view format = style == VisualStyle::grid ? templates::format_cells : templates::format_ids;

    const auto values = std::map<std::string, std::string, std::less<>>{
        {"query", std::string(query)},
        {"M", m},
        {"N", n},
        {"image_guide", fill_template(trim_trailing(guide), dims)},
        {"output_format", fill_template(trim_trailing(format), dims)},
    };
    const std::string_view body =
        variant == PromptVariant::hierarchical ? templates::cot_hierarchical : templates::cot_plain;
    return {std::string(trim_trailing(templates::system)), fill_template(body, values)};
}

PromptBundle build_prompt_bundle(const Raster& image, std::string_view query, PromptVariant variant,
                                 VisualStyle style, const GridSpec& grid) {
    check_normalized(image, grid);
    auto text = build_cot_prompt(query, variant, grid, style);
    PromptBundle bundle{std::move(text.system_text), std::move(text.user_text), {image}};
    if (style == VisualStyle::split) {
        auto pair = render_split_prompts(image, grid);
        bundle.images.push_back(std::move(pair.row_annotated));
        bundle.images.push_back(std::move(pair.col_annotated));
    } else if (style == VisualStyle::grid) {
        bundle.images.push_back(render_grid_prompt(image, grid));
    }
    return bundle;
}

}  // namespace rsvp
