#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "rsvp/errors.hpp"
#include "rsvp/geometry.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace rsvp;
using rsvp::test::oracle_bounds;
using rsvp::test::Rational;

namespace {

GridSpec grid_of(int rows, int cols, double padding = 0.2) {
    GridSpec g;
    g.rows = rows;
    g.cols = cols;
    g.padding_ratio = padding;
    return g;
}

std::vector<int> range(int a, int b) {
    std::vector<int> v;
    for (int i = a; i <= b; ++i) v.push_back(i);
    return v;
}

}  // namespace

TEST_CASE("grid validation") {
    CHECK_NOTHROW(GridSpec{}.validate());
    CHECK_THROWS_AS(grid_of(0, 9).validate(), InvalidInput);
    CHECK_THROWS_AS(grid_of(9, 0).validate(), InvalidInput);
    CHECK_THROWS_AS(grid_of(9, 9, -0.1).validate(), InvalidInput);
    CHECK_THROWS_AS(grid_of(9, 9, 1.5).validate(), InvalidInput);
    GridSpec tiny = grid_of(11, 3);
    tiny.norm_height = 10;
    CHECK_THROWS_AS(tiny.validate(), InvalidInput);
    tiny.norm_height = 11;
    CHECK_NOTHROW(tiny.validate());
}

TEST_CASE("strip boundaries tile the canvas") {
    for (int count : {1, 2, 3, 5, 7, 9, 13, 997}) {
        for (int extent : {1000, 999, 1001}) {
            if (extent < count) continue;
            CHECK(strip_boundary(0, extent, count) == 0);
            CHECK(strip_boundary(count, extent, count) == extent);
            for (int k = 1; k <= count; ++k) {
                CHECK(strip_boundary(k, extent, count) > strip_boundary(k - 1, extent, count));
                CHECK(strip_boundary(k, extent, count) == (Rational(k) * Rational(extent, count)).round());
            }
        }
    }
    // 1000 * 1/8 = 125 exactly; 500/3 = 166.67 rounds up, 1000/3 = 333.3 rounds down.
    CHECK(strip_boundary(1, 1000, 8) == 125);
    CHECK(strip_boundary(1, 500, 3) == 167);
    CHECK(strip_boundary(1, 1000, 3) == 333);
    // A tie: 5 * 1/2 = 2.5 rounds away from zero.
    CHECK(strip_boundary(1, 5, 2) == 3);
}

TEST_CASE("padding pixels") {
    CHECK(padding_pixels(grid_of(9, 9)) == PaddingPx{22, 22});
    CHECK(padding_pixels(grid_of(9, 9, 0.0)) == PaddingPx{0, 0});
    CHECK(padding_pixels(grid_of(5, 5)) == PaddingPx{40, 40});
    CHECK(padding_pixels(grid_of(13, 5, 0.4)) == PaddingPx{80, 31});
    for (int m : {5, 9, 13}) {
        for (auto [ratio, frac] : {std::pair{0.0, Rational(0)}, {0.2, Rational(1, 5)}, {0.4, Rational(2, 5)}}) {
            const auto p = padding_pixels(grid_of(m, m, ratio));
            CHECK(p.x == (frac * Rational(1000, m)).round());
            CHECK(p.y == p.x);
        }
    }
}

TEST_CASE("region bounds for the drum example") {
    const std::vector<int> v{4, 5, 6};
    const std::vector<int> h{5, 6, 7, 8};
    const auto r = region_pixel_bounds(grid_of(9, 9), v, h);
    REQUIRE(r.has_value());
    CHECK(*r == CropRect{422, 311, 911, 689});
    CHECK(r->width() == 489);
    CHECK(r->height() == 378);
}

TEST_CASE("region bounds saturate and signal absence") {
    const auto g = grid_of(9, 9);
    const auto all = range(1, 9);
    CHECK(*region_pixel_bounds(g, all, all) == CropRect{0, 0, 1000, 1000});
    CHECK_FALSE(region_pixel_bounds(g, std::vector<int>{}, std::vector<int>{3}).has_value());
    CHECK_FALSE(region_pixel_bounds(g, std::vector<int>{3}, std::vector<int>{}).has_value());
    CHECK_FALSE(region_pixel_bounds(g, std::vector<int>{}, std::vector<int>{}).has_value());
}

TEST_CASE("region bounds accept unsorted, duplicated and out-of-range ids") {
    const auto g = grid_of(9, 9);
    const std::vector<int> messy_v{6, 4, 4, 5};
    const std::vector<int> messy_h{8, 5};
    CHECK(*region_pixel_bounds(g, messy_v, messy_h) == CropRect{422, 311, 911, 689});
    const std::vector<int> over{0, 10};
    const auto all = range(1, 9);
    CHECK(*region_pixel_bounds(g, over, over) == *region_pixel_bounds(g, all, all));
}

TEST_CASE("region bounds match the rational oracle on 5/9/13 grids") {
    for (int m : {5, 9, 13}) {
        for (int n : {5, 9, 13}) {
            for (auto [ratio, frac] : {std::pair{0.0, Rational(0)}, {0.2, Rational(1, 5)}, {0.4, Rational(2, 5)}}) {
                const auto g = grid_of(m, n, ratio);
                for (int v0 = 1; v0 <= m; ++v0) {
                    for (int v1 = v0; v1 <= m; ++v1) {
                        const auto ids_v = range(v0, v1);
                        for (int h0 = 1; h0 <= n; ++h0) {
                            for (int h1 = h0; h1 <= n; ++h1) {
                                const auto r = region_pixel_bounds(g, ids_v, range(h0, h1));
                                REQUIRE(r.has_value());
                                REQUIRE(*r == oracle_bounds(m, n, 1000, 1000, frac, v0, v1, h0, h1));
                            }
                        }
                    }
                }
            }
        }
    }
}

TEST_CASE("region bounds properties on random id lists") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> dims(1, 15);
    std::uniform_int_distribution<int> len(1, 6);
    for (int trial = 0; trial < 2000; ++trial) {
        const int m = dims(rng);
        const int n = dims(rng);
        GridSpec g = grid_of(m, n, std::uniform_real_distribution<double>(0.0, 0.5)(rng));
        std::uniform_int_distribution<int> idv(-2, m + 2);
        std::uniform_int_distribution<int> idh(-2, n + 2);
        std::vector<int> v, h;
        for (int i = len(rng); i > 0; --i) v.push_back(idv(rng));
        for (int i = len(rng); i > 0; --i) h.push_back(idh(rng));
        const auto r = region_pixel_bounds(g, v, h);
        REQUIRE(r.has_value());
        CHECK(0 <= r->x0);
        CHECK(r->x0 < r->x1);
        CHECK(r->x1 <= g.norm_width);
        CHECK(0 <= r->y0);
        CHECK(r->y0 < r->y1);
        CHECK(r->y1 <= g.norm_height);

        // Idempotence under clamping.
        std::vector<int> cv = v, ch = h;
        for (auto& x : cv) x = std::clamp(x, 1, m);
        for (auto& x : ch) x = std::clamp(x, 1, n);
        CHECK(*region_pixel_bounds(g, cv, ch) == *r);

        // Monotone in the id lists.
        std::vector<int> sv = v, sh = h;
        sv.push_back(idv(rng));
        sh.push_back(idh(rng));
        CHECK(region_pixel_bounds(g, sv, sh)->contains(*r));

        // Monotone in padding.
        GridSpec wider = g;
        wider.padding_ratio = std::min(1.0, g.padding_ratio + 0.1);
        CHECK(region_pixel_bounds(wider, v, h)->contains(*r));

        // Away from the canvas edges the size is H'/W' up to rounding.
        const int s_v = std::clamp(*std::min_element(v.begin(), v.end()), 1, m);
        const int e_v = std::clamp(*std::max_element(v.begin(), v.end()), 1, m);
        const auto pad = padding_pixels(g);
        if (r->y0 > 0 && r->y1 < g.norm_height) {
            const double expected = 1000.0 / m * (e_v - s_v + 1) + 2 * pad.y;
            CHECK(std::abs(r->height() - expected) <= 1.0);
        }
    }
}

TEST_CASE("crop") {
    Raster img(1000, 1000);
    std::mt19937_64 rng(3);
    for (auto& b : img.bytes()) b = static_cast<std::uint8_t>(rng());
    CHECK(crop(img, {0, 0, 1000, 1000}) == img);
    const auto c = crop(img, {422, 311, 911, 689});
    CHECK(c.width() == 489);
    CHECK(c.height() == 378);
    CHECK(c.at(0, 0) == img.at(422, 311));
    CHECK(c.at(488, 377) == img.at(910, 688));
    const auto px = crop(img, {17, 40, 18, 41});
    CHECK(px.width() == 1);
    CHECK(px.height() == 1);
    CHECK(px.at(0, 0) == img.at(17, 40));
    CHECK_THROWS_AS(crop(img, {900, 0, 1001, 10}), ContractViolation);
    CHECK_THROWS_AS(crop(img, {-1, 0, 10, 10}), ContractViolation);
    CHECK_THROWS_AS(crop(img, {5, 5, 5, 10}), ContractViolation);
}

TEST_CASE("paste mask") {
    CHECK(paste_mask(BinaryMask(10, 10), {5, 5, 15, 15}, {20, 20}).popcount() == 0);

    const auto full = paste_mask(BinaryMask(10, 10, true), {5, 5, 15, 15}, {20, 20});
    CHECK(full.popcount() == 100);
    for (int y = 0; y < 20; ++y) {
        for (int x = 0; x < 20; ++x) {
            CHECK(full.at(x, y) == (x >= 5 && x < 15 && y >= 5 && y < 15));
        }
    }

    CHECK_THROWS_AS(paste_mask(BinaryMask(9, 10), {5, 5, 15, 15}, {20, 20}), InvalidInput);

    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const int w = 1 + static_cast<int>(rng() % 30);
        const int h = 1 + static_cast<int>(rng() % 30);
        const int x0 = static_cast<int>(rng() % 20);
        const int y0 = static_cast<int>(rng() % 20);
        const auto m = rsvp::test::random_mask(rng, w, h, 0.3);
        const CropRect rect{x0, y0, x0 + w, y0 + h};
        const auto pasted = paste_mask(m, rect, {60, 60});
        CHECK(pasted.popcount() == m.popcount());
        // Restriction then paste is the identity for masks supported inside the rect.
        CHECK(paste_mask(crop_mask(pasted, rect), rect, {60, 60}) == pasted);
    }
}

namespace {

// Reference bilinear sampler written against the continuous definition:
// pixel centers at +0.5, coordinates clamped to the outermost centers.
Rgb reference_bilinear(const Raster& src, int dw, int dh, int x, int y) {
    auto coord = [](int i, int s, int d) {
        double c = (i + 0.5) * s / d - 0.5;
        return std::min(std::max(c, 0.0), s - 1.0);
    };
    const double sx = coord(x, src.width(), dw);
    const double sy = coord(y, src.height(), dh);
    const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
    const int x1 = std::min(x0 + 1, src.width() - 1), y1 = std::min(y0 + 1, src.height() - 1);
    const double fx = sx - x0, fy = sy - y0;
    auto ch = [&](auto pick) {
        const double v = (1 - fx) * (1 - fy) * pick(src.at(x0, y0)) + fx * (1 - fy) * pick(src.at(x1, y0)) +
                         (1 - fx) * fy * pick(src.at(x0, y1)) + fx * fy * pick(src.at(x1, y1));
        return static_cast<std::uint8_t>(std::lround(v));
    };
    return {ch([](Rgb c) { return c.r; }), ch([](Rgb c) { return c.g; }), ch([](Rgb c) { return c.b; })};
}

int channel_diff(Rgb a, Rgb b) {
    return std::max({std::abs(a.r - b.r), std::abs(a.g - b.g), std::abs(a.b - b.b)});
}

}  // namespace

TEST_CASE("normalize image") {
    const GridSpec g;
    Raster same(1000, 1000);
    std::mt19937_64 rng(9);
    for (auto& b : same.bytes()) b = static_cast<std::uint8_t>(rng());
    CHECK(normalize_image(same, g) == same);

    const auto tall = normalize_image(Raster(500, 2000, {10, 20, 30}), g);
    CHECK(tall.width() == 1000);
    CHECK(tall.height() == 1000);
    CHECK(tall.at(500, 500) == Rgb{10, 20, 30});

    Raster checker(3, 3);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x)
            checker.set(x, y, (x + y) % 2 == 0 ? Rgb{255, 0, 0} : Rgb{0, 0, 255});
    checker.set(2, 2, {0, 255, 0});
    const auto big = normalize_image(checker, g);
    CHECK(big.at(0, 0) == checker.at(0, 0));
    CHECK(big.at(999, 0) == checker.at(2, 0));
    CHECK(big.at(0, 999) == checker.at(0, 2));
    CHECK(big.at(999, 999) == checker.at(2, 2));
    int worst = 0;
    for (int y = 0; y < 1000; y += 7)
        for (int x = 0; x < 1000; x += 7)
            worst = std::max(worst, channel_diff(big.at(x, y), reference_bilinear(checker, 1000, 1000, x, y)));
    CHECK(worst <= 1);

    Raster noisy(37, 53);
    for (auto& b : noisy.bytes()) b = static_cast<std::uint8_t>(rng());
    const auto down = resize_bilinear(noisy, 20, 11);
    worst = 0;
    for (int y = 0; y < 11; ++y)
        for (int x = 0; x < 20; ++x)
            worst = std::max(worst, channel_diff(down.at(x, y), reference_bilinear(noisy, 20, 11, x, y)));
    CHECK(worst <= 1);

    CHECK_THROWS_AS(normalize_image(Raster(0, 10), g), InvalidInput);
    CHECK_THROWS_AS(normalize_image(Raster(), g), InvalidInput);
}

TEST_CASE("nearest-neighbour mask resize round-trips integer factors") {
    std::mt19937_64 rng(21);
    for (int side : {200, 250, 500, 1000}) {
        const auto m = rsvp::test::random_mask(rng, side, 1000 / (side / 50 + 1) + 1, 0.4);
        const auto up = resize_mask_nearest(m, 1000, 1000);
        if (1000 % m.height() == 0) {
            CHECK(resize_mask_nearest(up, m.width(), m.height()) == m);
        }
    }
    const auto m = rsvp::test::random_mask(rng, 250, 500, 0.4);
    CHECK(resize_mask_nearest(resize_mask_nearest(m, 1000, 1000), 250, 500) == m);
    CHECK(resize_mask_nearest(m, 250, 500) == m);
}
