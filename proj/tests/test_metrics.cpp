#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <vector>

#include "rsvp/errors.hpp"
#include "rsvp/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace rsvp;

using rsvp::test::naive_counts;
using rsvp::test::oracle_map;
using rsvp::test::random_instances;
using rsvp::test::rect_mask;

TEST_CASE("iou on shifted rectangles") {
    const auto a = rect_mask(4, 4, 0, 0, 2, 3);
    const auto b = rect_mask(4, 4, 0, 1, 2, 4);
    const auto r = iou(a, b);
    CHECK(r.intersection == 4);
    CHECK(r.union_ == 8);
    CHECK(r.iou == 0.5);
}

TEST_CASE("iou edge cases") {
    const BinaryMask empty(5, 5);
    CHECK(iou(empty, empty).iou == 1.0);
    CHECK(iou(empty, empty, EmptyPairPolicy::score_zero).iou == 0.0);
    CHECK(iou(empty, BinaryMask(5, 5, true)).iou == 0.0);
    CHECK(iou(BinaryMask(5, 5, true), BinaryMask(5, 5, true)).iou == 1.0);
    CHECK_THROWS_AS(iou(empty, BinaryMask(5, 4)), InvalidInput);
    CHECK_THROWS_AS(make_record("x", 3, 2), InvalidInput);
}

TEST_CASE("iou matches brute force and is symmetric") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        const int w = 1 + static_cast<int>(rng() % 40), h = 1 + static_cast<int>(rng() % 40);
        const auto a = rsvp::test::random_mask(rng, w, h, 0.3);
        const auto b = rsvp::test::random_mask(rng, w, h, 0.6);
        const auto r = iou(a, b);
        const auto [i, u] = naive_counts(a, b);
        CHECK(r.intersection == i);
        CHECK(r.union_ == u);
        CHECK(iou(b, a) == r);
        CHECK(r.iou >= 0.0);
        CHECK(r.iou <= 1.0);
        CHECK(iou(a, a).iou == 1.0);
    }
}

TEST_CASE("giou and ciou aggregates") {
    const std::vector<IoURecord> recs{make_record("a", 1, 2), make_record("b", 3, 4)};
    CHECK(giou(recs) == 0.625);
    CHECK(ciou(recs) == doctest::Approx(4.0 / 6.0).epsilon(1e-15));

    const std::vector<IoURecord> empties{make_record("a", 0, 0), make_record("b", 0, 0)};
    CHECK(giou(empties) == 1.0);
    CHECK(ciou(empties) == 1.0);
    CHECK_THROWS_AS(giou(std::vector<IoURecord>{}), InvalidInput);
    CHECK_THROWS_AS(ciou(std::vector<IoURecord>{}), InvalidInput);

    // cIoU weights by union size, so one big miss outweighs many small hits.
    std::vector<IoURecord> skew;
    for (int i = 0; i < 9; ++i) skew.push_back(make_record("s", 10, 10));
    skew.push_back(make_record("big", 0, 910));
    CHECK(giou(skew) == doctest::Approx(0.9));
    CHECK(ciou(skew) == doctest::Approx(0.09));
}

TEST_CASE("aggregate properties") {
    std::mt19937_64 rng(4);
    std::vector<IoURecord> same_u, scaled, recs;
    for (int i = 0; i < 50; ++i) {
        same_u.push_back(make_record("s", rng() % 101, 100));
        const auto u = 1 + rng() % 500;
        recs.push_back(make_record("r", rng() % (u + 1), u));
        scaled.push_back(make_record("r", recs.back().intersection * 7, recs.back().union_ * 7));
    }
    CHECK(giou(same_u) == doctest::Approx(ciou(same_u)).epsilon(1e-14));
    CHECK(ciou(scaled) == ciou(recs));
    CHECK(ciou(std::vector<IoURecord>{recs[0]}) == recs[0].iou);
    CHECK(giou(std::vector<IoURecord>{recs[0]}) == recs[0].iou);
    CHECK(ciou(recs) >= 0.0);
    CHECK(ciou(recs) <= 1.0);
}

TEST_CASE("aggregates are order independent") {
    std::mt19937_64 rng(2);
    std::vector<IoURecord> recs;
    for (int i = 0; i < 100; ++i) {
        const auto u = rng() % 1000;
        recs.push_back(make_record("r", u == 0 ? 0 : rng() % (u + 1), u));
    }
    auto shuffled = recs;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(giou(shuffled) == doctest::Approx(giou(recs)).epsilon(1e-12));
    CHECK(ciou(shuffled) == ciou(recs));
}

TEST_CASE("default thresholds") {
    const auto t = default_map_thresholds();
    REQUIRE(t.size() == 10);
    CHECK(t.front() == 0.5);
    CHECK(t.back() == 0.95);
}

TEST_CASE("map on a hand-worked case") {
    // One ground truth; a false positive outranks the true positive.
    ImageInstances im;
    im.ground_truth.push_back({rect_mask(10, 10, 0, 0, 5, 5), "a"});
    im.predictions.push_back({rect_mask(10, 10, 5, 5, 10, 10), 0.9, "a"});
    im.predictions.push_back({rect_mask(10, 10, 0, 0, 5, 5), 0.8, "a"});
    const std::vector<ImageInstances> images{im};
    const std::vector<double> t{0.5};
    const auto r = map_eval(images, t);
    CHECK(r.map == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.categories == std::vector<std::string>{"a"});

    // Same ranking when the true positive only overlaps at IoU 0.6.
    ImageInstances partial;
    partial.ground_truth.push_back({rect_mask(10, 10, 0, 0, 10, 10), "a"});
    partial.predictions.push_back({rect_mask(10, 10, 0, 0, 1, 1), 0.9, "a"});
    partial.predictions.push_back({rect_mask(10, 10, 0, 0, 6, 10), 0.8, "a"});
    CHECK(iou(partial.predictions[1].mask, partial.ground_truth[0].mask).iou == 0.6);
    CHECK(map_eval(std::vector<ImageInstances>{partial}, t).map == doctest::Approx(0.5).epsilon(1e-12));

    // Swap the scores and the ranking is perfect.
    std::swap(im.predictions[0].score, im.predictions[1].score);
    const std::vector<ImageInstances> swapped{im};
    CHECK(map_eval(swapped, t).map == doctest::Approx(1.0));

    // Perfect predictions everywhere score 1 at every threshold.
    CHECK(map_eval(swapped).map == doctest::Approx(1.0));

    ImageInstances unanswered;
    unanswered.ground_truth.push_back({rect_mask(10, 10, 0, 0, 5, 5), "a"});
    const std::vector<ImageInstances> no_predictions{unanswered};
    CHECK(map_eval(no_predictions).map == 0.0);

    const std::vector<ImageInstances> no_gt{ImageInstances{}};
    CHECK_THROWS_AS(map_eval(no_gt), InvalidInput);
    CHECK_THROWS_AS(map_eval(images, std::vector<double>{}), InvalidInput);
}

TEST_CASE("map matches the independent oracle") {
    std::mt19937_64 rng(44);
    int checked = 0;
    for (int set = 0; set < 40; ++set) {
        const auto images = random_instances(rng, 1 + static_cast<int>(rng() % 6));
        bool has_gt = false;
        for (const auto& im : images) has_gt = has_gt || !im.ground_truth.empty();
        if (!has_gt) continue;
        const auto t = default_map_thresholds();
        CHECK(map_eval(images, t).map == doctest::Approx(oracle_map(images, t)).epsilon(1e-9));
        ++checked;
    }
    CHECK(checked >= 20);
}

TEST_CASE("map ignores monotone rescaling of scores") {
    std::mt19937_64 rng(45);
    for (int set = 0; set < 20; ++set) {
        auto images = random_instances(rng, 4);
        images[0].ground_truth.push_back({rect_mask(32, 32, 1, 1, 9, 9), "cat"});
        const double base = map_eval(images).map;
        for (auto& im : images)
            for (auto& p : im.predictions) p.score = 3.0 * p.score * p.score + 1.0;
        CHECK(map_eval(images).map == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("rle known values") {
    BinaryMask full(2, 2, true);
    CHECK(rle_encode(full) == std::vector<std::uint32_t>{0, 4});
    CHECK(rle_encode(BinaryMask(3, 5)) == std::vector<std::uint32_t>{15});

    // 4 wide, 3 tall; column-major scan gives 0000 11 0 111 00.
    BinaryMask m(4, 3);
    m.set(1, 1);
    m.set(1, 2);
    m.set(2, 1);
    m.set(2, 2);
    m.set(3, 0);
    CHECK(rle_encode(m) == std::vector<std::uint32_t>{4, 2, 1, 3, 2});
    // Reference strings produced with pycocotools.
    CHECK(rle_counts_to_string(rle_encode(m)) == "42111");

    BinaryMask b(40, 40);
    for (int y = 5; y < 30; ++y)
        for (int x = 7; x < 12; ++x) b.set(x, y);
    b.set(0, 0);
    b.set(0, 1);
    CHECK(rle_counts_to_string(rle_encode(b)) == "02k8g0dG0000000kR1");
    CHECK(rle_decode(rle_counts_from_string("02k8g0dG0000000kR1"), 40, 40) == b);
}

TEST_CASE("rle round trip") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 1000; ++trial) {
        const int w = static_cast<int>(rng() % 64), h = static_cast<int>(rng() % 64);
        const double density = static_cast<double>(rng() % 101) / 100.0;
        const auto m = rsvp::test::random_mask(rng, w, h, density);
        const auto c = rle_encode(m);
        std::uint64_t sum = 0;
        for (auto v : c) sum += v;
        REQUIRE(sum == static_cast<std::uint64_t>(w) * static_cast<std::uint64_t>(h));
        for (std::size_t i = 1; i < c.size(); ++i) REQUIRE(c[i] > 0);
        REQUIRE(rle_decode(c, w, h) == m);
        REQUIRE(rle_counts_from_string(rle_counts_to_string(c)) == c);
    }
}

TEST_CASE("rle decode rejects bad input") {
    const std::vector<std::uint32_t> short_counts{3};
    CHECK_THROWS_AS(rle_decode(short_counts, 2, 2), FormatError);
    const std::vector<std::uint32_t> long_counts{3, 2};
    CHECK_THROWS_AS(rle_decode(long_counts, 2, 2), FormatError);
    CHECK_THROWS_AS(rle_counts_from_string("4 2"), FormatError);
}
