#pragma once

// Reference implementations written directly from the definitions, kept
// separate from the library so tests do not share its shortcuts.

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rsvp/geometry.hpp"
#include "rsvp/metrics.hpp"
#include "test_util.hpp"

namespace rsvp::test {

// Pixel bounds of rows v0..v1 and columns h0..h1 (1-based, inclusive) with
// padding `ratio` times the strip size, in exact rational arithmetic.
inline CropRect oracle_bounds(int M, int N, int W, int H, Rational ratio, int v0, int v1, int h0, int h1) {
    const auto py = (ratio * Rational(H, M)).round();
    const auto px = (ratio * Rational(W, N)).round();
    auto edge = [](int k, int extent, int count) { return (Rational(k) * Rational(extent, count)).round(); };
    CropRect r;
    r.y0 = static_cast<int>(std::max<std::int64_t>(0, edge(v0 - 1, H, M) - py));
    r.y1 = static_cast<int>(std::min<std::int64_t>(H, edge(v1, H, M) + py));
    r.x0 = static_cast<int>(std::max<std::int64_t>(0, edge(h0 - 1, W, N) - px));
    r.x1 = static_cast<int>(std::min<std::int64_t>(W, edge(h1, W, N) + px));
    return r;
}

// Brute-force intersection and union counts.
inline std::pair<std::uint64_t, std::uint64_t> naive_counts(const BinaryMask& a, const BinaryMask& b) {
    std::uint64_t i = 0, u = 0;
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x) {
            i += a.at(x, y) && b.at(x, y);
            u += a.at(x, y) || b.at(x, y);
        }
    return {i, u};
}

// Greedy matching by descending score, then 101-point AP where precision at
// recall r is the best precision of any prefix reaching r.
inline double oracle_map(const std::vector<ImageInstances>& images, const std::vector<double>& thresholds) {
    std::map<std::string, int> gt_count;
    for (const auto& im : images)
        for (const auto& g : im.ground_truth) ++gt_count[g.category];
    double total = 0.0;
    for (double t : thresholds) {
        double cat_sum = 0.0;
        for (const auto& [cat, n_gt] : gt_count) {
            struct Det {
                double score;
                std::size_t image;
                std::size_t index;
            };
            std::vector<Det> dets;
            for (std::size_t i = 0; i < images.size(); ++i)
                for (std::size_t p = 0; p < images[i].predictions.size(); ++p)
                    if (images[i].predictions[p].category == cat)
                        dets.push_back({images[i].predictions[p].score, i, p});
            std::stable_sort(dets.begin(), dets.end(), [](const Det& a, const Det& b) { return a.score > b.score; });
            std::vector<std::vector<bool>> used(images.size());
            for (std::size_t i = 0; i < images.size(); ++i) used[i].assign(images[i].ground_truth.size(), false);
            std::vector<double> prec, rec;
            int tp = 0, fp = 0;
            for (const auto& d : dets) {
                const auto& im = images[d.image];
                double best = -1.0;
                std::size_t best_g = 0;
                for (std::size_t g = 0; g < im.ground_truth.size(); ++g) {
                    if (im.ground_truth[g].category != cat || used[d.image][g]) continue;
                    const auto [i, u] = naive_counts(im.predictions[d.index].mask, im.ground_truth[g].mask);
                    const double v = u == 0 ? 0.0 : static_cast<double>(i) / static_cast<double>(u);
                    if (v > best) {
                        best = v;
                        best_g = g;
                    }
                }
                if (best >= t) {
                    used[d.image][best_g] = true;
                    ++tp;
                } else {
                    ++fp;
                }
                prec.push_back(static_cast<double>(tp) / (tp + fp));
                rec.push_back(static_cast<double>(tp) / n_gt);
            }
            double ap = 0.0;
            for (int k = 0; k <= 100; ++k) {
                const double r = k / 100.0;
                double p = 0.0;
                for (std::size_t j = 0; j < rec.size(); ++j)
                    if (rec[j] >= r) p = std::max(p, prec[j]);
                ap += p;
            }
            cat_sum += ap / 101.0;
        }
        total += cat_sum / static_cast<double>(gt_count.size());
    }
    return total / static_cast<double>(thresholds.size());
}

inline BinaryMask rect_mask(int w, int h, int x0, int y0, int x1, int y1) {
    BinaryMask m(w, h);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) m.set(x, y);
    return m;
}

// Random scored-instance sets over three categories, with jittered copies
// of ground truth, pure noise and tied scores.
inline std::vector<ImageInstances> random_instances(std::mt19937_64& rng, int n_images) {
    const std::vector<std::string> cats{"cat", "dog", "cup"};
    std::vector<ImageInstances> out(static_cast<std::size_t>(n_images));
    for (auto& im : out) {
        const int n_gt = static_cast<int>(rng() % 4);
        for (int g = 0; g < n_gt; ++g) {
            const int x0 = static_cast<int>(rng() % 20), y0 = static_cast<int>(rng() % 20);
            im.ground_truth.push_back({rect_mask(32, 32, x0, y0, x0 + 4 + static_cast<int>(rng() % 8),
                                                 y0 + 4 + static_cast<int>(rng() % 8)),
                                       cats[rng() % cats.size()]});
        }
        const int n_pred = static_cast<int>(rng() % 5);
        for (int p = 0; p < n_pred; ++p) {
            ScoredInstance s;
            if (!im.ground_truth.empty() && rng() % 3 != 0) {
                const auto& g = im.ground_truth[rng() % im.ground_truth.size()];
                s.mask = g.mask;
                for (int k = static_cast<int>(rng() % 30); k > 0; --k)
                    s.mask.set(static_cast<int>(rng() % 32), static_cast<int>(rng() % 32), rng() % 2 == 0);
                s.category = rng() % 5 == 0 ? cats[rng() % cats.size()] : g.category;
            } else {
                s.mask = random_mask(rng, 32, 32, 0.1);
                s.category = cats[rng() % cats.size()];
            }
            s.score = static_cast<double>(rng() % 10) / 10.0;
            im.predictions.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace rsvp::test
