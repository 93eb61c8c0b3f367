#include "rsvp/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "rsvp/errors.hpp"

namespace rsvp {

IoURecord make_record(std::string sample_id, std::uint64_t intersection, std::uint64_t union_,
                      EmptyPairPolicy policy) {
    if (intersection > union_) {
        throw InvalidInput("intersection exceeds union");
    }
    IoURecord r{std::move(sample_id), intersection, union_, 0.0};
    if (union_ == 0) {
        r.iou = policy == EmptyPairPolicy::score_one ? 1.0 : 0.0;
    } else {
        r.iou = static_cast<double>(intersection) / static_cast<double>(union_);
    }
    return r;
}

namespace {

std::pair<std::uint64_t, std::uint64_t> overlap_counts(const BinaryMask& a, const BinaryMask& b) {
    if (a.width() != b.width() || a.height() != b.height()) {
        throw InvalidInput("iou requires masks of equal dimensions");
    }
    std::uint64_t inter = 0;
    std::uint64_t uni = 0;
    const auto& ab = a.bits();
    const auto& bb = b.bits();
    for (std::size_t i = 0; i < ab.size(); ++i) {
        inter += ab[i] & bb[i];
        uni += ab[i] | bb[i];
    }
    return {inter, uni};
}

double instance_iou(const BinaryMask& a, const BinaryMask& b) {
    const auto [inter, uni] = overlap_counts(a, b);
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

IoURecord iou(const BinaryMask& a, const BinaryMask& b, EmptyPairPolicy policy) {
    const auto [inter, uni] = overlap_counts(a, b);
    return make_record({}, inter, uni, policy);
}

double giou(std::span<const IoURecord> records) {
    if (records.empty()) {
        throw InvalidInput("giou of an empty record list");
    }
    double sum = 0.0;
    for (const auto& r : records) {
        sum += r.iou;
    }
    return sum / static_cast<double>(records.size());
}

double ciou(std::span<const IoURecord> records) {
    if (records.empty()) {
        throw InvalidInput("ciou of an empty record list");
    }
    std::uint64_t inter = 0;
    std::uint64_t uni = 0;
    for (const auto& r : records) {
        inter += r.intersection;
        uni += r.union_;
    }
    if (uni == 0) {
        return 1.0;
    }
    return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<double> default_map_thresholds() {
    std::vector<double> t;
    for (int i = 0; i < 10; ++i) {
        t.push_back((50 + 5 * i) / 100.0);
    }
    return t;
}

namespace {

constexpr int kRecallPoints = 101;

struct CategoryData {
    // Per image: indices into predictions / ground_truth of this category.
    std::vector<std::vector<std::size_t>> preds;
    std::vector<std::vector<std::size_t>> gts;
    // Per image: ious[p][g] between the category's predictions and GTs.
    std::vector<std::vector<std::vector<double>>> ious;
    std::size_t gt_total = 0;
};

double average_precision(const CategoryData& cat, std::span<const ImageInstances> images, double threshold) {
    struct Candidate {
        double score;
        std::size_t image;
        std::size_t local;
    };
    std::vector<Candidate> order;
    for (std::size_t i = 0; i < images.size(); ++i) {
        for (std::size_t k = 0; k < cat.preds[i].size(); ++k) {
            order.push_back({images[i].predictions[cat.preds[i][k]].score, i, k});
        }
    }
    if (order.empty()) {
        return 0.0;
    }
    std::stable_sort(order.begin(), order.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

    std::vector<std::vector<bool>> taken(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        taken[i].assign(cat.gts[i].size(), false);
    }

    std::vector<double> precision;
    std::vector<double> recall;
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (const auto& c : order) {
        const auto& row = cat.ious[c.image][c.local];
        double best = threshold;
        std::ptrdiff_t match = -1;
        for (std::size_t g = 0; g < row.size(); ++g) {
            if (!taken[c.image][g] && row[g] >= best) {
                // Strictly better IoU wins; first GT wins ties.
                if (match < 0 || row[g] > best) {
                    best = row[g];
                    match = static_cast<std::ptrdiff_t>(g);
                }
            }
        }
        if (match >= 0) {
            taken[c.image][static_cast<std::size_t>(match)] = true;
            ++tp;
        } else {
            ++fp;
        }
        precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
        recall.push_back(static_cast<double>(tp) / static_cast<double>(cat.gt_total));
    }
    for (std::size_t i = precision.size() - 1; i > 0; --i) {
        precision[i - 1] = std::max(precision[i - 1], precision[i]);
    }
    double sum = 0.0;
    for (int k = 0; k < kRecallPoints; ++k) {
        const double r = k / 100.0;
        const auto it = std::lower_bound(recall.begin(), recall.end(), r);
        if (it != recall.end()) {
            sum += precision[static_cast<std::size_t>(it - recall.begin())];
        }
    }
    return sum / kRecallPoints;
}

}  // namespace

MapResult map_eval(std::span<const ImageInstances> images, std::span<const double> thresholds) {
    if (thresholds.empty()) {
        throw InvalidInput("map_eval needs at least one IoU threshold");
    }
    std::set<std::string> names;
    for (const auto& img : images) {
        for (const auto& g : img.ground_truth) {
            names.insert(g.category);
        }
    }
    if (names.empty()) {
        throw InvalidInput("map_eval: no ground-truth instances in the corpus");
    }

    std::vector<CategoryData> cats;
    for (const auto& name : names) {
        CategoryData cat;
        cat.preds.resize(images.size());
        cat.gts.resize(images.size());
        cat.ious.resize(images.size());
        for (std::size_t i = 0; i < images.size(); ++i) {
            const auto& img = images[i];
            for (std::size_t p = 0; p < img.predictions.size(); ++p) {
                if (img.predictions[p].category == name) {
                    cat.preds[i].push_back(p);
                }
            }
            for (std::size_t g = 0; g < img.ground_truth.size(); ++g) {
                if (img.ground_truth[g].category == name) {
                    cat.gts[i].push_back(g);
                }
            }
            cat.gt_total += cat.gts[i].size();
            for (const auto p : cat.preds[i]) {
                std::vector<double> row;
                for (const auto g : cat.gts[i]) {
                    row.push_back(instance_iou(img.predictions[p].mask, img.ground_truth[g].mask));
                }
                cat.ious[i].push_back(std::move(row));
            }
        }
        cats.push_back(std::move(cat));
    }

    MapResult result;
    result.thresholds.assign(thresholds.begin(), thresholds.end());
    result.categories.assign(names.begin(), names.end());
    double total = 0.0;
    for (const double t : thresholds) {
        std::vector<double> per_cat;
        for (const auto& cat : cats) {
            per_cat.push_back(average_precision(cat, images, t));
        }
        total += std::accumulate(per_cat.begin(), per_cat.end(), 0.0) / static_cast<double>(per_cat.size());
        result.ap.push_back(std::move(per_cat));
    }
    result.map = total / static_cast<double>(thresholds.size());
    return result;
}

MapResult map_eval(std::span<const ImageInstances> images) {
    const auto t = default_map_thresholds();
    return map_eval(images, t);
}

std::vector<std::uint32_t> rle_encode(const BinaryMask& mask) {
    std::vector<std::uint32_t> counts;
    std::uint8_t current = 0;
    std::uint32_t run = 0;
    for (int x = 0; x < mask.width(); ++x) {
        for (int y = 0; y < mask.height(); ++y) {
            const std::uint8_t v = mask.at(x, y) ? 1 : 0;
            if (v != current) {
                counts.push_back(run);
                run = 0;
                current = v;
            }
            ++run;
        }
    }
    counts.push_back(run);
    return counts;
}

BinaryMask rle_decode(std::span<const std::uint32_t> counts, int width, int height) {
    if (width < 0 || height < 0) {
        throw FormatError("rle dimensions must be non-negative");
    }
    const std::uint64_t total = static_cast<std::uint64_t>(width) * static_cast<std::uint64_t>(height);
    const std::uint64_t sum = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
    if (sum != total) {
        throw FormatError("rle counts sum to " + std::to_string(sum) + ", expected " + std::to_string(total));
    }
    BinaryMask out(width, height);
    std::uint64_t pos = 0;
    bool value = false;
    for (const auto c : counts) {
        if (value) {
            for (std::uint64_t i = pos; i < pos + c; ++i) {
                const auto x = static_cast<int>(i / static_cast<std::uint64_t>(height));
                const auto y = static_cast<int>(i % static_cast<std::uint64_t>(height));
                out.set(x, y);
            }
        }
        pos += c;
        value = !value;
    }
    return out;
}

std::vector<std::uint32_t> rle_counts_from_string(const std::string& s) {
    std::vector<std::uint32_t> counts;
    std::size_t p = 0;
    while (p < s.size()) {
        std::int64_t x = 0;
        int k = 0;
        bool more = true;
        while (more) {
            if (p >= s.size()) {
                throw FormatError("truncated compressed rle string");
            }
            const int c = static_cast<int>(static_cast<unsigned char>(s[p])) - 48;
            if (c < 0 || c > 63 || k > 12) {
                throw FormatError("invalid character in compressed rle string");
            }
            x |= static_cast<std::int64_t>(c & 0x1f) << (5 * k);
            more = (c & 0x20) != 0;
            ++p;
            ++k;
            if (!more && (c & 0x10) != 0) {
                x |= static_cast<std::int64_t>(-1) * (std::int64_t{1} << (5 * k));
            }
        }
        if (counts.size() > 2) {
            x += counts[counts.size() - 2];
        }
        if (x < 0 || x > static_cast<std::int64_t>(UINT32_MAX)) {
            throw FormatError("compressed rle run out of range");
        }
        counts.push_back(static_cast<std::uint32_t>(x));
    }
    return counts;
}

std::string rle_counts_to_string(std::span<const std::uint32_t> counts) {
    std::string s;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        std::int64_t x = counts[i];
        if (i > 2) {
            x -= counts[i - 2];
        }
        bool more = true;
        while (more) {
            int c = static_cast<int>(x & 0x1f);
            x >>= 5;
            more = (c & 0x10) != 0 ? x != -1 : x != 0;
            if (more) {
                c |= 0x20;
            }
            s.push_back(static_cast<char>(c + 48));
        }
    }
    return s;
}

}  // namespace rsvp
