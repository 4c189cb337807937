#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "piclick/click_encoding.hpp"
#include "piclick/click_simulation.hpp"
#include "piclick/matching.hpp"

namespace piclick::oracle {

std::vector<uint8_t> disk_map(const std::vector<Click>& clicks, int height, int width, int radius) {
    std::vector<uint8_t> out(2 * static_cast<size_t>(height) * width, 0);
    for (int ch = 0; ch < 2; ++ch)
        for (int i = 0; i < height; ++i)
            for (int j = 0; j < width; ++j)
                for (const auto& c : clicks) {
                    if ((ch == 0) != c.positive()) continue;
                    const double d = std::hypot(j - c.x, i - c.y);
                    if (d <= radius) out[(static_cast<size_t>(ch) * height + i) * width + j] = 1;
                }
    return out;
}

double iou(const MaskGrid& a, const MaskGrid& b) {
    std::set<int> sa, sb, uni, inter;
    for (int i = 0; i < static_cast<int>(a.size()); ++i) {
        if (a.data[i]) sa.insert(i);
        if (b.data[i]) sb.insert(i);
    }
    std::set_union(sa.begin(), sa.end(), sb.begin(), sb.end(), std::inserter(uni, uni.end()));
    std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::inserter(inter, inter.end()));
    if (uni.empty()) return 1.0;
    return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

std::vector<std::vector<int>> components(const MaskGrid& mask) {
    const int n = static_cast<int>(mask.size());
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> root = [&](int i) { return parent[i] == i ? i : parent[i] = root(parent[i]); };
    auto unite = [&](int a, int b) {
        a = root(a);
        b = root(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    };
    for (int r = 0; r < mask.height; ++r)
        for (int c = 0; c < mask.width; ++c) {
            if (!mask.at(r, c)) continue;
            if (c + 1 < mask.width && mask.at(r, c + 1)) unite(r * mask.width + c, r * mask.width + c + 1);
            if (r + 1 < mask.height && mask.at(r + 1, c)) unite(r * mask.width + c, (r + 1) * mask.width + c);
        }
    std::vector<std::vector<int>> by_root(n);
    for (int i = 0; i < n; ++i)
        if (mask.data[i]) by_root[root(i)].push_back(i);
    std::vector<std::vector<int>> out;
    for (auto& comp : by_root)
        if (!comp.empty()) out.push_back(std::move(comp));
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
    return out;
}

int64_t squared_depth(const MaskGrid& region, int r, int c) {
    if (!region.at(r, c)) return 0;
    int64_t best = std::numeric_limits<int64_t>::max();
    for (int i = -1; i <= region.height; ++i)
        for (int j = -1; j <= region.width; ++j) {
            const bool outside = !region.contains(i, j) || !region.at(i, j);
            if (!outside) continue;
            const int64_t d = int64_t{i - r} * (i - r) + int64_t{j - c} * (j - c);
            best = std::min(best, d);
        }
    return best;
}

std::optional<Click> corrective_click(const MaskGrid& pred, const MaskGrid& gt) {
    MaskGrid error(gt.height, gt.width);
    for (size_t i = 0; i < gt.size(); ++i) error.data[i] = pred.data[i] != gt.data[i] ? 1 : 0;
    auto comps = components(error);
    if (comps.empty()) return std::nullopt;
    const std::vector<int>* largest = &comps.front();
    for (const auto& comp : comps)
        if (comp.size() > largest->size()) largest = &comp;
    MaskGrid region(gt.height, gt.width);
    for (int i : *largest) region.data[i] = 1;
    int best_pixel = -1;
    int64_t best_depth = -1;
    for (int i : *largest) {  // ascending pixel index == ascending (y, x)
        const int64_t d = squared_depth(region, i / gt.width, i % gt.width);
        if (d > best_depth) {
            best_depth = d;
            best_pixel = i;
        }
    }
    Click click;
    click.x = best_pixel % gt.width;
    click.y = best_pixel / gt.width;
    click.polarity = gt.data[best_pixel] ? Polarity::positive : Polarity::negative;
    return click;
}

std::vector<size_t> feasible(const std::vector<MaskGrid>& masks, const std::vector<Click>& clicks) {
    std::vector<size_t> out;
    for (size_t m = 0; m < masks.size(); ++m) {
        bool ok = true;
        for (int r = 0; r < masks[m].height; ++r)
            for (int c = 0; c < masks[m].width; ++c)
                for (const auto& k : clicks)
                    if (k.x == c && k.y == r && (masks[m].at(r, c) != 0) != k.positive()) ok = false;
        if (ok) out.push_back(m);
    }
    return out;
}

double min_assignment_cost(const std::vector<double>& cost, int rows, int cols) {
    const bool by_col = rows >= cols;  // give every element of the smaller side a partner
    const int small = by_col ? cols : rows;
    const int large = by_col ? rows : cols;
    auto at = [&](int s, int l) { return by_col ? cost[l * cols + s] : cost[s * cols + l]; };
    std::vector<char> used(large, 0);
    double best = std::numeric_limits<double>::infinity();
    std::function<void(int, double)> go = [&](int s, double acc) {
        if (s == small) {
            best = std::min(best, acc);
            return;
        }
        for (int l = 0; l < large; ++l) {
            if (used[l]) continue;
            used[l] = 1;
            go(s + 1, acc + at(s, l));
            used[l] = 0;
        }
    };
    go(0, 0.0);
    return best;
}

MaskGrid convex_fill(const std::vector<double>& xy, int height, int width) {
    const size_t n = xy.size() / 2;
    MaskGrid out(height, width);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            const double px = c + 0.5, py = r + 0.5;
            int pos = 0, neg = 0;
            for (size_t k = 0; k < n; ++k) {
                const double ax = xy[2 * k], ay = xy[2 * k + 1];
                const double bx = xy[2 * ((k + 1) % n)], by = xy[2 * ((k + 1) % n) + 1];
                const double cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
                if (cross > 0) ++pos;
                if (cross < 0) ++neg;
            }
            out.at(r, c) = (pos == 0 || neg == 0) ? 1 : 0;
        }
    return out;
}

int argmax(const std::vector<double>& scores) {
    int best = 0;
    for (int i = 0; i < static_cast<int>(scores.size()); ++i)
        if (scores[i] > scores[best]) best = i;
    return best;
}

namespace {

MaskGrid blob_mask(int h, int w, std::mt19937_64& rng) {
    MaskGrid m(h, w);
    const int count = std::uniform_int_distribution<int>(1, 4)(rng);
    for (int k = 0; k < count; ++k) {
        const int x0 = std::uniform_int_distribution<int>(0, w - 1)(rng);
        const int y0 = std::uniform_int_distribution<int>(0, h - 1)(rng);
        const int x1 = std::uniform_int_distribution<int>(x0 + 1, w)(rng);
        const int y1 = std::uniform_int_distribution<int>(y0 + 1, h)(rng);
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) m.at(y, x) = 1;
    }
    return m;
}

MaskGrid noise_mask(int h, int w, std::mt19937_64& rng, double p) {
    std::bernoulli_distribution bit(p);
    MaskGrid m(h, w);
    for (auto& v : m.data) v = bit(rng);
    return m;
}

std::string describe_failure(const std::string& what, int trial) {
    std::ostringstream s;
    s << what << " (trial " << trial << ")";
    return s.str();
}

}  // namespace

SuiteResult disk_suite(int trials, uint64_t seed) {
    std::mt19937_64 rng(seed);
    SuiteResult result;
    for (int t = 0; t < trials && result.pass; ++t) {
        const int h = std::uniform_int_distribution<int>(1, 64)(rng);
        const int w = std::uniform_int_distribution<int>(1, 64)(rng);
        const int radius = std::uniform_int_distribution<int>(1, 12)(rng);
        const int count = std::uniform_int_distribution<int>(0, 8)(rng);
        std::vector<Click> clicks;
        for (int k = 0; k < count; ++k)
            clicks.push_back({std::uniform_int_distribution<int>(0, w - 1)(rng),
                              std::uniform_int_distribution<int>(0, h - 1)(rng),
                              std::bernoulli_distribution(0.5)(rng) ? Polarity::positive : Polarity::negative, k});
        auto got = encode_clicks_disk(clicks, h, w, radius).grid.contiguous();
        auto want = disk_map(clicks, h, w, radius);
        const float* g = got.data_ptr<float>();
        for (size_t i = 0; i < want.size(); ++i)
            if (g[i] != static_cast<float>(want[i])) {
                result.pass = false;
                result.detail = describe_failure("disk map mismatch", t);
                break;
            }
        ++result.cases;
    }
    return result;
}

SuiteResult hungarian_suite(int trials, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    SuiteResult result;
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        const int rows = std::uniform_int_distribution<int>(1, 7)(rng);
        const int cols = std::uniform_int_distribution<int>(1, 4)(rng);
        std::vector<double> cost(static_cast<size_t>(rows) * cols);
        // Some trials use coarse integer costs so ties actually occur.
        const bool coarse = t % 4 == 0;
        for (auto& c : cost) c = coarse ? std::floor(unit(rng) * 3.0) : unit(rng) * 10.0 - 2.0;
        auto a = hungarian_match(cost, rows, cols);
        const double want = min_assignment_cost(cost, rows, cols);

        double sum = 0.0;
        std::set<int> used_rows, used_cols;
        for (auto [p, q] : a.pairs) {
            sum += cost[static_cast<size_t>(p) * cols + q];
            used_rows.insert(p);
            used_cols.insert(q);
        }
        std::set<int> all_rows(a.unmatched_proposals.begin(), a.unmatched_proposals.end());
        all_rows.insert(used_rows.begin(), used_rows.end());
        const bool shape_ok = static_cast<int>(a.pairs.size()) == std::min(rows, cols) &&
                              used_rows.size() == a.pairs.size() && used_cols.size() == a.pairs.size() &&
                              static_cast<int>(all_rows.size()) == rows &&
                              a.unmatched_proposals.size() + a.pairs.size() == static_cast<size_t>(rows);
        worst = std::max(worst, std::abs(sum - want));
        if (!shape_ok || std::abs(sum - want) > 1e-9 || std::abs(a.total_cost - sum) > 1e-9) {
            result.pass = false;
            result.detail = describe_failure("assignment not optimal or not injective", t);
            break;
        }
        ++result.cases;
    }
    if (result.pass) {
        std::ostringstream s;
        s << "max |cost - brute force| = " << worst;
        result.detail = s.str();
    }
    return result;
}

SuiteResult iou_suite(int trials, uint64_t seed) {
    std::mt19937_64 rng(seed);
    SuiteResult result;
    for (int t = 0; t < trials; ++t) {
        const int h = std::uniform_int_distribution<int>(1, 64)(rng);
        const int w = std::uniform_int_distribution<int>(1, 64)(rng);
        const double p = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        auto a = noise_mask(h, w, rng, p);
        auto b = t % 3 == 0 ? a : noise_mask(h, w, rng, p);
        if (piclick::iou(a, b) != oracle::iou(a, b)) {
            result.pass = false;
            result.detail = describe_failure("IoU mismatch", t);
            break;
        }
        ++result.cases;
    }
    return result;
}

SuiteResult feasible_suite(int trials, uint64_t seed) {
    std::mt19937_64 rng(seed);
    SuiteResult result;
    for (int t = 0; t < trials; ++t) {
        const int h = std::uniform_int_distribution<int>(1, 24)(rng);
        const int w = std::uniform_int_distribution<int>(1, 24)(rng);
        const int nm = std::uniform_int_distribution<int>(1, 6)(rng);
        const int nc = std::uniform_int_distribution<int>(1, 4)(rng);
        std::vector<MaskGrid> masks;
        for (int m = 0; m < nm; ++m) masks.push_back(blob_mask(h, w, rng));
        std::vector<Click> clicks;
        for (int k = 0; k < nc; ++k)
            clicks.push_back({std::uniform_int_distribution<int>(0, w - 1)(rng),
                              std::uniform_int_distribution<int>(0, h - 1)(rng),
                              std::bernoulli_distribution(0.7)(rng) ? Polarity::positive : Polarity::negative, k});
        auto want = feasible(masks, clicks);
        auto got = feasible_targets(masks, clicks);
        std::vector<size_t> got_idx = got ? got->source_indices : std::vector<size_t>{};
        bool ok = got_idx == want;
        if (got)
            for (size_t i = 0; i < got->masks.size(); ++i) ok = ok && got->masks[i] == masks[got_idx[i]];
        if (!ok) {
            result.pass = false;
            result.detail = describe_failure("feasible set mismatch", t);
            break;
        }
        ++result.cases;
    }
    return result;
}

SuiteResult click_placement_suite(int trials, uint64_t seed) {
    std::mt19937_64 rng(seed);
    SuiteResult result;
    for (int t = 0; t < trials; ++t) {
        const bool big = t % 10 == 0;
        const int h = big ? 64 : std::uniform_int_distribution<int>(1, 32)(rng);
        const int w = big ? 64 : std::uniform_int_distribution<int>(1, 32)(rng);
        MaskGrid gt, pred;
        switch (t % 3) {
            case 0:
                gt = blob_mask(h, w, rng);
                pred = blob_mask(h, w, rng);
                break;
            case 1:
                gt = noise_mask(h, w, rng, 0.5);
                pred = noise_mask(h, w, rng, 0.5);
                break;
            default:
                gt = blob_mask(h, w, rng);
                pred = MaskGrid(h, w);
                break;
        }
        auto want = corrective_click(pred, gt);
        auto got = next_click(pred, gt);
        bool ok = want.has_value() == got.has_value();
        if (ok && want)
            ok = want->x == got->x && want->y == got->y && want->polarity == got->polarity &&
                 pred.at(got->y, got->x) != gt.at(got->y, got->x);
        // Distance transform itself against the full scan, on the gt mask.
        if (ok && !big) {
            auto dt = squared_distance_to_boundary(gt);
            for (int r = 0; r < h && ok; ++r)
                for (int c = 0; c < w && ok; ++c) ok = dt.at(r, c) == squared_depth(gt, r, c);
        }
        // Largest component against union-find.
        if (ok) {
            auto comps = components(gt);
            auto largest = largest_component(gt);
            if (comps.empty()) {
                ok = !largest.has_value();
            } else {
                const std::vector<int>* best = &comps.front();
                for (const auto& comp : comps)
                    if (comp.size() > best->size()) best = &comp;
                MaskGrid expect(h, w);
                for (int i : *best) expect.data[i] = 1;
                ok = largest && *largest == expect;
            }
        }
        if (!ok) {
            result.pass = false;
            result.detail = describe_failure("click placement mismatch", t);
            break;
        }
        ++result.cases;
    }
    return result;
}

}  // namespace piclick::oracle
