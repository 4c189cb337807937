#include "piclick/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace piclick {

std::string describe(const Click& click) {
    std::ostringstream os;
    os << "click #" << click.order << " (x=" << click.x << ", y=" << click.y << ", "
       << (click.positive() ? "positive" : "negative") << ")";
    return os.str();
}

void validate_clicks(const std::vector<Click>& clicks, int height, int width) {
    for (const auto& c : clicks) {
        if (c.x < 0 || c.x >= width || c.y < 0 || c.y >= height) {
            std::ostringstream os;
            os << describe(c) << " is outside the " << width << "x" << height << " image";
            throw InvalidInput(os.str());
        }
    }
}

size_t count_ones(const MaskGrid& mask) {
    return static_cast<size_t>(std::count_if(mask.data.begin(), mask.data.end(), [](uint8_t v) { return v != 0; }));
}

bool empty(const MaskGrid& mask) {
    return std::none_of(mask.data.begin(), mask.data.end(), [](uint8_t v) { return v != 0; });
}

double iou(const MaskGrid& a, const MaskGrid& b) {
    if (a.height != b.height || a.width != b.width) {
        throw InvalidInput("iou: mask shapes differ");
    }
    size_t inter = 0;
    size_t uni = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        const bool pa = a.data[i] != 0;
        const bool pb = b.data[i] != 0;
        inter += (pa && pb) ? 1 : 0;
        uni += (pa || pb) ? 1 : 0;
    }
    if (uni == 0) {
        return 1.0;
    }
    return static_cast<double>(inter) / static_cast<double>(uni);
}

MaskGrid binarize(const ProbGrid& prob, float threshold) {
    MaskGrid out(prob.height, prob.width);
    for (size_t i = 0; i < prob.size(); ++i) {
        out.data[i] = prob.data[i] >= threshold ? 1 : 0;
    }
    return out;
}

MaskGrid xor_mask(const MaskGrid& a, const MaskGrid& b) {
    if (a.height != b.height || a.width != b.width) {
        throw InvalidInput("xor_mask: mask shapes differ");
    }
    MaskGrid out(a.height, a.width);
    for (size_t i = 0; i < a.size(); ++i) {
        out.data[i] = ((a.data[i] != 0) != (b.data[i] != 0)) ? 1 : 0;
    }
    return out;
}

Components label_components(const MaskGrid& mask) {
    Components result;
    result.labels = Grid<int>(mask.height, mask.width, 0);
    std::vector<std::pair<int, int>> stack;
    int next_label = 0;
    for (int r = 0; r < mask.height; ++r) {
        for (int c = 0; c < mask.width; ++c) {
            if (mask.at(r, c) == 0 || result.labels.at(r, c) != 0) {
                continue;
            }
            ++next_label;
            size_t size = 0;
            stack.clear();
            stack.emplace_back(r, c);
            result.labels.at(r, c) = next_label;
            while (!stack.empty()) {
                auto [pr, pc] = stack.back();
                stack.pop_back();
                ++size;
                constexpr int dr[4] = {-1, 1, 0, 0};
                constexpr int dc[4] = {0, 0, -1, 1};
                for (int k = 0; k < 4; ++k) {
                    const int nr = pr + dr[k];
                    const int nc = pc + dc[k];
                    if (mask.contains(nr, nc) && mask.at(nr, nc) != 0 && result.labels.at(nr, nc) == 0) {
                        result.labels.at(nr, nc) = next_label;
                        stack.emplace_back(nr, nc);
                    }
                }
            }
            result.sizes.push_back(size);
        }
    }
    return result;
}

std::optional<MaskGrid> largest_component(const MaskGrid& mask) {
    const Components comps = label_components(mask);
    if (comps.sizes.empty()) {
        return std::nullopt;
    }
    const auto best = std::max_element(comps.sizes.begin(), comps.sizes.end());
    const int label = static_cast<int>(best - comps.sizes.begin()) + 1;
    MaskGrid out(mask.height, mask.width);
    for (size_t i = 0; i < out.size(); ++i) {
        out.data[i] = comps.labels.data[i] == label ? 1 : 0;
    }
    return out;
}

namespace {

// Felzenszwalb-Huttenlocher lower envelope of parabolas over one line of squared
// distances. Every input is finite.
void edt_1d(const std::vector<int64_t>& f, std::vector<int64_t>& d, std::vector<int>& v, std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    d.assign(n, 0);
    v.assign(n, 0);
    z.assign(n + 1, 0.0);
    auto intersect = [&](int q, int p) {
        return (static_cast<double>(f[q] + int64_t{q} * q) - static_cast<double>(f[p] + int64_t{p} * p)) /
               (2.0 * (q - p));
    };
    int k = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s = intersect(q, v[k]);
        while (s <= z[k]) {
            --k;
            s = intersect(q, v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) {
            ++k;
        }
        const int64_t dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

}  // namespace

Grid<int64_t> squared_distance_to_boundary(const MaskGrid& mask) {
    // Pad by one background pixel so the image border acts as boundary.
    const int h = mask.height + 2;
    const int w = mask.width + 2;
    Grid<int64_t> work(h, w, 0);
    const int64_t far = int64_t{h + w} * (h + w);
    for (int r = 0; r < mask.height; ++r) {
        for (int c = 0; c < mask.width; ++c) {
            work.at(r + 1, c + 1) = mask.at(r, c) != 0 ? far : 0;
        }
    }
    std::vector<int64_t> f;
    std::vector<int64_t> d;
    std::vector<int> v;
    std::vector<double> z;
    for (int c = 0; c < w; ++c) {
        f.resize(h);
        for (int r = 0; r < h; ++r) {
            f[r] = work.at(r, c);
        }
        edt_1d(f, d, v, z);
        for (int r = 0; r < h; ++r) {
            work.at(r, c) = d[r];
        }
    }
    for (int r = 0; r < h; ++r) {
        f.assign(work.data.begin() + static_cast<ptrdiff_t>(r) * w, work.data.begin() + static_cast<ptrdiff_t>(r + 1) * w);
        edt_1d(f, d, v, z);
        std::copy(d.begin(), d.end(), work.data.begin() + static_cast<ptrdiff_t>(r) * w);
    }
    Grid<int64_t> out(mask.height, mask.width, 0);
    for (int r = 0; r < mask.height; ++r) {
        for (int c = 0; c < mask.width; ++c) {
            out.at(r, c) = work.at(r + 1, c + 1);
        }
    }
    return out;
}

std::optional<Point> deepest_point(const MaskGrid& mask) {
    const Grid<int64_t> dist = squared_distance_to_boundary(mask);
    std::optional<Point> best;
    int64_t best_d = 0;
    for (int r = 0; r < mask.height; ++r) {
        for (int c = 0; c < mask.width; ++c) {
            if (mask.at(r, c) != 0 && dist.at(r, c) > best_d) {
                best_d = dist.at(r, c);
                best = Point{c, r};
            }
        }
    }
    return best;
}

}  // namespace piclick
