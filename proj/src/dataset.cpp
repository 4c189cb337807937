#include "piclick/dataset.hpp"

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <regex>

namespace piclick {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- conversions

torch::Tensor image_from_mat(const cv::Mat& bgr) {
    cv::Mat rgb;
    if (bgr.channels() == 1) {
        cv::cvtColor(bgr, rgb, cv::COLOR_GRAY2RGB);
    } else if (bgr.channels() == 4) {
        cv::cvtColor(bgr, rgb, cv::COLOR_BGRA2RGB);
    } else {
        cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    }
    cv::Mat u8;
    if (rgb.depth() == CV_16U) {
        rgb.convertTo(u8, CV_8U, 1.0 / 257.0);
    } else {
        u8 = rgb;
    }
    auto t = torch::from_blob(u8.data, {u8.rows, u8.cols, 3}, torch::kUInt8).clone();
    return t.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous();
}

cv::Mat image_to_mat(const torch::Tensor& image) {
    auto u8 = image.detach().to(torch::kFloat32).mul(255.0).round().clamp(0, 255).to(torch::kUInt8);
    auto hwc = u8.permute({1, 2, 0}).contiguous();
    cv::Mat rgb(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3, hwc.data_ptr<uint8_t>());
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    return bgr;
}

cv::Mat mask_to_mat(const MaskGrid& mask) {
    cv::Mat out(mask.height, mask.width, CV_8UC1);
    for (int r = 0; r < mask.height; ++r) {
        for (int c = 0; c < mask.width; ++c) {
            out.at<uint8_t>(r, c) = mask.at(r, c) != 0 ? 255 : 0;
        }
    }
    return out;
}

MaskGrid mask_from_mat(const cv::Mat& gray) {
    cv::Mat g;
    if (gray.channels() == 1) {
        g = gray;
    } else {
        cv::cvtColor(gray, g, gray.channels() == 4 ? cv::COLOR_BGRA2GRAY : cv::COLOR_BGR2GRAY);
    }
    MaskGrid out(g.rows, g.cols);
    for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) {
            const bool on = g.depth() == CV_16U ? g.at<uint16_t>(r, c) != 0 : g.at<uint8_t>(r, c) != 0;
            out.at(r, c) = on ? 1 : 0;
        }
    }
    return out;
}

TrainingSample fit_to_size(const TrainingSample& sample, int size) {
    if (sample.image.size(1) == size && sample.image.size(2) == size) {
        return sample;
    }
    TrainingSample out = sample;
    namespace F = torch::nn::functional;
    out.image = F::interpolate(sample.image.unsqueeze(0),
                               F::InterpolateFuncOptions()
                                   .size(std::vector<int64_t>{size, size})
                                   .mode(torch::kBilinear)
                                   .align_corners(false))
                    .squeeze(0)
                    .clamp(0.0, 1.0);
    out.masks.clear();
    out.ids.clear();
    for (size_t i = 0; i < sample.masks.size(); ++i) {
        cv::Mat resized;
        cv::resize(mask_to_mat(sample.masks[i]), resized, cv::Size(size, size), 0, 0, cv::INTER_NEAREST);
        MaskGrid m = mask_from_mat(resized);
        if (!empty(m)) {
            out.masks.push_back(std::move(m));
            out.ids.push_back(sample.ids[i]);
        }
    }
    return out;
}

// ---------------------------------------------------------------- rasterization

MaskGrid rasterize_polygon(const std::vector<double>& xy, int height, int width) {
    if (xy.size() < 6 || xy.size() % 2 != 0) {
        throw InvalidInput("polygon needs at least three (x, y) vertices");
    }
    MaskGrid out(height, width);
    const size_t n = xy.size() / 2;
    std::vector<double> crossings;
    for (int row = 0; row < height; ++row) {
        const double y = row + 0.5;
        crossings.clear();
        for (size_t i = 0; i < n; ++i) {
            const size_t j = (i + 1) % n;
            const double x0 = xy[2 * i], y0 = xy[2 * i + 1];
            const double x1 = xy[2 * j], y1 = xy[2 * j + 1];
            // half-open rule so shared vertices count once
            if ((y0 <= y && y1 > y) || (y1 <= y && y0 > y)) {
                crossings.push_back(x0 + (y - y0) * (x1 - x0) / (y1 - y0));
            }
        }
        std::sort(crossings.begin(), crossings.end());
        for (size_t k = 0; k + 1 < crossings.size(); k += 2) {
            // pixel centres x + 0.5 strictly between the crossings
            const int first = std::max(0, static_cast<int>(std::ceil(crossings[k] - 0.5)));
            const int last = std::min(width - 1, static_cast<int>(std::ceil(crossings[k + 1] - 0.5)) - 1);
            for (int col = first; col <= last; ++col) {
                out.at(row, col) = 1;
            }
        }
    }
    return out;
}

MaskGrid decode_coco_rle(const std::vector<uint32_t>& counts, int height, int width) {
    MaskGrid out(height, width);
    const size_t total = static_cast<size_t>(height) * static_cast<size_t>(width);
    size_t pos = 0;
    uint8_t value = 0;
    for (uint32_t run : counts) {
        if (pos + run > total) {
            throw InvalidInput("RLE counts exceed the mask size");
        }
        for (uint32_t k = 0; k < run; ++k, ++pos) {
            // column-major: pos = col * height + row
            if (value != 0) {
                out.at(static_cast<int>(pos % height), static_cast<int>(pos / height)) = 1;
            }
        }
        value ^= 1;
    }
    if (pos != total) {
        throw InvalidInput("RLE counts do not cover the mask");
    }
    return out;
}

std::vector<uint32_t> parse_coco_rle_string(const std::string& encoded) {
    std::vector<int64_t> counts;
    size_t p = 0;
    while (p < encoded.size()) {
        int64_t x = 0;
        int k = 0;
        bool more = true;
        while (more) {
            if (p >= encoded.size()) {
                throw InvalidInput("truncated compressed RLE string");
            }
            const int64_t c = static_cast<int64_t>(encoded[p]) - 48;
            x |= (c & 0x1f) << (5 * k);
            more = (c & 0x20) != 0;
            ++p;
            ++k;
            if (!more && (c & 0x10) != 0) {
                x |= -(int64_t{1} << (5 * k));
            }
        }
        if (counts.size() > 2) {
            x += counts[counts.size() - 2];
        }
        counts.push_back(x);
    }
    std::vector<uint32_t> out;
    for (int64_t c : counts) {
        if (c < 0) {
            throw InvalidInput("negative run in compressed RLE string");
        }
        out.push_back(static_cast<uint32_t>(c));
    }
    return out;
}

// ---------------------------------------------------------------- loaders

DatasetFormat detect_format(const fs::path& root) {
    return fs::exists(root / "annotations.json") ? DatasetFormat::coco_json : DatasetFormat::folder_pngs;
}

DatasetFormat parse_dataset_format(const std::string& name) {
    if (name == "coco_json" || name == "coco") return DatasetFormat::coco_json;
    if (name == "folder_pngs" || name == "folder") return DatasetFormat::folder_pngs;
    throw ConfigError("unknown dataset format '" + name + "'");
}

namespace {

void warn(LoadReport& report, std::string message) {
    report.warnings.push_back(std::move(message));
}

Dataset load_folder(const fs::path& root) {
    Dataset ds;
    static const std::regex mask_re(R"((.+)\.mask_(\d+)\.png)");
    std::map<std::string, std::map<int, fs::path>> masks;
    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        const std::string fname = entry.path().filename().string();
        std::smatch m;
        if (std::regex_match(fname, m, mask_re)) {
            masks[m[1].str()][std::stoi(m[2].str())] = entry.path();
        } else if (entry.path().extension() == ".png") {
            stems.push_back(entry.path().stem().string());
        }
    }
    std::sort(stems.begin(), stems.end());
    for (const auto& stem : stems) {
        TrainingSample s;
        s.name = stem;
        cv::Mat img = cv::imread((root / (stem + ".png")).string(), cv::IMREAD_UNCHANGED);
        if (img.empty()) {
            warn(ds.report, stem + ": unreadable image");
            ++ds.report.skipped_samples;
            continue;
        }
        s.image = image_from_mat(img);
        for (const auto& [k, path] : masks[stem]) {
            cv::Mat mm = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
            if (mm.empty() || mm.rows != img.rows || mm.cols != img.cols) {
                warn(ds.report, path.filename().string() + ": unreadable or wrong size");
                ++ds.report.skipped_annotations;
                continue;
            }
            MaskGrid mask = mask_from_mat(mm);
            if (empty(mask)) {
                warn(ds.report, path.filename().string() + ": empty mask");
                ++ds.report.skipped_annotations;
                continue;
            }
            s.masks.push_back(std::move(mask));
            s.ids.push_back(stem + ".mask_" + std::to_string(k));
        }
        if (s.masks.empty()) {
            warn(ds.report, stem + ": no usable masks");
            ++ds.report.skipped_samples;
            continue;
        }
        ds.samples.push_back(std::move(s));
    }
    ds.report.loaded = ds.samples.size();
    return ds;
}

MaskGrid decode_segmentation(const json& seg, int height, int width) {
    if (seg.is_array()) {
        MaskGrid out(height, width);
        if (seg.empty()) {
            throw InvalidInput("empty polygon list");
        }
        for (const auto& poly : seg) {
            const MaskGrid part = rasterize_polygon(poly.get<std::vector<double>>(), height, width);
            for (size_t i = 0; i < out.size(); ++i) out.data[i] |= part.data[i];
        }
        return out;
    }
    if (seg.is_object() && seg.contains("counts")) {
        int h = height;
        int w = width;
        if (seg.contains("size")) {
            h = seg.at("size").at(0).get<int>();
            w = seg.at("size").at(1).get<int>();
            if (h != height || w != width) {
                throw InvalidInput("RLE size does not match the image");
            }
        }
        const auto& counts = seg.at("counts");
        if (counts.is_string()) {
            return decode_coco_rle(parse_coco_rle_string(counts.get<std::string>()), h, w);
        }
        return decode_coco_rle(counts.get<std::vector<uint32_t>>(), h, w);
    }
    throw InvalidInput("segmentation is neither polygons nor RLE");
}

Dataset load_coco(const fs::path& root) {
    Dataset ds;
    json doc;
    {
        std::ifstream in(root / "annotations.json");
        if (!in) {
            throw DatasetError("cannot open " + (root / "annotations.json").string());
        }
        try {
            in >> doc;
        } catch (const json::exception& e) {
            throw DatasetError("annotations.json is not valid JSON: " + std::string(e.what()));
        }
    }
    if (!doc.contains("images") || !doc["images"].is_array()) {
        throw DatasetError("annotations.json has no images array");
    }
    std::map<int64_t, std::vector<const json*>> by_image;
    if (doc.contains("annotations")) {
        for (const auto& a : doc["annotations"]) {
            if (a.contains("image_id")) {
                by_image[a["image_id"].get<int64_t>()].push_back(&a);
            } else {
                warn(ds.report, "annotation without image_id");
                ++ds.report.skipped_annotations;
            }
        }
    }
    for (const auto& im : doc["images"]) {
        const int64_t id = im.value("id", int64_t{-1});
        const std::string file = im.value("file_name", std::string{});
        TrainingSample s;
        s.name = file;
        cv::Mat img = cv::imread((root / file).string(), cv::IMREAD_UNCHANGED);
        if (img.empty()) {
            warn(ds.report, file + ": unreadable image");
            ++ds.report.skipped_samples;
            continue;
        }
        s.image = image_from_mat(img);
        for (const json* a : by_image[id]) {
            const std::string ann_id = a->contains("id") ? a->at("id").dump() : std::string("?");
            try {
                MaskGrid mask = decode_segmentation(a->at("segmentation"), img.rows, img.cols);
                if (empty(mask)) {
                    throw InvalidInput("rasterizes to an empty mask");
                }
                s.masks.push_back(std::move(mask));
                s.ids.push_back(ann_id);
            } catch (const std::exception& e) {
                warn(ds.report, file + " annotation " + ann_id + ": " + e.what());
                ++ds.report.skipped_annotations;
            }
        }
        if (s.masks.empty()) {
            warn(ds.report, file + ": no usable annotations");
            ++ds.report.skipped_samples;
            continue;
        }
        ds.samples.push_back(std::move(s));
    }
    ds.report.loaded = ds.samples.size();
    return ds;
}

}  // namespace

Dataset load_dataset(const fs::path& root, DatasetFormat format) {
    std::error_code ec;
    if (!fs::is_directory(root, ec)) {
        throw DatasetError("dataset root is not a readable directory: " + root.string());
    }
    return format == DatasetFormat::coco_json ? load_coco(root) : load_folder(root);
}

Dataset load_dataset(const fs::path& root) {
    return load_dataset(root, detect_format(root));
}

void save_folder_dataset(const std::vector<TrainingSample>& samples, const fs::path& root) {
    fs::create_directories(root);
    for (const auto& s : samples) {
        if (!cv::imwrite((root / (s.name + ".png")).string(), image_to_mat(s.image))) {
            throw DatasetError("failed to write " + s.name + ".png");
        }
        for (size_t k = 0; k < s.masks.size(); ++k) {
            const auto path = root / (s.name + ".mask_" + std::to_string(k) + ".png");
            if (!cv::imwrite(path.string(), mask_to_mat(s.masks[k]))) {
                throw DatasetError("failed to write " + path.string());
            }
        }
    }
}

// ---------------------------------------------------------------- synthetic corpus

namespace {

using SynthRng = std::mt19937_64;

constexpr int kStrictAttempts = 10001;  // earlier corpora never needed more

struct Shape {
    bool ellipse = true;
    double cx = 0, cy = 0, rx = 0, ry = 0;  // rectangles use half extents

    bool contains(double x, double y) const {
        const double dx = (x - cx) / rx;
        const double dy = (y - cy) / ry;
        return ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
    }

    MaskGrid raster(int size) const {
        MaskGrid m(size, size);
        for (int r = 0; r < size; ++r) {
            for (int c = 0; c < size; ++c) {
                m.at(r, c) = contains(c + 0.5, r + 0.5) ? 1 : 0;
            }
        }
        return m;
    }
};

using Color = std::array<double, 3>;

double color_distance(const Color& a, const Color& b) {
    return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

Color random_color(SynthRng& rng, const std::vector<Color>& avoid) {
    std::uniform_real_distribution<double> u(0.05, 0.95);
    Color best{};
    double best_d = -1.0;
    for (int attempt = 0; attempt < 64; ++attempt) {
        Color c{u(rng), u(rng), u(rng)};
        double d = 1e9;
        for (const auto& a : avoid) d = std::min(d, color_distance(a, c));
        if (d >= 0.45) return c;
        if (d > best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

bool subset_of(const MaskGrid& a, const MaskGrid& b) {
    for (size_t i = 0; i < a.size(); ++i) {
        if (a.data[i] != 0 && b.data[i] == 0) return false;
    }
    return true;
}

bool overlaps(const MaskGrid& a, const MaskGrid& b) {
    for (size_t i = 0; i < a.size(); ++i) {
        if (a.data[i] != 0 && b.data[i] != 0) return true;
    }
    return false;
}

// Fills region pixels with a textured colour: base colour, a stripe pattern and noise.
void paint(std::vector<double>& canvas, int size, const MaskGrid& region, const Color& base, SynthRng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 0.03);
    const double angle = u(rng) * 3.14159265358979;
    const double period = 3.0 + 5.0 * u(rng);
    const double amp = 0.04 + 0.06 * u(rng);
    for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) {
            if (region.at(r, c) == 0) continue;
            const double t = std::sin((c * std::cos(angle) + r * std::sin(angle)) * 6.2831853 / period);
            for (int ch = 0; ch < 3; ++ch) {
                canvas[(static_cast<size_t>(ch) * size + r) * size + c] = base[ch] + amp * t + noise(rng);
            }
        }
    }
}

}  // namespace

std::vector<TrainingSample> synth_ambiguity_dataset(int n, int size, uint64_t seed) {
    if (size < 32) {
        throw InvalidInput("synth_ambiguity_dataset: size must be >= 32");
    }
    if (n < 0) {
        throw InvalidInput("synth_ambiguity_dataset: n must be >= 0");
    }
    std::vector<TrainingSample> out;
    out.reserve(static_cast<size_t>(n));
    for (int idx = 0; idx < n; ++idx) {
        std::seed_seq seq{seed, static_cast<uint64_t>(idx)};
        SynthRng rng(seq);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double s = size;

        // outer ellipse
        Shape outer;
        outer.ellipse = true;
        outer.rx = s * (0.20 + 0.10 * u(rng));
        outer.ry = s * (0.20 + 0.10 * u(rng));
        outer.cx = outer.rx + 2 + u(rng) * (s - 2 * outer.rx - 4);
        outer.cy = outer.ry + 2 + u(rng) * (s - 2 * outer.ry - 4);
        const MaskGrid outer_mask = outer.raster(size);
        const Point deepest = *deepest_point(outer_mask);

        // inner shape strictly inside the outer, away from its deepest point
        MaskGrid inner_mask;
        for (int attempt = 0;; ++attempt) {
            // Small outers cannot always fit the default inner; after enough
            // misses fall back to smaller inners, farther out, and a 1 px clearance.
            const bool relaxed = attempt >= kStrictAttempts;
            const double min_radius = relaxed ? 1.5 : 3.0;
            Shape inner;
            inner.ellipse = u(rng) < 0.5;
            inner.rx = std::max(min_radius, outer.rx * (relaxed ? 0.15 + 0.15 * u(rng) : 0.28 + 0.17 * u(rng)));
            inner.ry = std::max(min_radius, outer.ry * (relaxed ? 0.15 + 0.15 * u(rng) : 0.28 + 0.17 * u(rng)));
            const double ang = u(rng) * 6.2831853;
            const double reach = relaxed ? 0.3 + 0.5 * u(rng) : 0.35 + 0.3 * u(rng);
            const int clearance = relaxed ? 1 : 3;
            inner.cx = outer.cx + std::cos(ang) * outer.rx * reach;
            inner.cy = outer.cy + std::sin(ang) * outer.ry * reach;
            MaskGrid cand = inner.raster(size);
            // keep a one-pixel ring of outer around the inner shape
            cv::Mat dil;
            cv::dilate(mask_to_mat(cand), dil, cv::getStructuringElement(cv::MORPH_RECT, cv::Size(3, 3)));
            const MaskGrid ring = mask_from_mat(dil);
            bool ok = !empty(cand) && subset_of(ring, outer_mask);
            // the deepest outer point keeps its clearance from the inner shape
            for (int r = -clearance; ok && r <= clearance; ++r) {
                for (int c = -clearance; c <= clearance; ++c) {
                    const int rr = deepest.y + r;
                    const int cc = deepest.x + c;
                    if (r * r + c * c <= clearance * clearance && cand.contains(rr, cc) && cand.at(rr, cc) != 0) {
                        ok = false;
                        break;
                    }
                }
            }
            if (ok) {
                inner_mask = std::move(cand);
                break;
            }
            if (attempt > kStrictAttempts + 100000) {
                throw std::logic_error("synth_ambiguity_dataset: could not place an inner shape");
            }
        }

        // up to two more objects outside the outer shape (touching is allowed)
        std::vector<MaskGrid> others;
        const int n_others = static_cast<int>(u(rng) * 3.0);
        for (int k = 0; k < n_others; ++k) {
            for (int attempt = 0; attempt < 50; ++attempt) {
                Shape o;
                o.ellipse = u(rng) < 0.5;
                o.rx = s * (0.06 + 0.08 * u(rng));
                o.ry = s * (0.06 + 0.08 * u(rng));
                o.cx = o.rx + 1 + u(rng) * (s - 2 * o.rx - 2);
                o.cy = o.ry + 1 + u(rng) * (s - 2 * o.ry - 2);
                MaskGrid m = o.raster(size);
                bool ok = count_ones(m) >= 12 && !overlaps(m, outer_mask);
                for (const auto& prev : others) ok = ok && !overlaps(m, prev);
                if (ok) {
                    others.push_back(std::move(m));
                    break;
                }
            }
        }

        // paint: background, others, outer, inner
        std::vector<double> canvas(static_cast<size_t>(3) * size * size);
        const Color bg = random_color(rng, {});
        const Color outer_color = random_color(rng, {bg});
        const Color inner_color = random_color(rng, {bg, outer_color});
        paint(canvas, size, MaskGrid(size, size, 1), bg, rng);
        std::vector<Color> other_colors;
        for (const auto& m : others) {
            other_colors.push_back(random_color(rng, {bg, outer_color}));
            paint(canvas, size, m, other_colors.back(), rng);
        }
        paint(canvas, size, outer_mask, outer_color, rng);
        paint(canvas, size, inner_mask, inner_color, rng);

        auto img = torch::empty({3, size, size}, torch::kFloat32);
        auto acc = img.accessor<float, 3>();
        for (int ch = 0; ch < 3; ++ch) {
            for (int r = 0; r < size; ++r) {
                for (int c = 0; c < size; ++c) {
                    const double v = std::clamp(canvas[(static_cast<size_t>(ch) * size + r) * size + c], 0.0, 1.0);
                    acc[ch][r][c] = static_cast<float>(std::round(v * 255.0) / 255.0);
                }
            }
        }
        TrainingSample sample;
        sample.name = "synth_" + std::to_string(idx);
        sample.image = img;
        sample.masks.push_back(outer_mask);
        sample.ids.push_back(sample.name + ":outer");
        sample.masks.push_back(inner_mask);
        sample.ids.push_back(sample.name + ":inner");
        for (size_t k = 0; k < others.size(); ++k) {
            sample.masks.push_back(others[k]);
            sample.ids.push_back(sample.name + ":other" + std::to_string(k));
        }
        out.push_back(std::move(sample));
    }
    return out;
}

}  // namespace piclick
