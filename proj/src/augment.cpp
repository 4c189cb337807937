#include <opencv2/imgproc.hpp>

#include <cmath>
#include <numbers>

#include "piclick/training.hpp"

namespace piclick {

namespace {

cv::Mat hwc(const torch::Tensor& image) {
    auto t = image.to(torch::kFloat32).permute({1, 2, 0}).contiguous();
    return cv::Mat(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_32FC3, t.data_ptr<float>()).clone();
}

torch::Tensor chw(const cv::Mat& mat) {
    auto t = torch::from_blob(const_cast<float*>(mat.ptr<float>()), {mat.rows, mat.cols, 3}, torch::kFloat32);
    return t.permute({2, 0, 1}).contiguous().clone();
}

bool is_identity_geometry(const AugmentConfig& config, const TrainingSample& sample, int size) {
    return !config.resize && !config.rotate && !config.crop && sample.image.size(1) == size &&
           sample.image.size(2) == size;
}

}  // namespace

TrainingSample flip_horizontal(const TrainingSample& sample) {
    TrainingSample out = sample;
    out.image = sample.image.flip({2}).contiguous();
    for (auto& mask : out.masks) {
        const auto& src = mask;
        MaskGrid flipped(src.height, src.width);
        for (int r = 0; r < src.height; ++r)
            for (int c = 0; c < src.width; ++c) flipped.at(r, c) = src.at(r, src.width - 1 - c);
        mask = std::move(flipped);
    }
    return out;
}

std::optional<TrainingSample> augment(const TrainingSample& sample, const AugmentConfig& config, int working_size,
                                      Rng& rng) {
    if (!config.any() && sample.image.size(1) == working_size && sample.image.size(2) == working_size)
        return sample;

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int h = static_cast<int>(sample.image.size(1));
    const int w = static_cast<int>(sample.image.size(2));
    const bool geometric = !is_identity_geometry(config, sample, working_size);
    cv::Mat image = geometric ? hwc(sample.image) : cv::Mat();

    for (int attempt = 0; attempt <= config.max_crop_retries; ++attempt) {
        TrainingSample out;
        out.name = sample.name;
        out.ids = sample.ids;

        if (geometric) {
            // Fit the long side to the working size first, then apply scale/rotation.
            const double fit = static_cast<double>(working_size) / std::max(h, w);
            const double scale = config.resize ? config.scale_min + (config.scale_max - config.scale_min) * unit(rng) : 1.0;
            const double angle =
                config.rotate ? (2.0 * unit(rng) - 1.0) * config.max_rotation_deg * std::numbers::pi / 180.0 : 0.0;
            const double s = fit * scale;
            const double scaled_w = w * s, scaled_h = h * s;
            double off_x = (scaled_w - working_size) / 2.0;
            double off_y = (scaled_h - working_size) / 2.0;
            if (config.crop) {
                off_x = std::min(0.0, 2 * off_x) + std::abs(2 * off_x) * unit(rng);
                off_y = std::min(0.0, 2 * off_y) + std::abs(2 * off_y) * unit(rng);
                off_x = std::round(off_x);
                off_y = std::round(off_y);
            }
            // Pixel-centre convention: source centre maps to scaled centre, then the window offset.
            const double cx = w / 2.0, cy = h / 2.0;
            const double a = s * std::cos(angle), b = s * std::sin(angle);
            cv::Matx23d m(a, -b, 0.0, b, a, 0.0);
            const double tx = scaled_w / 2.0 - off_x, ty = scaled_h / 2.0 - off_y;
            m(0, 2) = tx - (a * (cx - 0.5) - b * (cy - 0.5)) - 0.5;
            m(1, 2) = ty - (b * (cx - 0.5) + a * (cy - 0.5)) - 0.5;

            cv::Mat warped;
            cv::warpAffine(image, warped, m, cv::Size(working_size, working_size), cv::INTER_LINEAR,
                           cv::BORDER_CONSTANT, cv::Scalar::all(0));
            out.image = chw(warped);
            for (const auto& mask : sample.masks) {
                cv::Mat mw;
                cv::warpAffine(mask_to_mat(mask), mw, m, cv::Size(working_size, working_size), cv::INTER_NEAREST,
                               cv::BORDER_CONSTANT, cv::Scalar::all(0));
                out.masks.push_back(mask_from_mat(mw));
            }
        } else {
            out.image = sample.image;
            out.masks = sample.masks;
        }

        if (config.flip && unit(rng) < 0.5) out = flip_horizontal(out);

        if (config.color) {
            const double brightness = (2.0 * unit(rng) - 1.0) * config.brightness;
            const double contrast = 1.0 + (2.0 * unit(rng) - 1.0) * config.contrast;
            auto mean = out.image.mean();
            out.image = ((out.image - mean) * contrast + mean + brightness).clamp(0.0, 1.0);
        }

        bool all_nonempty = true;
        for (const auto& mask : out.masks) all_nonempty = all_nonempty && !empty(mask);
        if (all_nonempty) return out;
        if (!geometric) break;  // nothing random left that could bring a mask back
    }
    return std::nullopt;
}

}  // namespace piclick
