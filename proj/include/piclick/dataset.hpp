#pragma once

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <vector>

#include "piclick/grid.hpp"

namespace piclick {

/// Image plus every annotated instance mask.
struct TrainingSample {
    std::string name;
    torch::Tensor image;  // 3 x H x W float in [0,1]
    std::vector<MaskGrid> masks;
    std::vector<std::string> ids;  // one stable identifier per mask
};

struct LoadReport {
    size_t loaded = 0;
    size_t skipped_samples = 0;
    size_t skipped_annotations = 0;
    std::vector<std::string> warnings;
};

struct Dataset {
    std::vector<TrainingSample> samples;
    LoadReport report;
};

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class DatasetFormat { coco_json, folder_pngs };

/// coco_json if <root>/annotations.json exists, folder_pngs otherwise.
DatasetFormat detect_format(const std::filesystem::path& root);
DatasetFormat parse_dataset_format(const std::string& name);

/// Loads every sample under root. Malformed annotations or unreadable images
/// are skipped with a warning; an unreadable root throws DatasetError.
Dataset load_dataset(const std::filesystem::path& root, DatasetFormat format);
Dataset load_dataset(const std::filesystem::path& root);

/// Writes <name>.png plus <name>.mask_<k>.png per sample.
void save_folder_dataset(const std::vector<TrainingSample>& samples, const std::filesystem::path& root);

/// Even-odd polygon fill at pixel centres: pixel (x, y) is set iff
/// (x + 0.5, y + 0.5) lies inside. xy holds x0, y0, x1, y1, ...
MaskGrid rasterize_polygon(const std::vector<double>& xy, int height, int width);

/// COCO run-length decoding (column-major counts starting with a zero run).
MaskGrid decode_coco_rle(const std::vector<uint32_t>& counts, int height, int width);
/// COCO compressed-string counts to plain counts.
std::vector<uint32_t> parse_coco_rle_string(const std::string& encoded);

/// Synthetic scenes with built-in click ambiguity. Every sample carries an
/// "outer" shape with a smaller "inner" shape strictly inside it (placed away
/// from the outer's deepest point), plus 0-2 "other" shapes outside the outer.
/// Mask ids end in ":outer", ":inner" or ":other<k>". Pixel values are 8-bit
/// quantized, so a folder round-trip is lossless.
std::vector<TrainingSample> synth_ambiguity_dataset(int n, int size, uint64_t seed);

torch::Tensor image_from_mat(const cv::Mat& bgr);
cv::Mat image_to_mat(const torch::Tensor& image);
cv::Mat mask_to_mat(const MaskGrid& mask);
MaskGrid mask_from_mat(const cv::Mat& gray);

/// Resizes image (bilinear) and masks (nearest) to size x size if needed.
TrainingSample fit_to_size(const TrainingSample& sample, int size);

}  // namespace piclick
