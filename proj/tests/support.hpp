#pragma once

#include <filesystem>
#include <functional>
#include <mutex>
#include <ostream>
#include <random>
#include <vector>

#include "piclick/dataset.hpp"
#include "piclick/model.hpp"
#include "piclick/segmenter.hpp"

namespace piclick {

// Lets doctest print clicks, grids and lists of them in failure messages.
inline std::ostream& operator<<(std::ostream& os, const Click& c) { return os << describe(c); }

template <typename T>
std::ostream& operator<<(std::ostream& os, const Grid<T>& g) {
    return os << "grid " << g.height << "x" << g.width;
}

}  // namespace piclick

namespace piclick::testing {

/// Axis-aligned rectangle [x0, x1) x [y0, y1).
MaskGrid rect_mask(int height, int width, int x0, int y0, int x1, int y1);

/// Each pixel set independently with probability p.
MaskGrid random_mask(int height, int width, std::mt19937_64& rng, double p = 0.5);

/// Logits of +margin on the mask and -margin elsewhere.
torch::Tensor mask_logits(const MaskGrid& mask, double margin = 10.0, torch::Dtype dtype = torch::kFloat32);

Proposals make_proposals(const std::vector<MaskGrid>& masks, const std::vector<double>& conf,
                         const std::vector<double>& iou_pred);

/// Segmenter driven by a callback; every request is logged.
class ScriptedSegmenter : public Segmenter {
public:
    using Script = std::function<Proposals(const SegmentRequest&, int call)>;

    ScriptedSegmenter(int num_queries, Script script) : n_(num_queries), script_(std::move(script)) {}

    Proposals predict(const SegmentRequest& request) const override;
    int num_queries() const override { return n_; }

    std::vector<SegmentRequest> requests() const;
    int calls() const;

private:
    int n_;
    Script script_;
    mutable std::mutex mutex_;
    mutable std::vector<SegmentRequest> log_;
};

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

/// Plain gray image, 3 x h x w.
torch::Tensor gray_image(int height, int width, float value = 0.5f);

/// Small model config for fast tests.
ModelConfig tiny_config(int image_size = 32, int num_queries = 3);

}  // namespace piclick::testing
