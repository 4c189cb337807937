#include "support.hpp"

#include <atomic>

namespace piclick::testing {

MaskGrid rect_mask(int height, int width, int x0, int y0, int x1, int y1) {
    MaskGrid m(height, width);
    for (int y = std::max(0, y0); y < std::min(height, y1); ++y)
        for (int x = std::max(0, x0); x < std::min(width, x1); ++x) m.at(y, x) = 1;
    return m;
}

MaskGrid random_mask(int height, int width, std::mt19937_64& rng, double p) {
    std::bernoulli_distribution bit(p);
    MaskGrid m(height, width);
    for (auto& v : m.data) v = bit(rng) ? 1 : 0;
    return m;
}

torch::Tensor mask_logits(const MaskGrid& mask, double margin, torch::Dtype dtype) {
    auto t = torch::empty({mask.height, mask.width}, torch::kFloat64);
    auto a = t.accessor<double, 2>();
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) a[y][x] = mask.at(y, x) ? margin : -margin;
    return t.to(dtype);
}

Proposals make_proposals(const std::vector<MaskGrid>& masks, const std::vector<double>& conf,
                         const std::vector<double>& iou_pred) {
    std::vector<torch::Tensor> logits;
    for (const auto& m : masks) logits.push_back(mask_logits(m));
    Proposals p;
    p.mask_logits = torch::stack(logits);
    p.conf = torch::tensor(conf, torch::kFloat64).to(torch::kFloat32);
    p.iou_pred = torch::tensor(iou_pred, torch::kFloat64).to(torch::kFloat32);
    return p;
}

Proposals ScriptedSegmenter::predict(const SegmentRequest& request) const {
    int call;
    {
        std::lock_guard lock(mutex_);
        call = static_cast<int>(log_.size());
        log_.push_back(request);
    }
    return script_(request, call);
}

std::vector<SegmentRequest> ScriptedSegmenter::requests() const {
    std::lock_guard lock(mutex_);
    return log_;
}

int ScriptedSegmenter::calls() const {
    std::lock_guard lock(mutex_);
    return static_cast<int>(log_.size());
}

torch::Tensor gray_image(int height, int width, float value) {
    return torch::full({3, height, width}, value, torch::kFloat32);
}

ModelConfig tiny_config(int image_size, int num_queries) {
    ModelConfig c;
    c.image_size = image_size;
    c.dim = 16;
    c.heads = 2;
    c.ffn_dim = 32;
    c.encoder_depth = 1;
    c.num_queries = num_queries;
    c.decoder_layers = 3;
    c.disk_radius = 3;
    return c;
}

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("piclick_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

}  // namespace piclick::testing
