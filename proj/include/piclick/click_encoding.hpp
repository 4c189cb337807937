#pragma once

#include <torch/torch.h>

#include <vector>

#include "piclick/grid.hpp"

namespace piclick {

/// Two-channel binary click map: channel 0 marks disks around positive
/// clicks, channel 1 around negative clicks.
struct DiskMap {
    torch::Tensor grid;  // 2 x H x W float, values exactly {0, 1}
    int radius = 0;
};

/// Pixel (row i, col j) is set iff (j - x)^2 + (i - y)^2 <= radius^2 for some
/// click of that polarity. Disks clip at the border and union on overlap.
DiskMap encode_clicks_disk(const std::vector<Click>& clicks, int height, int width, int radius);

/// Sine/cosine positional encoding of a pixel position.
///
/// The first D/2 entries encode x, the last D/2 encode y. Each coordinate is
/// normalized to [0, 2*pi) by the image extent and expanded over D/4 geometric
/// frequencies 10000^(-k / (D/4)), interleaved as [sin f0, cos f0, sin f1, ...].
/// Coordinates may be fractional (feature-map token centres).
torch::Tensor positional_encoding(double x, double y, int height, int width, int dim,
                                  torch::TensorOptions options = torch::kFloat64);

/// Batched form: xy is (..., 2) holding (x, y); result is (..., D) in xy's dtype.
torch::Tensor positional_encoding(const torch::Tensor& xy, int height, int width, int dim);

/// Learned polarity embeddings on top of the positional encoding:
/// E_c = PE(x_c, y_c) + t_c * E_p + (1 - t_c) * E_n.
class ClickEncoderImpl : public torch::nn::Module {
public:
    explicit ClickEncoderImpl(int dim);

    /// xy: B x C x 2 pixel coords, polarity: B x C in {0, 1}. Returns B x C x D.
    torch::Tensor forward(const torch::Tensor& xy, const torch::Tensor& polarity, int height, int width);

    torch::Tensor positive_embedding;
    torch::Tensor negative_embedding;

private:
    int dim_;
};
TORCH_MODULE(ClickEncoder);

}  // namespace piclick
