#include "piclick/click_encoding.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace piclick {

DiskMap encode_clicks_disk(const std::vector<Click>& clicks, int height, int width, int radius) {
    if (radius < 1) {
        throw InvalidInput("disk radius must be >= 1");
    }
    validate_clicks(clicks, height, width);
    auto grid = torch::zeros({2, height, width}, torch::kFloat32);
    auto acc = grid.accessor<float, 3>();
    const int r2 = radius * radius;
    for (const auto& c : clicks) {
        const int channel = c.positive() ? 0 : 1;
        for (int i = std::max(0, c.y - radius); i <= std::min(height - 1, c.y + radius); ++i) {
            for (int j = std::max(0, c.x - radius); j <= std::min(width - 1, c.x + radius); ++j) {
                const int dx = j - c.x;
                const int dy = i - c.y;
                if (dx * dx + dy * dy <= r2) {
                    acc[channel][i][j] = 1.0f;
                }
            }
        }
    }
    return DiskMap{grid, radius};
}

namespace {

void check_dim(int dim) {
    if (dim <= 0 || dim % 4 != 0) {
        throw ConfigError("positional encoding width must be a positive multiple of 4 (got " +
                          std::to_string(dim) + ")");
    }
}

torch::Tensor encode_axis(const torch::Tensor& coord, int extent, int dim) {
    const int64_t nfreq = dim / 4;
    auto k = torch::arange(nfreq, coord.options());
    auto freq = torch::pow(10000.0, -k / static_cast<double>(nfreq));
    auto angle = (coord * (2.0 * std::numbers::pi / extent)).unsqueeze(-1) * freq;
    // (..., nfreq, 2) -> (..., 2*nfreq) interleaves sin/cos per frequency
    return torch::stack({torch::sin(angle), torch::cos(angle)}, -1).flatten(-2);
}

}  // namespace

torch::Tensor positional_encoding(const torch::Tensor& xy, int height, int width, int dim) {
    check_dim(dim);
    auto x = xy.select(-1, 0);
    auto y = xy.select(-1, 1);
    return torch::cat({encode_axis(x, width, dim), encode_axis(y, height, dim)}, -1);
}

torch::Tensor positional_encoding(double x, double y, int height, int width, int dim, torch::TensorOptions options) {
    if (x < 0 || x >= width || y < 0 || y >= height) {
        throw InvalidInput("positional_encoding: coordinate outside the image");
    }
    auto xy = torch::tensor({x, y}, options);
    return positional_encoding(xy, height, width, dim);
}

ClickEncoderImpl::ClickEncoderImpl(int dim) : dim_(dim) {
    check_dim(dim);
    positive_embedding = register_parameter("positive", torch::randn({dim}));
    negative_embedding = register_parameter("negative", torch::randn({dim}));
}

torch::Tensor ClickEncoderImpl::forward(const torch::Tensor& xy, const torch::Tensor& polarity, int height,
                                        int width) {
    auto pe = positional_encoding(xy.to(positive_embedding.dtype()), height, width, dim_);
    auto t = polarity.to(positive_embedding.dtype()).unsqueeze(-1);
    return pe + t * positive_embedding + (1.0 - t) * negative_embedding;
}

}  // namespace piclick
