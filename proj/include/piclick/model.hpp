#pragma once

#include <torch/torch.h>

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "piclick/click_encoding.hpp"
#include "piclick/segmenter.hpp"

namespace piclick {

struct ModelConfig {
    int image_size = 64;      // working resolution (square)
    int patch_size = 4;       // encoder patch size; F_b has stride patch_size
    int dim = 64;             // D, shared by encoder, neck, pixel decoder and decoder
    int encoder_depth = 2;
    int heads = 4;
    int ffn_dim = 128;
    int num_queries = 7;      // N
    int decoder_layers = 9;   // L, cycling the three pyramid levels
    int disk_radius = 5;
    uint64_t seed = 0;        // parameter initialization

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

/// Network input for a batch of B images with up to C clicks each.
struct ModelInput {
    torch::Tensor image;        // B x 3 x H x W
    torch::Tensor disk;         // B x 2 x H x W
    torch::Tensor prev_mask;    // B x 1 x H x W probabilities
    torch::Tensor click_xy;     // B x C x 2 (x, y)
    torch::Tensor click_pol;    // B x C, 1 positive / 0 negative
    torch::Tensor click_valid;  // B x C bool, false for padding
};

/// Packs requests into padded batch tensors in the given dtype. Every request
/// needs at least one click.
ModelInput make_input(const std::vector<SegmentRequest>& requests, int disk_radius,
                      torch::Dtype dtype = torch::kFloat32);

/// Click-aware multi-scale features.
struct FeatureBundle {
    std::array<torch::Tensor, 3> levels;  // strides 32, 16, 8; each B x D x h x w
    torch::Tensor mask_feature;           // stride 4, B x D x H/4 x W/4
};

struct ModelOutput {
    torch::Tensor mask_logits;  // B x N x H x W
    torch::Tensor conf;         // B x N
    torch::Tensor iou_pred;     // B x N
    /// Mask logits at mask-feature resolution for X_0 .. X_L (L + 1 entries).
    std::vector<torch::Tensor> layer_masks;
    /// Additive cross-attention masks used by each decoder layer (L entries).
    std::vector<torch::Tensor> attention_biases;
};

/// Multi-head scaled dot-product attention with an additive mask.
class AttentionImpl : public torch::nn::Module {
public:
    AttentionImpl(int dim, int heads);

    /// query B x Nq x D, key/value B x Nk x D, bias broadcastable to B x Nq x Nk
    /// (0 keeps a column, -inf drops it). If weights is non-null it receives the
    /// post-softmax attention, B x heads x Nq x Nk.
    torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& key, const torch::Tensor& value,
                          const torch::Tensor& bias = {}, torch::Tensor* weights = nullptr);

    torch::nn::Linear q{nullptr}, k{nullptr}, v{nullptr}, out{nullptr};
    int heads;
};
TORCH_MODULE(Attention);

/// Linear -> GELU -> Linear -> GELU -> Linear.
class Mlp3Impl : public torch::nn::Module {
public:
    Mlp3Impl(int in, int hidden, int out);
    torch::Tensor forward(const torch::Tensor& x);
    torch::nn::Linear l1{nullptr}, l2{nullptr}, l3{nullptr};
};
TORCH_MODULE(Mlp3);

/// Masked cross-attention over [spatial tokens, click tokens], then query
/// self-attention and a feed-forward block, each residual + post-norm.
class DecoderLayerImpl : public torch::nn::Module {
public:
    DecoderLayerImpl(int dim, int heads, int ffn_dim);

    /// x: B x N x D; query_pos: N x D or B x N x D, added to the attention
    /// queries (and self-attention keys), undefined for none; spatial: B x HW x D;
    /// spatial_pos: B x HW x D (added to keys); clicks: B x C x D;
    /// bias: B x N x (HW + C) from attention_bias().
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& query_pos, const torch::Tensor& spatial,
                          const torch::Tensor& spatial_pos,
                          const torch::Tensor& clicks, const torch::Tensor& bias,
                          torch::Tensor* cross_weights = nullptr);

    Attention cross_attn{nullptr}, self_attn{nullptr};
    torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr}, norm3{nullptr};
    torch::nn::Linear ffn1{nullptr}, ffn2{nullptr};
};
TORCH_MODULE(DecoderLayer);

/// Additive attention mask: mask_logits (B x N x h x w) resized to level_hw and
/// thresholded at probability 0.5; kept spatial columns get 0, others -inf.
/// Click columns get 0 where click_valid, -inf for padding. Result B x N x (hw + C).
torch::Tensor attention_bias(const torch::Tensor& mask_logits, std::array<int64_t, 2> level_hw,
                             const torch::Tensor& click_valid);

/// Per-pixel dot product of per-query weights (B x N x D) with mask features
/// (B x D x h x w), giving B x N x h x w logits.
torch::Tensor mask_dot_product(const torch::Tensor& weights, const torch::Tensor& mask_feature);

class PiClickNetImpl : public torch::nn::Module {
public:
    explicit PiClickNetImpl(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }

    /// Patch embeddings, tiny ViT encoder, four-branch neck and pixel decoder.
    FeatureBundle encode_image(const torch::Tensor& image, const torch::Tensor& disk,
                               const torch::Tensor& prev_mask);
    /// B x C x D click embeddings.
    torch::Tensor encode_clicks(const ModelInput& input);
    /// Mask logits (mask-feature resolution) for a query state.
    torch::Tensor mask_head(const torch::Tensor& queries, const torch::Tensor& mask_feature);
    /// (conf, iou_pred), each B x N in (0,1).
    std::pair<torch::Tensor, torch::Tensor> trm_heads(const torch::Tensor& queries);

    /// fixed_biases, when given, replaces the per-layer attention masks derived
    /// from the previous layer's prediction (the thresholding is then held
    /// constant, e.g. for finite differences).
    ModelOutput forward(const ModelInput& input, const std::vector<torch::Tensor>* fixed_biases = nullptr);

    // encoder
    torch::nn::Conv2d image_embed{nullptr}, map_embed{nullptr};
    torch::nn::ModuleList encoder_blocks{nullptr};
    torch::nn::LayerNorm encoder_norm{nullptr};
    // neck: branches producing strides 4, 8, 16, 32
    torch::nn::ModuleList neck{nullptr};
    // pixel decoder
    torch::nn::ModuleList lateral{nullptr}, output_convs{nullptr};
    torch::nn::Conv2d mask_features{nullptr};
    // transformer decoder
    ClickEncoder click_encoder{nullptr};
    torch::Tensor query_feat;    // N x D, X_0
    torch::Tensor query_pos;     // N x D, per-query identity added at every attention
    torch::Tensor level_embed;   // 3 x D
    torch::nn::ModuleList layers{nullptr};
    torch::nn::LayerNorm decoder_norm{nullptr};
    Mlp3 mask_embed{nullptr}, conf_head{nullptr}, iou_head{nullptr};

private:
    ModelConfig config_;
};
TORCH_MODULE(PiClickNet);

/// Segmenter backed by the network, running at the working resolution with
/// autograd disabled. Inputs of other sizes are resized in and logits resized out.
class NetSegmenter : public Segmenter {
public:
    explicit NetSegmenter(PiClickNet net);

    Proposals predict(const SegmentRequest& request) const override;
    std::vector<Proposals> predict_batch(const std::vector<SegmentRequest>& requests) const override;
    int num_queries() const override;

    PiClickNet net() const { return net_; }

private:
    PiClickNet net_;
};

/// Deterministic hash over all parameter bytes, for "no update happened" checks.
uint64_t parameter_hash(const torch::nn::Module& module);

}  // namespace piclick
