#include "piclick/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace piclick {

namespace F = torch::nn::functional;

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
    if (image_size <= 0 || image_size % 32 != 0) fail("image_size must be a positive multiple of 32");
    if (patch_size < 1 || patch_size > 32 || (patch_size & (patch_size - 1)) != 0)
        fail("patch_size must be a power of two in [1, 32]");
    if (dim <= 0 || dim % 4 != 0) fail("dim must be a positive multiple of 4");
    if (heads < 1 || dim % heads != 0) fail("dim must be divisible by heads");
    if (ffn_dim < 1) fail("ffn_dim must be >= 1");
    if (encoder_depth < 0) fail("encoder_depth must be >= 0");
    if (num_queries < 1) fail("num_queries must be >= 1");
    if (decoder_layers < 1) fail("decoder_layers must be >= 1");
    if (disk_radius < 1) fail("disk_radius must be >= 1");
}

// ---------------------------------------------------------------- Proposals

MaskGrid Proposals::binary_mask(int64_t i) const {
    auto m = (mask_logits[i] >= 0).to(torch::kUInt8).contiguous();
    MaskGrid out(static_cast<int>(m.size(0)), static_cast<int>(m.size(1)));
    std::memcpy(out.data.data(), m.data_ptr<uint8_t>(), out.size());
    return out;
}

ProbGrid Proposals::probabilities(int64_t i) const {
    auto p = torch::sigmoid(mask_logits[i]).to(torch::kFloat32).contiguous();
    ProbGrid out(static_cast<int>(p.size(0)), static_cast<int>(p.size(1)));
    std::memcpy(out.data.data(), p.data_ptr<float>(), out.size() * sizeof(float));
    return out;
}

std::vector<Proposals> Segmenter::predict_batch(const std::vector<SegmentRequest>& requests) const {
    std::vector<Proposals> out;
    out.reserve(requests.size());
    for (const auto& r : requests) {
        out.push_back(predict(r));
    }
    return out;
}

namespace {

int64_t argmax_lowest(const std::vector<double>& scores) {
    int64_t best = 0;
    for (size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[static_cast<size_t>(best)]) {
            best = static_cast<int64_t>(i);
        }
    }
    return best;
}

std::vector<double> to_doubles(const torch::Tensor& t) {
    auto c = t.to(torch::kFloat64).contiguous();
    return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

}  // namespace

std::pair<int64_t, double> select_mask(const Proposals& proposals) {
    if (proposals.size() == 0) {
        throw InvalidInput("select_mask: no proposals");
    }
    const auto conf = to_doubles(proposals.conf);
    const auto iou = to_doubles(proposals.iou_pred);
    std::vector<double> product(conf.size());
    for (size_t i = 0; i < conf.size(); ++i) {
        product[i] = iou[i] * conf[i];
    }
    const int64_t best = argmax_lowest(product);
    return {best, product[static_cast<size_t>(best)]};
}

SelectionMode parse_selection_mode(const std::string& name) {
    if (name == "iou_only") return SelectionMode::iou_only;
    if (name == "conf_only") return SelectionMode::conf_only;
    if (name == "product") return SelectionMode::product;
    throw ConfigError("unknown selection mode '" + name + "'");
}

std::string to_string(SelectionMode mode) {
    switch (mode) {
        case SelectionMode::iou_only: return "iou_only";
        case SelectionMode::conf_only: return "conf_only";
        case SelectionMode::product: return "product";
    }
    return "product";
}

int64_t select_by_mode(const Proposals& proposals, SelectionMode mode) {
    if (proposals.size() == 0) {
        throw InvalidInput("select_by_mode: no proposals");
    }
    switch (mode) {
        case SelectionMode::iou_only: return argmax_lowest(to_doubles(proposals.iou_pred));
        case SelectionMode::conf_only: return argmax_lowest(to_doubles(proposals.conf));
        case SelectionMode::product: return select_mask(proposals).first;
    }
    return 0;
}

// ---------------------------------------------------------------- inputs

ModelInput make_input(const std::vector<SegmentRequest>& requests, int disk_radius, torch::Dtype dtype) {
    if (requests.empty()) {
        throw InvalidInput("make_input: empty batch");
    }
    const int64_t h = requests.front().image.size(1);
    const int64_t w = requests.front().image.size(2);
    size_t max_clicks = 0;
    for (const auto& r : requests) {
        if (r.image.dim() != 3 || r.image.size(0) != 3 || r.image.size(1) != h || r.image.size(2) != w) {
            throw InvalidInput("make_input: images must be 3 x H x W and share one size");
        }
        if (r.clicks.empty()) {
            throw InvalidInput("make_input: every request needs at least one click");
        }
        if (r.prev_mask.size() != 0 && (r.prev_mask.height != h || r.prev_mask.width != w)) {
            throw InvalidInput("make_input: previous mask size differs from the image");
        }
        max_clicks = std::max(max_clicks, r.clicks.size());
    }
    const auto b = static_cast<int64_t>(requests.size());
    const auto c = static_cast<int64_t>(max_clicks);
    ModelInput in;
    std::vector<torch::Tensor> images, disks, prevs;
    auto xy = torch::zeros({b, c, 2}, torch::kFloat64);
    auto pol = torch::zeros({b, c}, torch::kFloat64);
    auto valid = torch::zeros({b, c}, torch::kBool);
    auto xy_a = xy.accessor<double, 3>();
    auto pol_a = pol.accessor<double, 2>();
    auto valid_a = valid.accessor<bool, 2>();
    for (int64_t i = 0; i < b; ++i) {
        const auto& r = requests[static_cast<size_t>(i)];
        images.push_back(r.image.to(dtype));
        disks.push_back(encode_clicks_disk(r.clicks, static_cast<int>(h), static_cast<int>(w), disk_radius).grid.to(dtype));
        if (r.prev_mask.size() == 0) {
            prevs.push_back(torch::zeros({1, h, w}, dtype));
        } else {
            prevs.push_back(torch::from_blob(const_cast<float*>(r.prev_mask.data.data()), {1, h, w}, torch::kFloat32)
                                .to(dtype)
                                .clone());
        }
        for (size_t j = 0; j < r.clicks.size(); ++j) {
            xy_a[i][static_cast<int64_t>(j)][0] = r.clicks[j].x;
            xy_a[i][static_cast<int64_t>(j)][1] = r.clicks[j].y;
            pol_a[i][static_cast<int64_t>(j)] = r.clicks[j].positive() ? 1.0 : 0.0;
            valid_a[i][static_cast<int64_t>(j)] = true;
        }
    }
    in.image = torch::stack(images);
    in.disk = torch::stack(disks);
    in.prev_mask = torch::stack(prevs);
    in.click_xy = xy.to(dtype);
    in.click_pol = pol.to(dtype);
    in.click_valid = valid;
    return in;
}

// ---------------------------------------------------------------- building blocks

AttentionImpl::AttentionImpl(int dim, int heads_) : heads(heads_) {
    q = register_module("q", torch::nn::Linear(dim, dim));
    k = register_module("k", torch::nn::Linear(dim, dim));
    v = register_module("v", torch::nn::Linear(dim, dim));
    out = register_module("out", torch::nn::Linear(dim, dim));
}

torch::Tensor AttentionImpl::forward(const torch::Tensor& query, const torch::Tensor& key, const torch::Tensor& value,
                                     const torch::Tensor& bias, torch::Tensor* weights) {
    const int64_t b = query.size(0);
    const int64_t nq = query.size(1);
    const int64_t nk = key.size(1);
    const int64_t d = query.size(2);
    const int64_t dh = d / heads;
    auto split = [&](const torch::Tensor& t, int64_t n) { return t.view({b, n, heads, dh}).transpose(1, 2); };
    auto qh = split(q(query), nq);
    auto kh = split(k(key), nk);
    auto vh = split(v(value), nk);
    auto logits = torch::matmul(qh, kh.transpose(-2, -1)) / std::sqrt(static_cast<double>(dh));
    if (bias.defined()) {
        logits = logits + bias.unsqueeze(1);
    }
    auto attn = torch::softmax(logits, -1);
    if (weights != nullptr) {
        *weights = attn;
    }
    auto merged = torch::matmul(attn, vh).transpose(1, 2).reshape({b, nq, d});
    return out(merged);
}

Mlp3Impl::Mlp3Impl(int in, int hidden, int out) {
    l1 = register_module("l1", torch::nn::Linear(in, hidden));
    l2 = register_module("l2", torch::nn::Linear(hidden, hidden));
    l3 = register_module("l3", torch::nn::Linear(hidden, out));
}

torch::Tensor Mlp3Impl::forward(const torch::Tensor& x) {
    return l3(F::gelu(l2(F::gelu(l1(x)))));
}

DecoderLayerImpl::DecoderLayerImpl(int dim, int heads, int ffn_dim) {
    cross_attn = register_module("cross_attn", Attention(dim, heads));
    self_attn = register_module("self_attn", Attention(dim, heads));
    norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    norm3 = register_module("norm3", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    ffn1 = register_module("ffn1", torch::nn::Linear(dim, ffn_dim));
    ffn2 = register_module("ffn2", torch::nn::Linear(ffn_dim, dim));
}

torch::Tensor DecoderLayerImpl::forward(const torch::Tensor& x, const torch::Tensor& query_pos,
                                        const torch::Tensor& spatial, const torch::Tensor& spatial_pos,
                                        const torch::Tensor& clicks, const torch::Tensor& bias,
                                        torch::Tensor* cross_weights) {
    auto with_pos = [&](const torch::Tensor& t) { return query_pos.defined() ? t + query_pos : t; };
    auto keys = torch::cat({spatial + spatial_pos, clicks}, 1);
    auto values = torch::cat({spatial, clicks}, 1);
    auto y = norm1(x + cross_attn(with_pos(x), keys, values, bias, cross_weights));
    auto qk = with_pos(y);
    y = norm2(y + self_attn(qk, qk, y));
    return norm3(y + ffn2(F::gelu(ffn1(y))));
}

torch::Tensor attention_bias(const torch::Tensor& mask_logits, std::array<int64_t, 2> level_hw,
                             const torch::Tensor& click_valid) {
    auto logits = mask_logits.detach();
    if (logits.size(2) != level_hw[0] || logits.size(3) != level_hw[1]) {
        logits = F::interpolate(logits, F::InterpolateFuncOptions()
                                            .size(std::vector<int64_t>{level_hw[0], level_hw[1]})
                                            .mode(torch::kBilinear)
                                            .align_corners(false));
    }
    const double neg_inf = -std::numeric_limits<double>::infinity();
    auto zero = torch::zeros({}, logits.options());
    auto minus = torch::full({}, neg_inf, logits.options());
    auto spatial = torch::where(logits >= 0, zero, minus).flatten(2);
    auto clicks = torch::where(click_valid, zero, minus)
                      .unsqueeze(1)
                      .expand({logits.size(0), logits.size(1), click_valid.size(1)});
    return torch::cat({spatial, clicks}, 2);
}

torch::Tensor mask_dot_product(const torch::Tensor& weights, const torch::Tensor& mask_feature) {
    return torch::einsum("bqc,bchw->bqhw", {weights, mask_feature});
}

namespace {

class EncoderBlockImpl : public torch::nn::Module {
public:
    EncoderBlockImpl(int dim, int heads, int ffn_dim) {
        norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
        attn = register_module("attn", Attention(dim, heads));
        norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
        fc1 = register_module("fc1", torch::nn::Linear(dim, ffn_dim));
        fc2 = register_module("fc2", torch::nn::Linear(ffn_dim, dim));
    }

    torch::Tensor forward(const torch::Tensor& x) {
        auto h = norm1(x);
        auto y = x + attn(h, h, h);
        return y + fc2(F::gelu(fc1(norm2(y))));
    }

    torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
    Attention attn{nullptr};
    torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(EncoderBlock);

int norm_groups(int dim) {
    return dim % 8 == 0 ? 8 : 1;
}

torch::nn::Sequential conv_norm(int dim, int kernel, bool activation) {
    torch::nn::Sequential seq(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(dim, dim, kernel).padding(kernel / 2)),
        torch::nn::GroupNorm(torch::nn::GroupNormOptions(norm_groups(dim), dim)));
    if (activation) {
        seq->push_back(torch::nn::GELU());
    }
    return seq;
}

// One neck branch resampling F_b (stride `from`) to stride `to`.
torch::nn::Sequential neck_branch(int dim, int from, int to) {
    torch::nn::Sequential seq;
    if (to >= from) {
        const int f = to / from;
        seq->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(dim, dim, f).stride(f)));
    } else {
        const int f = from / to;
        seq->push_back(torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(dim, dim, f).stride(f)));
    }
    seq->push_back(torch::nn::GroupNorm(torch::nn::GroupNormOptions(norm_groups(dim), dim)));
    return seq;
}

// PE of token centres for an h x w grid covering an H x W image: B-free (h*w) x D.
torch::Tensor grid_encoding(int64_t h, int64_t w, int64_t height, int64_t width, int dim,
                            const torch::TensorOptions& options) {
    const double sy = static_cast<double>(height) / static_cast<double>(h);
    const double sx = static_cast<double>(width) / static_cast<double>(w);
    auto ys = (torch::arange(h, options) + 0.5) * sy;
    auto xs = (torch::arange(w, options) + 0.5) * sx;
    auto grid = torch::meshgrid({ys, xs}, "ij");
    auto xy = torch::stack({grid[1], grid[0]}, -1).reshape({h * w, 2});
    return positional_encoding(xy, static_cast<int>(height), static_cast<int>(width), dim);
}

torch::Tensor resize_to(const torch::Tensor& x, int64_t h, int64_t w, bool nearest) {
    auto opts = F::InterpolateFuncOptions().size(std::vector<int64_t>{h, w});
    if (nearest) {
        opts.mode(torch::kNearest);
    } else {
        opts.mode(torch::kBilinear).align_corners(false);
    }
    return F::interpolate(x, opts);
}

}  // namespace

PiClickNetImpl::PiClickNetImpl(const ModelConfig& config) : config_(config) {
    config_.validate();
    torch::manual_seed(config_.seed);
    const int d = config_.dim;
    const int p = config_.patch_size;
    image_embed = register_module("image_embed", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, d, p).stride(p)));
    map_embed = register_module("map_embed", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, d, p).stride(p)));
    encoder_blocks = register_module("encoder_blocks", torch::nn::ModuleList());
    for (int i = 0; i < config_.encoder_depth; ++i) {
        encoder_blocks->push_back(EncoderBlock(d, config_.heads, config_.ffn_dim));
    }
    encoder_norm = register_module("encoder_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));

    neck = register_module("neck", torch::nn::ModuleList());
    for (int stride : {4, 8, 16, 32}) {
        neck->push_back(neck_branch(d, p, stride));
    }
    // pixel decoder runs coarse to fine: strides 32, 16, 8, 4
    lateral = register_module("lateral", torch::nn::ModuleList());
    output_convs = register_module("output_convs", torch::nn::ModuleList());
    for (int i = 0; i < 4; ++i) {
        lateral->push_back(conv_norm(d, 1, false));
        output_convs->push_back(conv_norm(d, 3, true));
    }
    mask_features = register_module("mask_features", torch::nn::Conv2d(torch::nn::Conv2dOptions(d, d, 1)));

    click_encoder = register_module("click_encoder", ClickEncoder(d));
    query_feat = register_parameter("query_feat", torch::randn({config_.num_queries, d}));
    query_pos = register_parameter("query_pos", torch::randn({config_.num_queries, d}));
    level_embed = register_parameter("level_embed", torch::randn({3, d}) * 0.1);
    layers = register_module("layers", torch::nn::ModuleList());
    for (int i = 0; i < config_.decoder_layers; ++i) {
        layers->push_back(DecoderLayer(d, config_.heads, config_.ffn_dim));
    }
    decoder_norm = register_module("decoder_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
    mask_embed = register_module("mask_embed", Mlp3(d, d, d));
    conf_head = register_module("conf_head", Mlp3(d, d, 1));
    iou_head = register_module("iou_head", Mlp3(d, d, 1));
}

FeatureBundle PiClickNetImpl::encode_image(const torch::Tensor& image, const torch::Tensor& disk,
                                           const torch::Tensor& prev_mask) {
    if (image.dim() != 4 || disk.dim() != 4 || prev_mask.dim() != 4 || image.size(2) != disk.size(2) ||
        image.size(3) != disk.size(3) || image.size(2) != prev_mask.size(2) || image.size(3) != prev_mask.size(3)) {
        throw InvalidInput("encode_image: image, disk map and previous mask must share B x . x H x W");
    }
    const int64_t height = image.size(2);
    const int64_t width = image.size(3);
    if (height % 32 != 0 || width % 32 != 0) {
        throw InvalidInput("encode_image: padded input must be a multiple of 32");
    }
    const int d = config_.dim;
    auto maps = torch::cat({disk, prev_mask}, 1);
    auto tokens = image_embed(image) + map_embed(maps);  // B x D x h x w
    const int64_t b = tokens.size(0);
    const int64_t h = tokens.size(2);
    const int64_t w = tokens.size(3);
    auto x = tokens.flatten(2).transpose(1, 2);
    x = x + grid_encoding(h, w, height, width, d, x.options());
    for (const auto& block : *encoder_blocks) {
        x = block->as<EncoderBlock>()->forward(x);
    }
    x = encoder_norm(x);
    auto fb = x.transpose(1, 2).reshape({b, d, h, w});

    std::array<torch::Tensor, 4> pyramid;  // strides 4, 8, 16, 32
    for (size_t i = 0; i < 4; ++i) {
        pyramid[i] = neck[i]->as<torch::nn::Sequential>()->forward(fb);
    }
    FeatureBundle out;
    torch::Tensor y;
    for (size_t i = 0; i < 4; ++i) {
        const size_t src = 3 - i;  // coarse to fine
        auto lat = lateral[i]->as<torch::nn::Sequential>()->forward(pyramid[src]);
        if (y.defined()) {
            lat = lat + resize_to(y, lat.size(2), lat.size(3), true);
        }
        y = output_convs[i]->as<torch::nn::Sequential>()->forward(lat);
        if (i < 3) {
            out.levels[i] = y;
        }
    }
    out.mask_feature = mask_features(y);
    return out;
}

torch::Tensor PiClickNetImpl::encode_clicks(const ModelInput& input) {
    return click_encoder(input.click_xy, input.click_pol, static_cast<int>(input.image.size(2)),
                         static_cast<int>(input.image.size(3)));
}

torch::Tensor PiClickNetImpl::mask_head(const torch::Tensor& queries, const torch::Tensor& mask_feature) {
    return mask_dot_product(mask_embed(decoder_norm(queries)), mask_feature);
}

std::pair<torch::Tensor, torch::Tensor> PiClickNetImpl::trm_heads(const torch::Tensor& queries) {
    auto n = decoder_norm(queries);
    return {torch::sigmoid(conf_head(n).squeeze(-1)), torch::sigmoid(iou_head(n).squeeze(-1))};
}

ModelOutput PiClickNetImpl::forward(const ModelInput& raw, const std::vector<torch::Tensor>* fixed_biases) {
    if (fixed_biases != nullptr && fixed_biases->size() != layers->size()) {
        throw InvalidInput("forward: one fixed attention bias per decoder layer required");
    }
    const int64_t height = raw.image.size(2);
    const int64_t width = raw.image.size(3);
    const int64_t pad_h = (32 - height % 32) % 32;
    const int64_t pad_w = (32 - width % 32) % 32;
    ModelInput input = raw;
    if (pad_h != 0 || pad_w != 0) {
        auto pad = [&](const torch::Tensor& t) { return torch::constant_pad_nd(t, {0, pad_w, 0, pad_h}); };
        input.image = pad(raw.image);
        input.disk = pad(raw.disk);
        input.prev_mask = pad(raw.prev_mask);
    }
    const int64_t ph = input.image.size(2);
    const int64_t pw = input.image.size(3);
    const int d = config_.dim;

    FeatureBundle features = encode_image(input.image, input.disk, input.prev_mask);
    auto clicks = encode_clicks(input);
    const int64_t b = input.image.size(0);

    std::array<torch::Tensor, 3> spatial;
    std::array<torch::Tensor, 3> spatial_pos;
    std::array<std::array<int64_t, 2>, 3> level_hw;
    for (size_t i = 0; i < 3; ++i) {
        const auto& f = features.levels[i];
        level_hw[i] = {f.size(2), f.size(3)};
        spatial[i] = f.flatten(2).transpose(1, 2) + level_embed[static_cast<int64_t>(i)];
        spatial_pos[i] = grid_encoding(f.size(2), f.size(3), ph, pw, d, f.options()).unsqueeze(0).expand({b, -1, -1});
    }

    ModelOutput out;
    auto x = query_feat.unsqueeze(0).expand({b, -1, -1});
    out.layer_masks.push_back(mask_head(x, features.mask_feature));
    for (size_t l = 0; l < layers->size(); ++l) {
        const size_t level = l % 3;
        auto bias = fixed_biases != nullptr ? (*fixed_biases)[l]
                                            : attention_bias(out.layer_masks.back(), level_hw[level], input.click_valid);
        out.attention_biases.push_back(bias);
        x = layers[l]->as<DecoderLayer>()->forward(x, query_pos, spatial[level], spatial_pos[level], clicks, bias);
        out.layer_masks.push_back(mask_head(x, features.mask_feature));
    }
    auto logits = resize_to(out.layer_masks.back(), ph, pw, false);
    if (pad_h != 0 || pad_w != 0) {
        logits = logits.slice(2, 0, height).slice(3, 0, width);
    }
    out.mask_logits = logits;
    std::tie(out.conf, out.iou_pred) = trm_heads(x);
    return out;
}

// ---------------------------------------------------------------- NetSegmenter

NetSegmenter::NetSegmenter(PiClickNet net) : net_(std::move(net)) {}

int NetSegmenter::num_queries() const {
    return net_->config().num_queries;
}

Proposals NetSegmenter::predict(const SegmentRequest& request) const {
    return predict_batch({request}).front();
}

std::vector<Proposals> NetSegmenter::predict_batch(const std::vector<SegmentRequest>& requests) const {
    torch::NoGradGuard no_grad;
    const int size = net_->config().image_size;
    std::vector<SegmentRequest> scaled;
    scaled.reserve(requests.size());
    for (const auto& r : requests) {
        const int h = static_cast<int>(r.image.size(1));
        const int w = static_cast<int>(r.image.size(2));
        if (h == size && w == size) {
            scaled.push_back(r);
            continue;
        }
        SegmentRequest s;
        s.image = resize_to(r.image.unsqueeze(0).to(torch::kFloat32), size, size, false).squeeze(0);
        for (const auto& c : r.clicks) {
            Click sc = c;
            sc.x = std::min(size - 1, static_cast<int>((c.x + 0.5) * size / w));
            sc.y = std::min(size - 1, static_cast<int>((c.y + 0.5) * size / h));
            s.clicks.push_back(sc);
        }
        if (r.prev_mask.size() != 0) {
            auto prev = torch::from_blob(const_cast<float*>(r.prev_mask.data.data()), {1, 1, h, w}, torch::kFloat32);
            auto p = resize_to(prev, size, size, false).contiguous();
            s.prev_mask = ProbGrid(size, size);
            std::memcpy(s.prev_mask.data.data(), p.data_ptr<float>(), s.prev_mask.size() * sizeof(float));
        }
        scaled.push_back(std::move(s));
    }
    const auto dtype = net_->query_feat.scalar_type();
    PiClickNet net = net_;  // shared handle; forward is not const
    ModelOutput out = net->forward(make_input(scaled, net_->config().disk_radius, dtype));
    std::vector<Proposals> result;
    for (size_t i = 0; i < requests.size(); ++i) {
        const auto bi = static_cast<int64_t>(i);
        Proposals p;
        auto logits = out.mask_logits[bi].to(torch::kFloat32);
        const int64_t h = requests[i].image.size(1);
        const int64_t w = requests[i].image.size(2);
        if (h != size || w != size) {
            logits = resize_to(logits.unsqueeze(0), h, w, false).squeeze(0);
        }
        p.mask_logits = logits.contiguous();
        p.conf = out.conf[bi].to(torch::kFloat32).contiguous();
        p.iou_pred = out.iou_pred[bi].to(torch::kFloat32).contiguous();
        result.push_back(std::move(p));
    }
    return result;
}

uint64_t parameter_hash(const torch::nn::Module& module) {
    uint64_t h = 1469598103934665603ULL;
    for (const auto& item : module.named_parameters(true)) {
        for (char ch : item.key()) {
            h = (h ^ static_cast<uint8_t>(ch)) * 1099511628211ULL;
        }
        auto t = item.value().detach().contiguous().to(torch::kCPU);
        const auto* bytes = static_cast<const uint8_t*>(t.data_ptr());
        const size_t n = static_cast<size_t>(t.numel()) * t.element_size();
        for (size_t i = 0; i < n; ++i) {
            h = (h ^ bytes[i]) * 1099511628211ULL;
        }
    }
    return h;
}

}  // namespace piclick
