#include "piclick/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace piclick {

namespace F = torch::nn::functional;

std::optional<FeasibleTargets> feasible_targets(const std::vector<MaskGrid>& all_masks,
                                                const std::vector<Click>& clicks,
                                                std::optional<size_t> primary_index) {
    if (all_masks.empty()) {
        throw InvalidInput("feasible_targets: no masks");
    }
    if (clicks.empty()) {
        throw InvalidInput("feasible_targets: no clicks");
    }
    FeasibleTargets out;
    for (size_t m = 0; m < all_masks.size(); ++m) {
        const MaskGrid& mask = all_masks[m];
        validate_clicks(clicks, mask.height, mask.width);
        const bool consistent = std::all_of(clicks.begin(), clicks.end(), [&](const Click& c) {
            return (mask.at(c.y, c.x) != 0) == c.positive();
        });
        if (consistent) {
            out.masks.push_back(mask);
            out.source_indices.push_back(m);
            if (primary_index && *primary_index == m) {
                out.primary_index = m;
            }
        }
    }
    if (out.masks.empty()) {
        return std::nullopt;
    }
    return out;
}

Assignment hungarian_match(const std::vector<double>& cost, int rows, int cols) {
    if (rows < 0 || cols < 0 || cost.size() != static_cast<size_t>(rows) * static_cast<size_t>(cols)) {
        throw InvalidInput("hungarian_match: cost size does not match rows x cols");
    }
    for (double c : cost) {
        if (!std::isfinite(c)) {
            throw InvalidInput("hungarian_match: non-finite cost entry");
        }
    }
    Assignment result;
    if (rows == 0 || cols == 0) {
        for (int i = 0; i < rows; ++i) result.unmatched_proposals.push_back(i);
        return result;
    }
    // Shortest augmenting path with potentials; the smaller side is assigned.
    const bool transposed = rows > cols;
    const int n = transposed ? cols : rows;
    const int m = transposed ? rows : cols;
    auto a = [&](int i, int j) {  // 1-based, n x m
        return transposed ? cost[static_cast<size_t>(j - 1) * cols + (i - 1)]
                          : cost[static_cast<size_t>(i - 1) * cols + (j - 1)];
    };
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    std::vector<char> used(m + 1);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = a(i0, j) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<char> matched_row(rows, 0);
    for (int j = 1; j <= m; ++j) {
        if (p[j] == 0) continue;
        const int small = p[j] - 1;
        const int large = j - 1;
        const int proposal = transposed ? large : small;
        const int target = transposed ? small : large;
        result.pairs.emplace_back(proposal, target);
        result.total_cost += cost[static_cast<size_t>(proposal) * cols + target];
        matched_row[proposal] = 1;
    }
    std::sort(result.pairs.begin(), result.pairs.end());
    for (int i = 0; i < rows; ++i) {
        if (!matched_row[i]) result.unmatched_proposals.push_back(i);
    }
    return result;
}

Assignment hungarian_match(const torch::Tensor& cost) {
    if (cost.dim() != 2) {
        throw InvalidInput("hungarian_match: cost must be a matrix");
    }
    auto c = cost.detach().to(torch::kFloat64).contiguous();
    std::vector<double> values(c.data_ptr<double>(), c.data_ptr<double>() + c.numel());
    return hungarian_match(values, static_cast<int>(c.size(0)), static_cast<int>(c.size(1)));
}

torch::Tensor dice_loss(const torch::Tensor& pred_prob, const torch::Tensor& target) {
    auto p = pred_prob.flatten(-2);
    auto t = target.to(pred_prob.dtype()).flatten(-2);
    auto inter = (p * t).sum(-1);
    return 1.0 - 2.0 * inter / (p.sum(-1) + t.sum(-1) + kDiceSmoothing);
}

torch::Tensor focal_loss(const torch::Tensor& pred_logits, const torch::Tensor& target, FocalParams params) {
    auto t = target.to(pred_logits.dtype());
    auto prob = torch::sigmoid(pred_logits);
    auto ce = F::binary_cross_entropy_with_logits(pred_logits, t,
                                                  F::BinaryCrossEntropyWithLogitsFuncOptions().reduction(torch::kNone));
    auto p_t = prob * t + (1.0 - prob) * (1.0 - t);
    auto loss = ce * torch::pow(1.0 - p_t, params.gamma);
    auto alpha_t = params.alpha * t + (1.0 - params.alpha) * (1.0 - t);
    return (alpha_t * loss).flatten(-2).mean(-1);
}

double match_cost(const torch::Tensor& proposal_logits, const torch::Tensor& target, FocalParams params) {
    if (proposal_logits.sizes() != target.sizes()) {
        throw InvalidInput("match_cost: shapes differ");
    }
    torch::NoGradGuard no_grad;
    auto logits = proposal_logits.to(torch::kFloat64);
    return (dice_loss(torch::sigmoid(logits), target) + focal_loss(logits, target, params)).item<double>();
}

torch::Tensor match_cost_matrix(const torch::Tensor& proposal_logits, const torch::Tensor& targets,
                                FocalParams params) {
    torch::NoGradGuard no_grad;
    auto logits = proposal_logits.detach().unsqueeze(1);  // N x 1 x H x W
    auto t = targets.to(logits.dtype()).unsqueeze(0);      // 1 x K x H x W
    auto logits_b = logits.expand({logits.size(0), t.size(1), -1, -1});
    auto t_b = t.expand_as(logits_b);
    return dice_loss(torch::sigmoid(logits_b), t_b) + focal_loss(logits_b, t_b, params);
}

torch::Tensor pseudo_iou_labels(const torch::Tensor& proposal_logits, const MaskGrid& primary) {
    torch::NoGradGuard no_grad;
    auto target = masks_to_tensor({primary}, torch::kBool)[0];
    auto pred = proposal_logits.detach() >= 0;
    auto inter = (pred & target).flatten(1).sum(-1).to(torch::kFloat64);
    auto uni = (pred | target).flatten(1).sum(-1).to(torch::kFloat64);
    auto iou = torch::where(uni > 0, inter / uni.clamp_min(1.0), torch::ones_like(uni));
    return iou.to(proposal_logits.dtype());
}

LossBreakdown total_loss(const torch::Tensor& mask_logits, const torch::Tensor& conf, const torch::Tensor& iou_pred,
                         const torch::Tensor& targets, const Assignment& assignment,
                         const torch::Tensor& pseudo_iou, const LossWeights& weights, FocalParams focal) {
    const auto dtype = mask_logits.scalar_type();
    const int64_t n = conf.size(0);
    LossBreakdown out;
    out.weights = weights;
    torch::Tensor l_dice = torch::zeros({}, mask_logits.options());
    torch::Tensor l_focal = torch::zeros({}, mask_logits.options());
    if (!assignment.pairs.empty()) {
        std::vector<int64_t> pi, ti;
        for (auto [p, t] : assignment.pairs) {
            pi.push_back(p);
            ti.push_back(t);
        }
        auto pidx = torch::tensor(pi, torch::kLong);
        auto tidx = torch::tensor(ti, torch::kLong);
        auto logits = mask_logits.index_select(0, pidx);
        auto tgt = targets.to(dtype).index_select(0, tidx);
        l_dice = dice_loss(torch::sigmoid(logits), tgt).mean();
        l_focal = focal_loss(logits, tgt, focal).mean();
    }
    auto l_iou = (iou_pred - pseudo_iou.to(dtype).detach()).abs().mean();
    auto conf_target = torch::zeros({n}, conf.options());
    for (auto [p, t] : assignment.pairs) {
        conf_target[p] = 1.0;
    }
    auto l_conf = F::binary_cross_entropy(conf, conf_target);
    auto total = weights.dice * l_dice + weights.focal * l_focal + weights.iou_l1 * l_iou + weights.conf_bce * l_conf;
    out.total_tensor = total;
    out.dice = l_dice.item<double>();
    out.focal = l_focal.item<double>();
    out.iou_l1 = l_iou.item<double>();
    out.conf_bce = l_conf.item<double>();
    out.total = total.item<double>();
    return out;
}

torch::Tensor masks_to_tensor(const std::vector<MaskGrid>& masks, torch::Dtype dtype) {
    if (masks.empty()) {
        return torch::zeros({0, 0, 0}, dtype);
    }
    const int h = masks.front().height;
    const int w = masks.front().width;
    auto out = torch::empty({static_cast<int64_t>(masks.size()), h, w}, torch::kUInt8);
    for (size_t i = 0; i < masks.size(); ++i) {
        if (masks[i].height != h || masks[i].width != w) {
            throw InvalidInput("masks_to_tensor: mask shapes differ");
        }
        std::copy(masks[i].data.begin(), masks[i].data.end(),
                  out.data_ptr<uint8_t>() + static_cast<int64_t>(i) * h * w);
    }
    return out.to(dtype);
}

}  // namespace piclick
