#pragma once

#include <torch/torch.h>

#include <optional>
#include <utility>
#include <vector>

#include "piclick/grid.hpp"

namespace piclick {

/// Ground-truth masks consistent with every click: positives inside, negatives outside.
struct FeasibleTargets {
    std::vector<MaskGrid> masks;
    std::vector<size_t> source_indices;  // position of each retained mask in the annotation list
    /// Index of the primary target in the annotation list, if one was given and retained.
    std::optional<size_t> primary_index;
};

/// Filters all_masks by the click containment constraint. Returns nullopt when
/// no mask survives, which callers treat as a skipped sample.
std::optional<FeasibleTargets> feasible_targets(const std::vector<MaskGrid>& all_masks,
                                                const std::vector<Click>& clicks,
                                                std::optional<size_t> primary_index = std::nullopt);

/// Minimum-cost injective assignment between proposals (rows) and targets (columns).
struct Assignment {
    std::vector<std::pair<int, int>> pairs;  // (proposal, target), sorted by proposal
    std::vector<int> unmatched_proposals;    // ascending
    double total_cost = 0.0;
};

/// Rectangular Hungarian algorithm on a row-major rows x cols cost matrix.
/// Throws InvalidInput on non-finite entries.
Assignment hungarian_match(const std::vector<double>& cost, int rows, int cols);
Assignment hungarian_match(const torch::Tensor& cost);

struct LossWeights {
    double dice = 1.0;
    double focal = 1.0;
    double iou_l1 = 1.0;
    double conf_bce = 1.0;
};

struct FocalParams {
    double gamma = 2.0;
    double alpha = 0.25;
};

constexpr double kDiceSmoothing = 1.0;

/// 1 - 2 sum(p t) / (sum p + sum t + 1) over the trailing two dims.
torch::Tensor dice_loss(const torch::Tensor& pred_prob, const torch::Tensor& target);

/// Mean over pixels of alpha_t (1 - p_t)^gamma BCE(logit, target).
torch::Tensor focal_loss(const torch::Tensor& pred_logits, const torch::Tensor& target, FocalParams params = {});

/// dice(sigmoid(logits), target) + focal(logits, target).
double match_cost(const torch::Tensor& proposal_logits, const torch::Tensor& target, FocalParams params = {});

/// N x K matrix of match_cost for every proposal/target pair (no autograd).
torch::Tensor match_cost_matrix(const torch::Tensor& proposal_logits, const torch::Tensor& targets,
                                FocalParams params = {});

/// IoU of each binarized proposal (logit >= 0) with the primary target, shape N.
torch::Tensor pseudo_iou_labels(const torch::Tensor& proposal_logits, const MaskGrid& primary);

struct LossBreakdown {
    torch::Tensor total_tensor;  // differentiable
    double dice = 0.0;
    double focal = 0.0;
    double iou_l1 = 0.0;
    double conf_bce = 0.0;
    double total = 0.0;
    LossWeights weights;
};

/// Set-prediction loss for one sample:
///  mask terms averaged over matched pairs, L1(s_IoU, pseudo IoU) and
///  BCE(s_conf, matched indicator) averaged over all N proposals.
LossBreakdown total_loss(const torch::Tensor& mask_logits, const torch::Tensor& conf, const torch::Tensor& iou_pred,
                         const torch::Tensor& targets, const Assignment& assignment,
                         const torch::Tensor& pseudo_iou, const LossWeights& weights = {},
                         FocalParams focal = {});

/// Stacks masks into a K x H x W tensor of the given dtype.
torch::Tensor masks_to_tensor(const std::vector<MaskGrid>& masks, torch::Dtype dtype = torch::kFloat32);

}  // namespace piclick
