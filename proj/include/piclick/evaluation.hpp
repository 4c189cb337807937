#pragma once

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <map>
#include <vector>

#include "piclick/dataset.hpp"
#include "piclick/segmenter.hpp"

namespace piclick {

struct EvalConfig {
    std::vector<double> thresholds{0.85, 0.90};
    int max_clicks = 20;
    std::vector<int> k_list{1, 2, 3, 5, 10, 20};
    SelectionMode selection = SelectionMode::product;
    /// A click step needs a human re-pick when some proposal beats the
    /// selected one by more than this IoU margin against the ground truth.
    double repick_margin = 0.05;

    void validate() const;
};

/// Interactive run on one ground-truth instance.
struct InstanceTrajectory {
    std::string sample;
    std::string instance_id;
    std::vector<Click> clicks;
    std::vector<double> ious;          // ious[k-1] after k clicks
    std::vector<int64_t> selected;     // proposal picked at each click
    std::vector<int> noc;              // per threshold, capped at max_clicks
    int repicks = 0;
};

struct EvalResult {
    std::vector<InstanceTrajectory> instances;
    std::vector<double> thresholds;
    std::vector<double> mean_noc;      // per threshold
    std::map<int, double> miou_at;     // k -> mean IoU after k clicks
    double mean_repicks = 0.0;

    nlohmann::json to_json(bool with_trajectories = true) const;
};

/// Clicks to reach tau: the first k with ious[k-1] >= tau, else max_clicks.
int noc_at(const std::vector<double>& ious, double tau, int max_clicks);

/// IoU after k clicks; trajectories that stopped early carry their last IoU.
double iou_after(const std::vector<double>& ious, int k);

/// First click at gt's deepest point, then corrective clicks on the selected
/// proposal's largest error region, until every threshold is met or
/// max_clicks is reached.
InstanceTrajectory evaluate_instance(const Segmenter& model, const torch::Tensor& image, const MaskGrid& gt,
                                     const EvalConfig& config);

/// Every mask of every sample is one instance; aggregates are plain means.
EvalResult evaluate_dataset(const Segmenter& model, const std::vector<TrainingSample>& dataset,
                            const EvalConfig& config);

/// Index picked under an ablation ranking rule (same as select_by_mode).
int64_t selection_ablation(const Proposals& proposals, SelectionMode mode);

/// Line plot of mIoU@k against k as a standalone SVG document.
std::string miou_curve_svg(const EvalResult& result);

}  // namespace piclick
