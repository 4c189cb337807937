#pragma once

#include <torch/torch.h>

#include <utility>
#include <vector>

#include "piclick/grid.hpp"

namespace piclick {

/// N candidate masks for one image with their TRM scores.
struct Proposals {
    torch::Tensor mask_logits;  // N x H x W
    torch::Tensor conf;         // N, in [0,1]
    torch::Tensor iou_pred;     // N, in [0,1]

    int64_t size() const { return conf.defined() ? conf.size(0) : 0; }
    /// Proposal i binarized at probability 0.5 (logit >= 0).
    MaskGrid binary_mask(int64_t i) const;
    ProbGrid probabilities(int64_t i) const;
};

/// One interactive query: image (3 x H x W in [0,1]), accumulated clicks, and
/// the previous mask as probabilities (all-zero on the first interaction).
struct SegmentRequest {
    torch::Tensor image;
    std::vector<Click> clicks;
    ProbGrid prev_mask;
};

/// Anything that turns clicks into ranked mask proposals. Implemented by the
/// network and by scripted stand-ins in tests.
class Segmenter {
public:
    virtual ~Segmenter() = default;
    virtual Proposals predict(const SegmentRequest& request) const = 0;
    /// Batched prediction; the default runs requests one at a time.
    virtual std::vector<Proposals> predict_batch(const std::vector<SegmentRequest>& requests) const;
    virtual int num_queries() const = 0;
};

/// argmax of iou_pred * conf, lowest index on ties.
std::pair<int64_t, double> select_mask(const Proposals& proposals);

enum class SelectionMode { iou_only, conf_only, product };

SelectionMode parse_selection_mode(const std::string& name);
std::string to_string(SelectionMode mode);

/// Index picked under the given ranking rule, lowest index on ties.
int64_t select_by_mode(const Proposals& proposals, SelectionMode mode);

}  // namespace piclick
