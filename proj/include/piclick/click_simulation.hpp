#pragma once

#include <torch/torch.h>

#include <optional>
#include <random>
#include <vector>

#include "piclick/grid.hpp"
#include "piclick/segmenter.hpp"

namespace piclick {

using Rng = std::mt19937_64;

enum class PrevMaskPolicy { random, largest_iou };

/// Where random negative clicks come from.
enum class NegativeSource { complement, other_masks };

struct SimulationConfig {
    int n_init_min = 1;
    int n_init_max = 10;
    int n_inter_min = 0;
    int n_inter_max = 4;
    double positive_prob = 0.5;
    PrevMaskPolicy prev_mask_policy = PrevMaskPolicy::random;
    NegativeSource negative_source = NegativeSource::complement;

    void validate() const;
};

PrevMaskPolicy parse_prev_mask_policy(const std::string& name);
std::string to_string(PrevMaskPolicy policy);

/// Initial random clicks for a primary target.
///
/// The first click is positive and uniform over the primary mask. Each later
/// click is positive with probability positive_prob (uniform in the primary)
/// and otherwise negative (uniform over the negative region, if nonempty).
/// A draw landing on an already-used pixel is redrawn a bounded number of
/// times and then dropped, so fewer than n clicks can come back on tiny masks.
/// Orders are 0, 1, 2, ... in generation order.
std::vector<Click> random_clicks(const MaskGrid& primary, const std::vector<MaskGrid>& all_masks, int n, Rng& rng,
                                 double positive_prob = 0.5,
                                 NegativeSource negatives = NegativeSource::complement);

/// Corrective click: the deepest point of the largest 4-connected component of
/// pred XOR gt; positive for a false-negative component, negative otherwise.
/// Returns nullopt when pred == gt.
std::optional<Click> next_click(const MaskGrid& pred, const MaskGrid& gt, int order = 0);

struct SimulationResult {
    std::vector<Click> clicks;
    ProbGrid prev_mask;  // all-zero when no interaction ran
    int n_init = 0;
    int n_inter = 0;
};

struct SimulationSample {
    torch::Tensor image;
    const std::vector<MaskGrid>* all_masks = nullptr;
    size_t primary = 0;
};

/// Click-and-mask simulation for several samples at once. Each sample draws
/// from its own rng, so results do not depend on batch composition.
std::vector<SimulationResult> simulate_batch(const Segmenter& model, const std::vector<SimulationSample>& samples,
                                             const SimulationConfig& config, std::vector<Rng>& rngs);

SimulationResult simulate_iteration(const Segmenter& model, const torch::Tensor& image,
                                    const std::vector<MaskGrid>& all_masks, size_t primary,
                                    const SimulationConfig& config, Rng& rng);

}  // namespace piclick
