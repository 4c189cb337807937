#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "piclick/click_simulation.hpp"
#include "piclick/dataset.hpp"
#include "piclick/matching.hpp"
#include "piclick/model.hpp"

namespace piclick {

struct AugmentConfig {
    bool resize = false;  // scale in [scale_min, scale_max]
    bool flip = false;    // horizontal, p = 0.5
    bool rotate = false;  // uniform in +-max_rotation_deg
    bool color = false;   // brightness/contrast jitter
    bool crop = false;    // random window at the working size
    double scale_min = 0.75;
    double scale_max = 1.25;
    double max_rotation_deg = 20.0;
    double brightness = 0.1;
    double contrast = 0.2;
    int max_crop_retries = 8;

    bool any() const { return resize || flip || rotate || color || crop; }
};

/// Joint image/mask augmentation to a working_size x working_size sample.
/// Masks use nearest-neighbour sampling, the image bilinear. Returns nullopt
/// when every retry left some mask empty.
std::optional<TrainingSample> augment(const TrainingSample& sample, const AugmentConfig& config, int working_size,
                                      Rng& rng);

/// Exact horizontal mirror of image and masks.
TrainingSample flip_horizontal(const TrainingSample& sample);

struct TrainConfig {
    int epochs = 40;
    double lr = 5e-4;
    int lr_decay_epoch = 30;  // epochs >= this run at lr * lr_decay_factor
    double lr_decay_factor = 0.1;
    int batch_size = 8;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.0;
    double grad_clip = 0.0;   // max global grad norm, <= 0 disables
    AugmentConfig augment;
    SimulationConfig simulation;
    LossWeights loss;
    FocalParams focal;
    uint64_t seed = 0;

    void validate() const;
};

/// Learning rate in effect during (0-based) epoch.
double learning_rate_at(const TrainConfig& config, int epoch);

struct StepResult {
    double dice = 0.0;
    double focal = 0.0;
    double iou_l1 = 0.0;
    double conf_bce = 0.0;
    double total = 0.0;
    int used = 0;
    int skipped = 0;  // empty feasible set or failed augmentation
};

/// One optimisation step over a batch: click-and-mask simulation without
/// gradients, a gradient forward, feasible targets, Hungarian matching, the
/// set loss and an optimizer update. rngs holds one stream per sample.
StepResult train_step(PiClickNet& net, torch::optim::Optimizer& optimizer,
                      const std::vector<const TrainingSample*>& batch, const TrainConfig& config,
                      std::vector<Rng>& rngs);

torch::optim::Adam make_optimizer(PiClickNet& net, const TrainConfig& config);

struct TrainOutcome {
    std::filesystem::path last_checkpoint;
    std::filesystem::path metrics_log;
    int epochs_completed = 0;
    int64_t steps = 0;
    size_t skipped = 0;
    std::vector<double> epoch_losses;  // mean total loss per epoch run in this call
};

using LogFn = std::function<void(const std::string&)>;

/// Epoch loop with a checkpoint after every epoch (ckpt_epoch_<k>.pt) and a
/// line-delimited JSON metrics log (metrics.jsonl). Passing resume continues
/// from that checkpoint's epoch with its parameters and optimizer state.
TrainOutcome train(const std::vector<TrainingSample>& dataset, const ModelConfig& model_config,
                   const TrainConfig& config, const std::filesystem::path& out_dir,
                   const std::optional<std::filesystem::path>& resume = std::nullopt, const LogFn& log = {});

}  // namespace piclick
