#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <optional>
#include <string>

#include "piclick/model.hpp"

namespace piclick {

inline constexpr const char* kCheckpointVersion = "piclick-checkpoint/2";

struct TrainState {
    int epoch = 0;     // epochs completed
    int64_t step = 0;  // optimizer steps taken
};

/// One archive holding named parameters ("param/<name>"), the model config as
/// JSON, a version string and, optionally, optimizer and training state.
void save_checkpoint(const std::filesystem::path& path, const PiClickNet& net,
                     const torch::optim::Optimizer* optimizer = nullptr,
                     std::optional<TrainState> state = std::nullopt);

ModelConfig read_checkpoint_config(const std::filesystem::path& path);

/// Rebuilds the network from the stored config and copies every parameter.
PiClickNet load_model(const std::filesystem::path& path);

std::optional<TrainState> read_train_state(const std::filesystem::path& path);

/// Restores optimizer state; returns false when the checkpoint has none.
bool load_optimizer_state(const std::filesystem::path& path, torch::optim::Optimizer& optimizer);

}  // namespace piclick
