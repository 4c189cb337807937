#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>

#include "piclick/evaluation.hpp"
#include "piclick/model.hpp"
#include "piclick/training.hpp"

namespace piclick {

/// Config files are flat JSON objects: every value is a number, string or
/// boolean, or an array of numbers. Unknown keys are rejected so typos surface.
///
/// Model keys:      image_size patch_size dim encoder_depth heads ffn_dim
///                  num_queries decoder_layers disk_radius model_seed
/// Training keys:   epochs lr lr_decay_epoch lr_decay_factor batch_size beta1
///                  beta2 weight_decay grad_clip seed
///                  aug_resize aug_flip aug_rotate aug_color aug_crop
///                  aug_scale_min aug_scale_max aug_max_rotation_deg
///                  n_init_min n_init_max n_inter_min n_inter_max
///                  positive_prob prev_mask_policy negative_source
///                  w_dice w_focal w_iou_l1 w_conf_bce focal_gamma focal_alpha
/// Evaluation keys: thresholds max_clicks k_list selection_mode repick_margin
nlohmann::json load_flat_config(const std::filesystem::path& path);

/// Throws ConfigError when the document is not a flat object.
void check_flat(const nlohmann::json& doc);

ModelConfig model_config_from_json(const nlohmann::json& doc, ModelConfig base = {});
nlohmann::json to_json(const ModelConfig& config);

TrainConfig train_config_from_json(const nlohmann::json& doc, TrainConfig base = {});
nlohmann::json to_json(const TrainConfig& config);

EvalConfig eval_config_from_json(const nlohmann::json& doc, EvalConfig base = {});

/// Rejects keys that none of the three readers understands.
void check_known_keys(const nlohmann::json& doc);

}  // namespace piclick
