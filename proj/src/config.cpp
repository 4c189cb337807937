#include "piclick/config.hpp"

#include <fstream>
#include <set>

namespace piclick {

namespace {

using nlohmann::json;

const std::set<std::string> kModelKeys{"image_size", "patch_size",  "dim",            "encoder_depth", "heads",
                                       "ffn_dim",    "num_queries", "decoder_layers", "disk_radius",   "model_seed"};

const std::set<std::string> kTrainKeys{
    "epochs",        "lr",           "lr_decay_epoch", "lr_decay_factor", "batch_size",
    "beta1",         "beta2",        "weight_decay",   "grad_clip",       "seed",
    "aug_resize",    "aug_flip",     "aug_rotate",     "aug_color",       "aug_crop",
    "aug_scale_min", "aug_scale_max", "aug_max_rotation_deg",
    "n_init_min",    "n_init_max",   "n_inter_min",    "n_inter_max",
    "positive_prob", "prev_mask_policy", "negative_source",
    "w_dice",        "w_focal",      "w_iou_l1",       "w_conf_bce",      "focal_gamma", "focal_alpha"};

const std::set<std::string> kEvalKeys{"thresholds", "max_clicks", "k_list", "selection_mode", "repick_margin"};

template <typename T>
void read(const json& doc, const char* key, T& out) {
    auto it = doc.find(key);
    if (it == doc.end()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

NegativeSource parse_negative_source(const std::string& name) {
    if (name == "complement") return NegativeSource::complement;
    if (name == "other_masks") return NegativeSource::other_masks;
    throw ConfigError("unknown negative_source '" + name + "'");
}

std::string to_string(NegativeSource source) {
    return source == NegativeSource::complement ? "complement" : "other_masks";
}

}  // namespace

nlohmann::json load_flat_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    check_flat(doc);
    check_known_keys(doc);
    return doc;
}

void check_flat(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, value] : doc.items()) {
        if (value.is_object()) throw ConfigError("config key '" + key + "' is nested");
        if (value.is_array()) {
            for (const auto& v : value)
                if (!v.is_number()) throw ConfigError("config key '" + key + "' must be an array of numbers");
        }
    }
}

void check_known_keys(const nlohmann::json& doc) {
    for (const auto& [key, value] : doc.items()) {
        if (!kModelKeys.count(key) && !kTrainKeys.count(key) && !kEvalKeys.count(key))
            throw ConfigError("unknown config key '" + key + "'");
    }
}

ModelConfig model_config_from_json(const nlohmann::json& doc, ModelConfig c) {
    read(doc, "image_size", c.image_size);
    read(doc, "patch_size", c.patch_size);
    read(doc, "dim", c.dim);
    read(doc, "encoder_depth", c.encoder_depth);
    read(doc, "heads", c.heads);
    read(doc, "ffn_dim", c.ffn_dim);
    read(doc, "num_queries", c.num_queries);
    read(doc, "decoder_layers", c.decoder_layers);
    read(doc, "disk_radius", c.disk_radius);
    read(doc, "model_seed", c.seed);
    c.validate();
    return c;
}

nlohmann::json to_json(const ModelConfig& c) {
    return {{"image_size", c.image_size},     {"patch_size", c.patch_size},   {"dim", c.dim},
            {"encoder_depth", c.encoder_depth}, {"heads", c.heads},           {"ffn_dim", c.ffn_dim},
            {"num_queries", c.num_queries},   {"decoder_layers", c.decoder_layers},
            {"disk_radius", c.disk_radius},   {"model_seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& doc, TrainConfig c) {
    read(doc, "epochs", c.epochs);
    read(doc, "lr", c.lr);
    read(doc, "lr_decay_epoch", c.lr_decay_epoch);
    read(doc, "lr_decay_factor", c.lr_decay_factor);
    read(doc, "batch_size", c.batch_size);
    read(doc, "beta1", c.beta1);
    read(doc, "beta2", c.beta2);
    read(doc, "weight_decay", c.weight_decay);
    read(doc, "grad_clip", c.grad_clip);
    read(doc, "seed", c.seed);
    read(doc, "aug_resize", c.augment.resize);
    read(doc, "aug_flip", c.augment.flip);
    read(doc, "aug_rotate", c.augment.rotate);
    read(doc, "aug_color", c.augment.color);
    read(doc, "aug_crop", c.augment.crop);
    read(doc, "aug_scale_min", c.augment.scale_min);
    read(doc, "aug_scale_max", c.augment.scale_max);
    read(doc, "aug_max_rotation_deg", c.augment.max_rotation_deg);
    read(doc, "n_init_min", c.simulation.n_init_min);
    read(doc, "n_init_max", c.simulation.n_init_max);
    read(doc, "n_inter_min", c.simulation.n_inter_min);
    read(doc, "n_inter_max", c.simulation.n_inter_max);
    read(doc, "positive_prob", c.simulation.positive_prob);
    if (doc.contains("prev_mask_policy")) {
        std::string name;
        read(doc, "prev_mask_policy", name);
        c.simulation.prev_mask_policy = parse_prev_mask_policy(name);
    }
    if (doc.contains("negative_source")) {
        std::string name;
        read(doc, "negative_source", name);
        c.simulation.negative_source = parse_negative_source(name);
    }
    read(doc, "w_dice", c.loss.dice);
    read(doc, "w_focal", c.loss.focal);
    read(doc, "w_iou_l1", c.loss.iou_l1);
    read(doc, "w_conf_bce", c.loss.conf_bce);
    read(doc, "focal_gamma", c.focal.gamma);
    read(doc, "focal_alpha", c.focal.alpha);
    c.validate();
    return c;
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"lr", c.lr},
            {"lr_decay_epoch", c.lr_decay_epoch},
            {"lr_decay_factor", c.lr_decay_factor},
            {"batch_size", c.batch_size},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"weight_decay", c.weight_decay},
            {"grad_clip", c.grad_clip},
            {"seed", c.seed},
            {"aug_resize", c.augment.resize},
            {"aug_flip", c.augment.flip},
            {"aug_rotate", c.augment.rotate},
            {"aug_color", c.augment.color},
            {"aug_crop", c.augment.crop},
            {"aug_scale_min", c.augment.scale_min},
            {"aug_scale_max", c.augment.scale_max},
            {"aug_max_rotation_deg", c.augment.max_rotation_deg},
            {"n_init_min", c.simulation.n_init_min},
            {"n_init_max", c.simulation.n_init_max},
            {"n_inter_min", c.simulation.n_inter_min},
            {"n_inter_max", c.simulation.n_inter_max},
            {"positive_prob", c.simulation.positive_prob},
            {"prev_mask_policy", to_string(c.simulation.prev_mask_policy)},
            {"negative_source", to_string(c.simulation.negative_source)},
            {"w_dice", c.loss.dice},
            {"w_focal", c.loss.focal},
            {"w_iou_l1", c.loss.iou_l1},
            {"w_conf_bce", c.loss.conf_bce},
            {"focal_gamma", c.focal.gamma},
            {"focal_alpha", c.focal.alpha}};
}

EvalConfig eval_config_from_json(const nlohmann::json& doc, EvalConfig c) {
    read(doc, "thresholds", c.thresholds);
    read(doc, "max_clicks", c.max_clicks);
    read(doc, "k_list", c.k_list);
    read(doc, "repick_margin", c.repick_margin);
    if (doc.contains("selection_mode")) {
        std::string name;
        read(doc, "selection_mode", name);
        c.selection = parse_selection_mode(name);
    }
    c.validate();
    return c;
}

}  // namespace piclick
