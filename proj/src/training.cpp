#include "piclick/training.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>

#include "piclick/checkpoint.hpp"

namespace piclick {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor < 1.0)) throw ConfigError("lr_decay_factor must be in (0,1)");
    if (lr_decay_epoch < 0) throw ConfigError("lr_decay_epoch must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw ConfigError("beta1 and beta2 must be in [0,1)");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (!(augment.scale_min > 0.0 && augment.scale_min <= augment.scale_max))
        throw ConfigError("augment scale range must satisfy 0 < min <= max");
    if (augment.max_crop_retries < 0) throw ConfigError("max_crop_retries must be >= 0");
    if (focal.gamma < 0.0 || focal.alpha < 0.0 || focal.alpha > 1.0) throw ConfigError("bad focal parameters");
    simulation.validate();
}

double learning_rate_at(const TrainConfig& config, int epoch) {
    return epoch >= config.lr_decay_epoch ? config.lr * config.lr_decay_factor : config.lr;
}

torch::optim::Adam make_optimizer(PiClickNet& net, const TrainConfig& config) {
    return torch::optim::Adam(net->parameters(), torch::optim::AdamOptions(config.lr)
                                                     .betas({config.beta1, config.beta2})
                                                     .weight_decay(config.weight_decay));
}

namespace {

void set_learning_rate(torch::optim::Optimizer& optimizer, double lr) {
    for (auto& group : optimizer.param_groups()) group.options().set_lr(lr);
}

}  // namespace

StepResult train_step(PiClickNet& net, torch::optim::Optimizer& optimizer,
                      const std::vector<const TrainingSample*>& batch, const TrainConfig& config,
                      std::vector<Rng>& rngs) {
    if (rngs.size() != batch.size()) throw InvalidInput("train_step: one rng per sample required");
    const int size = net->config().image_size;
    StepResult result;

    // Per-sample preparation: augmentation and primary target, each from the sample's own stream.
    std::vector<TrainingSample> prepared;
    std::vector<size_t> primaries;
    std::vector<size_t> rng_of;
    for (size_t i = 0; i < batch.size(); ++i) {
        auto sample = augment(*batch[i], config.augment, size, rngs[i]);
        if (!sample || sample->masks.empty()) {
            ++result.skipped;
            continue;
        }
        primaries.push_back(std::uniform_int_distribution<size_t>(0, sample->masks.size() - 1)(rngs[i]));
        prepared.push_back(std::move(*sample));
        rng_of.push_back(i);
    }
    if (prepared.empty()) return result;

    // Click-and-mask simulation with the live parameters, no gradients.
    std::vector<SimulationSample> sim_samples;
    std::vector<Rng> sim_rngs;
    for (size_t j = 0; j < prepared.size(); ++j) {
        sim_samples.push_back({prepared[j].image, &prepared[j].masks, primaries[j]});
        sim_rngs.push_back(rngs[rng_of[j]]);
    }
    NetSegmenter segmenter(net);
    auto sims = simulate_batch(segmenter, sim_samples, config.simulation, sim_rngs);
    for (size_t j = 0; j < prepared.size(); ++j) rngs[rng_of[j]] = sim_rngs[j];

    std::vector<SegmentRequest> requests;
    std::vector<FeasibleTargets> feasible;
    std::vector<size_t> kept;
    for (size_t j = 0; j < prepared.size(); ++j) {
        auto targets = feasible_targets(prepared[j].masks, sims[j].clicks, primaries[j]);
        if (!targets || sims[j].clicks.empty()) {
            ++result.skipped;
            continue;
        }
        requests.push_back({prepared[j].image, sims[j].clicks, sims[j].prev_mask});
        feasible.push_back(std::move(*targets));
        kept.push_back(j);
    }
    if (requests.empty()) return result;

    const auto dtype = net->query_feat.scalar_type();
    auto input = make_input(requests, net->config().disk_radius, dtype);
    auto out = net->forward(input);

    torch::Tensor total = torch::zeros({}, out.mask_logits.options());
    for (size_t b = 0; b < requests.size(); ++b) {
        const auto& sample = prepared[kept[b]];
        auto logits = out.mask_logits[static_cast<int64_t>(b)];
        auto targets = masks_to_tensor(feasible[b].masks, dtype);
        auto assignment = hungarian_match(match_cost_matrix(logits.detach(), targets, config.focal));
        auto pseudo = pseudo_iou_labels(logits.detach(), sample.masks[primaries[kept[b]]]);
        auto loss = total_loss(logits, out.conf[static_cast<int64_t>(b)], out.iou_pred[static_cast<int64_t>(b)],
                               targets, assignment, pseudo, config.loss, config.focal);
        total = total + loss.total_tensor;
        result.dice += loss.dice;
        result.focal += loss.focal;
        result.iou_l1 += loss.iou_l1;
        result.conf_bce += loss.conf_bce;
        result.total += loss.total;
    }
    result.used = static_cast<int>(requests.size());
    const double n = result.used;
    total = total / n;
    result.dice /= n;
    result.focal /= n;
    result.iou_l1 /= n;
    result.conf_bce /= n;
    result.total /= n;

    optimizer.zero_grad();
    total.backward();
    if (config.grad_clip > 0.0) torch::nn::utils::clip_grad_norm_(net->parameters(), config.grad_clip);
    optimizer.step();
    return result;
}

TrainOutcome train(const std::vector<TrainingSample>& dataset, const ModelConfig& model_config,
                   const TrainConfig& config, const std::filesystem::path& out_dir,
                   const std::optional<std::filesystem::path>& resume, const LogFn& log) {
    if (dataset.empty()) throw ConfigError("training dataset is empty");
    config.validate();
    model_config.validate();

    PiClickNet net(model_config);
    auto optimizer = make_optimizer(net, config);
    int start_epoch = 0;
    int64_t step = 0;
    if (resume) {
        if (read_checkpoint_config(*resume) != model_config)
            throw ConfigError("resume checkpoint was trained with a different model config");
        auto loaded = load_model(*resume);
        {
            torch::NoGradGuard no_grad;
            auto dst = net->parameters();
            auto src = loaded->parameters();
            for (size_t i = 0; i < dst.size(); ++i) dst[i].copy_(src[i]);
        }
        if (!load_optimizer_state(*resume, optimizer))
            throw ConfigError("resume checkpoint has no optimizer state: " + resume->string());
        if (auto state = read_train_state(*resume)) {
            start_epoch = state->epoch;
            step = state->step;
        }
    }

    std::filesystem::create_directories(out_dir);
    TrainOutcome outcome;
    outcome.metrics_log = out_dir / "metrics.jsonl";
    std::ofstream metrics(outcome.metrics_log, resume ? std::ios::app : std::ios::trunc);
    if (!metrics) throw ConfigError("cannot write " + outcome.metrics_log.string());
    outcome.steps = step;
    outcome.epochs_completed = start_epoch;

    for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
        const double lr = learning_rate_at(config, epoch);
        set_learning_rate(optimizer, lr);

        std::vector<size_t> order(dataset.size());
        std::iota(order.begin(), order.end(), size_t{0});
        std::seed_seq epoch_seed{config.seed, static_cast<uint64_t>(epoch)};
        Rng shuffle_rng(epoch_seed);
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        int loss_count = 0;
        size_t epoch_skipped = 0;
        for (size_t start = 0; start < order.size(); start += config.batch_size) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
            std::vector<const TrainingSample*> batch;
            std::vector<Rng> rngs;
            for (size_t k = start; k < end; ++k) {
                batch.push_back(&dataset[order[k]]);
                std::seed_seq s{config.seed, static_cast<uint64_t>(epoch), static_cast<uint64_t>(order[k]) + 1};
                rngs.emplace_back(s);
            }
            auto r = train_step(net, optimizer, batch, config, rngs);
            epoch_skipped += r.skipped;
            if (r.used == 0) continue;
            ++step;
            loss_sum += r.total * r.used;
            loss_count += r.used;
            nlohmann::json record{{"epoch", epoch},       {"step", step},         {"lr", lr},
                                  {"dice", r.dice},       {"focal", r.focal},     {"iou_l1", r.iou_l1},
                                  {"conf_bce", r.conf_bce}, {"total", r.total},   {"used", r.used},
                                  {"skipped", r.skipped}};
            metrics << record.dump() << '\n';
        }
        const double mean = loss_count > 0 ? loss_sum / loss_count : 0.0;
        outcome.epoch_losses.push_back(mean);
        outcome.skipped += epoch_skipped;
        metrics << nlohmann::json{{"epoch_end", epoch + 1}, {"mean_total", mean}, {"skipped", epoch_skipped}}.dump()
                << '\n';
        metrics.flush();

        outcome.last_checkpoint = out_dir / ("ckpt_epoch_" + std::to_string(epoch + 1) + ".pt");
        save_checkpoint(outcome.last_checkpoint, net, &optimizer, TrainState{epoch + 1, step});
        outcome.epochs_completed = epoch + 1;
        outcome.steps = step;
        if (log) {
            char line[160];
            std::snprintf(line, sizeof line, "epoch %d/%d  loss %.4f  lr %.2e  skipped %zu", epoch + 1,
                          config.epochs, mean, lr, epoch_skipped);
            log(line);
        }
    }
    return outcome;
}

}  // namespace piclick
