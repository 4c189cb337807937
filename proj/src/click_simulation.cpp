#include "piclick/click_simulation.hpp"

#include <algorithm>
#include <set>

namespace piclick {

void SimulationConfig::validate() const {
    if (n_init_min < 1 || n_init_max < n_init_min || n_init_max > 10) {
        throw ConfigError("simulation: n_init range must satisfy 1 <= min <= max <= 10");
    }
    if (n_inter_min < 0 || n_inter_max < n_inter_min) {
        throw ConfigError("simulation: n_inter range must satisfy 0 <= min <= max");
    }
    if (positive_prob < 0.0 || positive_prob > 1.0) {
        throw ConfigError("simulation: positive_prob must lie in [0, 1]");
    }
}

PrevMaskPolicy parse_prev_mask_policy(const std::string& name) {
    if (name == "random") return PrevMaskPolicy::random;
    if (name == "largest_iou") return PrevMaskPolicy::largest_iou;
    throw ConfigError("unknown prev_mask_policy '" + name + "'");
}

std::string to_string(PrevMaskPolicy policy) {
    return policy == PrevMaskPolicy::random ? "random" : "largest_iou";
}

namespace {

constexpr int kMaxRedraws = 10;

std::vector<int> pixel_indices(const MaskGrid& mask, bool value) {
    std::vector<int> out;
    for (size_t i = 0; i < mask.size(); ++i) {
        if ((mask.data[i] != 0) == value) {
            out.push_back(static_cast<int>(i));
        }
    }
    return out;
}

int pick(const std::vector<int>& pool, Rng& rng) {
    std::uniform_int_distribution<size_t> dist(0, pool.size() - 1);
    return pool[dist(rng)];
}

}  // namespace

std::vector<Click> random_clicks(const MaskGrid& primary, const std::vector<MaskGrid>& all_masks, int n, Rng& rng,
                                 double positive_prob, NegativeSource negatives) {
    if (n < 1 || n > 10) {
        throw InvalidInput("random_clicks: n must lie in [1, 10]");
    }
    const std::vector<int> inside = pixel_indices(primary, true);
    if (inside.empty()) {
        throw InvalidInput("random_clicks: primary mask is empty");
    }
    std::vector<int> outside;
    if (negatives == NegativeSource::other_masks) {
        MaskGrid others(primary.height, primary.width);
        for (const auto& m : all_masks) {
            for (size_t i = 0; i < m.size(); ++i) {
                others.data[i] |= static_cast<uint8_t>(m.data[i] != 0 && primary.data[i] == 0);
            }
        }
        outside = pixel_indices(others, true);
    }
    if (outside.empty()) {
        outside = pixel_indices(primary, false);
    }

    std::bernoulli_distribution positive(positive_prob);
    std::set<int> used;
    std::vector<Click> clicks;
    for (int k = 0; k < n; ++k) {
        const bool is_positive = k == 0 || outside.empty() || positive(rng);
        const auto& pool = is_positive ? inside : outside;
        int idx = pick(pool, rng);
        for (int retry = 0; retry < kMaxRedraws && used.count(idx) != 0; ++retry) {
            idx = pick(pool, rng);
        }
        if (!used.insert(idx).second) {
            continue;
        }
        Click c;
        c.x = idx % primary.width;
        c.y = idx / primary.width;
        c.polarity = is_positive ? Polarity::positive : Polarity::negative;
        c.order = static_cast<int>(clicks.size());
        clicks.push_back(c);
    }
    return clicks;
}

std::optional<Click> next_click(const MaskGrid& pred, const MaskGrid& gt, int order) {
    const MaskGrid error = xor_mask(pred, gt);
    const auto component = largest_component(error);
    if (!component) {
        return std::nullopt;
    }
    const auto point = deepest_point(*component);
    Click c;
    c.x = point->x;
    c.y = point->y;
    c.polarity = gt.at(c.y, c.x) != 0 ? Polarity::positive : Polarity::negative;
    c.order = order;
    return c;
}

std::vector<SimulationResult> simulate_batch(const Segmenter& model, const std::vector<SimulationSample>& samples,
                                             const SimulationConfig& config, std::vector<Rng>& rngs) {
    config.validate();
    if (rngs.size() != samples.size()) {
        throw InvalidInput("simulate_batch: one rng per sample required");
    }
    std::vector<SimulationResult> results(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (s.all_masks == nullptr || s.primary >= s.all_masks->size()) {
            throw InvalidInput("simulate_batch: primary must index all_masks");
        }
        auto& rng = rngs[i];
        auto& r = results[i];
        r.n_init = std::uniform_int_distribution<int>(config.n_init_min, config.n_init_max)(rng);
        r.clicks = random_clicks((*s.all_masks)[s.primary], *s.all_masks, r.n_init, rng, config.positive_prob,
                                 config.negative_source);
        r.n_inter = std::uniform_int_distribution<int>(config.n_inter_min, config.n_inter_max)(rng);
        r.prev_mask = ProbGrid(static_cast<int>(s.image.size(1)), static_cast<int>(s.image.size(2)), 0.0f);
    }

    // Interaction rounds; sample i takes part in rounds 0 .. n_inter - 1 until
    // its chosen mask matches the primary exactly.
    std::vector<char> active(samples.size(), 1);
    for (int round = 0;; ++round) {
        std::vector<size_t> members;
        for (size_t i = 0; i < samples.size(); ++i) {
            if (active[i] && round < results[i].n_inter) {
                members.push_back(i);
            }
        }
        if (members.empty()) {
            break;
        }
        std::vector<SegmentRequest> requests;
        for (size_t i : members) {
            requests.push_back(SegmentRequest{samples[i].image, results[i].clicks, results[i].prev_mask});
        }
        const std::vector<Proposals> proposals = model.predict_batch(requests);
        for (size_t m = 0; m < members.size(); ++m) {
            const size_t i = members[m];
            const auto& props = proposals[m];
            const MaskGrid& primary = (*samples[i].all_masks)[samples[i].primary];
            int64_t chosen = 0;
            if (config.prev_mask_policy == PrevMaskPolicy::random) {
                chosen = std::uniform_int_distribution<int64_t>(0, props.size() - 1)(rngs[i]);
            } else {
                double best = -1.0;
                for (int64_t k = 0; k < props.size(); ++k) {
                    const double v = iou(props.binary_mask(k), primary);
                    if (v > best) {
                        best = v;
                        chosen = k;
                    }
                }
            }
            results[i].prev_mask = props.probabilities(chosen);
            const auto click = next_click(props.binary_mask(chosen), primary, static_cast<int>(results[i].clicks.size()));
            if (!click) {
                active[i] = 0;
                continue;
            }
            // A corrective click can land on an existing click pixel only if that
            // pixel is still wrong; keep positions unique.
            const bool duplicate = std::any_of(results[i].clicks.begin(), results[i].clicks.end(),
                                               [&](const Click& c) { return c.x == click->x && c.y == click->y; });
            if (!duplicate) {
                results[i].clicks.push_back(*click);
            }
        }
    }
    return results;
}

SimulationResult simulate_iteration(const Segmenter& model, const torch::Tensor& image,
                                    const std::vector<MaskGrid>& all_masks, size_t primary,
                                    const SimulationConfig& config, Rng& rng) {
    std::vector<Rng> rngs{rng};
    auto out = simulate_batch(model, {SimulationSample{image, &all_masks, primary}}, config, rngs);
    rng = rngs.front();
    return out.front();
}

}  // namespace piclick
