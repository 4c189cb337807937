#include "piclick/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "piclick/click_simulation.hpp"

namespace piclick {

void EvalConfig::validate() const {
    if (thresholds.empty()) throw ConfigError("at least one IoU threshold is required");
    for (double t : thresholds)
        if (!(t > 0.0 && t <= 1.0)) throw ConfigError("IoU thresholds must lie in (0,1]");
    if (max_clicks < 1) throw ConfigError("max_clicks must be >= 1");
    for (int k : k_list)
        if (k < 1) throw ConfigError("k_list entries must be >= 1");
    if (repick_margin < 0.0) throw ConfigError("repick_margin must be >= 0");
}

int noc_at(const std::vector<double>& ious, double tau, int max_clicks) {
    for (size_t k = 0; k < ious.size() && static_cast<int>(k) < max_clicks; ++k)
        if (ious[k] >= tau) return static_cast<int>(k) + 1;
    return max_clicks;
}

double iou_after(const std::vector<double>& ious, int k) {
    if (ious.empty() || k < 1) return 0.0;
    return ious[std::min(static_cast<size_t>(k), ious.size()) - 1];
}

int64_t selection_ablation(const Proposals& proposals, SelectionMode mode) {
    return select_by_mode(proposals, mode);
}

namespace {

struct Run {
    const torch::Tensor* image;
    const MaskGrid* gt;
    SegmentRequest request;
    InstanceTrajectory trajectory;
    bool done = false;
};

Run start_run(const torch::Tensor& image, const MaskGrid& gt) {
    if (empty(gt)) throw InvalidInput("evaluation needs a nonempty ground-truth mask");
    if (image.dim() != 3 || image.size(1) != gt.height || image.size(2) != gt.width)
        throw InvalidInput("image and ground truth shapes differ");
    Run run{&image, &gt, {}, {}, false};
    auto first = *deepest_point(gt);
    run.request.image = image;
    run.request.clicks.push_back({first.x, first.y, Polarity::positive, 0});
    run.request.prev_mask = ProbGrid(gt.height, gt.width, 0.0f);
    return run;
}

// All runs advance one click per round so the model sees them as one batch.
void run_lockstep(const Segmenter& model, std::vector<Run>& runs, const EvalConfig& config) {
    const double goal = *std::max_element(config.thresholds.begin(), config.thresholds.end());
    for (int click = 1; click <= config.max_clicks; ++click) {
        std::vector<size_t> active;
        std::vector<SegmentRequest> requests;
        for (size_t i = 0; i < runs.size(); ++i) {
            if (runs[i].done) continue;
            active.push_back(i);
            requests.push_back(runs[i].request);
        }
        if (active.empty()) break;
        auto proposals = model.predict_batch(requests);
        for (size_t a = 0; a < active.size(); ++a) {
            auto& run = runs[active[a]];
            const auto& props = proposals[a];
            const int64_t sel = select_by_mode(props, config.selection);
            const auto pred = props.binary_mask(sel);
            const double score = iou(pred, *run.gt);
            double best = score;
            for (int64_t j = 0; j < props.size(); ++j)
                if (j != sel) best = std::max(best, iou(props.binary_mask(j), *run.gt));
            if (best > score + config.repick_margin) ++run.trajectory.repicks;

            run.trajectory.ious.push_back(score);
            run.trajectory.selected.push_back(sel);
            if (score >= goal || click == config.max_clicks) {
                run.done = true;
                continue;
            }
            auto next = next_click(pred, *run.gt, click);
            if (!next) {
                run.done = true;
                continue;
            }
            run.request.clicks.push_back(*next);
            run.request.prev_mask = props.probabilities(sel);
        }
    }
    for (auto& run : runs) {
        run.trajectory.clicks = run.request.clicks;
        // The last click only counts once a prediction was made with it.
        run.trajectory.clicks.resize(run.trajectory.ious.size());
        for (double tau : config.thresholds)
            run.trajectory.noc.push_back(noc_at(run.trajectory.ious, tau, config.max_clicks));
    }
}

}  // namespace

InstanceTrajectory evaluate_instance(const Segmenter& model, const torch::Tensor& image, const MaskGrid& gt,
                                     const EvalConfig& config) {
    config.validate();
    std::vector<Run> runs{start_run(image, gt)};
    run_lockstep(model, runs, config);
    return std::move(runs.front().trajectory);
}

EvalResult evaluate_dataset(const Segmenter& model, const std::vector<TrainingSample>& dataset,
                            const EvalConfig& config) {
    config.validate();
    std::vector<Run> runs;
    for (const auto& sample : dataset) {
        for (size_t m = 0; m < sample.masks.size(); ++m) {
            runs.push_back(start_run(sample.image, sample.masks[m]));
            runs.back().trajectory.sample = sample.name;
            runs.back().trajectory.instance_id = m < sample.ids.size() ? sample.ids[m] : std::to_string(m);
        }
    }
    if (runs.empty()) throw ConfigError("evaluation dataset has no instances");

    constexpr size_t kChunk = 64;
    for (size_t start = 0; start < runs.size(); start += kChunk) {
        std::vector<Run> chunk(std::make_move_iterator(runs.begin() + start),
                               std::make_move_iterator(runs.begin() + std::min(runs.size(), start + kChunk)));
        run_lockstep(model, chunk, config);
        std::move(chunk.begin(), chunk.end(), runs.begin() + start);
    }

    EvalResult result;
    result.thresholds = config.thresholds;
    result.mean_noc.assign(config.thresholds.size(), 0.0);
    for (auto& run : runs) result.instances.push_back(std::move(run.trajectory));
    const double n = static_cast<double>(result.instances.size());
    for (const auto& inst : result.instances) {
        for (size_t t = 0; t < config.thresholds.size(); ++t) result.mean_noc[t] += inst.noc[t] / n;
        result.mean_repicks += inst.repicks / n;
    }
    for (int k : config.k_list) {
        double sum = 0.0;
        for (const auto& inst : result.instances) sum += iou_after(inst.ious, k);
        result.miou_at[k] = sum / n;
    }
    return result;
}

nlohmann::json EvalResult::to_json(bool with_trajectories) const {
    nlohmann::json noc = nlohmann::json::object();
    for (size_t t = 0; t < thresholds.size(); ++t) {
        char key[16];
        std::snprintf(key, sizeof key, "%.2f", thresholds[t]);
        noc[key] = mean_noc[t];
    }
    nlohmann::json miou = nlohmann::json::object();
    for (const auto& [k, v] : miou_at) miou[std::to_string(k)] = v;
    nlohmann::json doc{{"instances", instances.size()},
                       {"thresholds", thresholds},
                       {"mean_noc", noc},
                       {"miou_at", miou},
                       {"mean_repicks", mean_repicks}};
    if (with_trajectories) {
        auto list = nlohmann::json::array();
        for (const auto& inst : instances) {
            auto clicks = nlohmann::json::array();
            for (const auto& c : inst.clicks) clicks.push_back({{"x", c.x}, {"y", c.y}, {"positive", c.positive()}});
            list.push_back({{"sample", inst.sample},
                            {"instance", inst.instance_id},
                            {"ious", inst.ious},
                            {"selected", inst.selected},
                            {"noc", inst.noc},
                            {"repicks", inst.repicks},
                            {"clicks", clicks}});
        }
        doc["trajectories"] = list;
    }
    return doc;
}

std::string miou_curve_svg(const EvalResult& result) {
    int max_k = 1;
    for (const auto& inst : result.instances) max_k = std::max<int>(max_k, static_cast<int>(inst.ious.size()));
    std::vector<double> curve;
    for (int k = 1; k <= max_k; ++k) {
        double sum = 0.0;
        for (const auto& inst : result.instances) sum += iou_after(inst.ious, k);
        curve.push_back(result.instances.empty() ? 0.0 : sum / result.instances.size());
    }

    constexpr double W = 480, H = 320, pad = 40;
    auto px = [&](int k) { return pad + (W - 2 * pad) * (max_k == 1 ? 0.0 : (k - 1.0) / (max_k - 1.0)); };
    auto py = [&](double v) { return H - pad - (H - 2 * pad) * v; };
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<line x1=\"" << pad << "\" y1=\"" << H - pad << "\" x2=\"" << W - pad << "\" y2=\"" << H - pad
        << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << H - pad
        << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << W / 2 << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\">clicks</text>\n";
    svg << "<text x=\"12\" y=\"" << H / 2 << "\" transform=\"rotate(-90 12 " << H / 2
        << ")\" text-anchor=\"middle\">mIoU</text>\n";
    svg << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (int k = 1; k <= max_k; ++k) svg << px(k) << ',' << py(curve[k - 1]) << ' ';
    svg << "\"/>\n</svg>\n";
    return svg.str();
}

}  // namespace piclick
