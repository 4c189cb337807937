#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "piclick/checkpoint.hpp"
#include "piclick/config.hpp"
#include "piclick/dataset.hpp"
#include "piclick/evaluation.hpp"
#include "piclick/http_server.hpp"
#include "piclick/training.hpp"

namespace fs = std::filesystem;
using namespace piclick;

namespace {

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ConfigError("not a number: '" + item + "'");
        }
    }
    return out;
}

Dataset load(const fs::path& root) {
    auto data = load_dataset(root);
    for (const auto& w : data.report.warnings) std::cerr << "warning: " << w << '\n';
    std::cerr << "loaded " << data.report.loaded << " samples (" << data.report.skipped_samples
              << " skipped, " << data.report.skipped_annotations << " annotations skipped)\n";
    return data;
}

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v ? v : fallback;
}

HttpServer* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PiClick interactive segmentation"};
    app.require_subcommand(1);

    fs::path train_config, train_data, train_out, resume;
    auto* train_cmd = app.add_subcommand("train", "train a model");
    train_cmd->add_option("--config", train_config, "flat JSON config")->check(CLI::ExistingFile);
    train_cmd->add_option("--data", train_data, "dataset root")->required();
    train_cmd->add_option("--out", train_out, "output directory")->required();
    train_cmd->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);

    fs::path eval_ckpt, eval_data, eval_out, eval_config, eval_plot;
    std::string thresholds = "0.85,0.90", selection;
    int max_clicks = 20;
    auto* eval_cmd = app.add_subcommand("eval", "run the NoC / mIoU@k protocol");
    eval_cmd->add_option("--ckpt", eval_ckpt)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--data", eval_data)->required();
    eval_cmd->add_option("--thresholds", thresholds, "comma separated IoU thresholds");
    eval_cmd->add_option("--max-clicks", max_clicks);
    eval_cmd->add_option("--selection", selection, "iou_only, conf_only or product");
    eval_cmd->add_option("--config", eval_config, "flat JSON config with evaluation keys")->check(CLI::ExistingFile);
    eval_cmd->add_option("--out", eval_out, "report.json")->required();
    eval_cmd->add_option("--plot", eval_plot, "write the mIoU-vs-clicks curve as SVG");

    std::string ckpt_env = env_or("PICLICK_CKPT", "");
    fs::path serve_ckpt = ckpt_env;
    std::string host = env_or("PICLICK_HOST", "127.0.0.1");
    int port = std::stoi(env_or("PICLICK_PORT", "8080"));
    int max_side = 4096, queries = 0, queue = 16;
    auto* serve_cmd = app.add_subcommand("serve", "start the annotation HTTP API");
    serve_cmd->add_option("--ckpt", serve_ckpt, "checkpoint (env PICLICK_CKPT); untrained model if absent");
    serve_cmd->add_option("--host", host);
    serve_cmd->add_option("--port", port, "env PICLICK_PORT");
    serve_cmd->add_option("--max-image-side", max_side);
    serve_cmd->add_option("--queue", queue, "max concurrent inference requests");
    serve_cmd->add_option("--queries", queries, "mask queries for an untrained model");

    int synth_n = 2000, synth_size = 64;
    uint64_t synth_seed = 0;
    fs::path synth_out;
    auto* synth_cmd = app.add_subcommand("synth", "write the synthetic ambiguity corpus");
    synth_cmd->add_option("--n", synth_n);
    synth_cmd->add_option("--size", synth_size);
    synth_cmd->add_option("--seed", synth_seed);
    synth_cmd->add_option("--out", synth_out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) {
            nlohmann::json doc = nlohmann::json::object();
            if (!train_config.empty()) doc = load_flat_config(train_config);
            auto model_config = model_config_from_json(doc);
            auto config = train_config_from_json(doc);
            if (!resume.empty()) model_config = read_checkpoint_config(resume);
            auto data = load(train_data);
            std::optional<fs::path> resume_path;
            if (!resume.empty()) resume_path = resume;
            auto outcome = train(data.samples, model_config, config, train_out, resume_path,
                                 [](const std::string& line) { std::cerr << line << '\n'; });
            std::cout << outcome.last_checkpoint.string() << '\n';
        } else if (*eval_cmd) {
            EvalConfig config;
            if (!eval_config.empty()) config = eval_config_from_json(load_flat_config(eval_config));
            if (eval_cmd->count("--thresholds")) config.thresholds = parse_list(thresholds);
            if (eval_cmd->count("--max-clicks")) config.max_clicks = max_clicks;
            if (!selection.empty()) config.selection = parse_selection_mode(selection);
            config.k_list.erase(std::remove_if(config.k_list.begin(), config.k_list.end(),
                                               [&](int k) { return k > config.max_clicks; }),
                                config.k_list.end());
            NetSegmenter model(load_model(eval_ckpt));
            auto data = load(eval_data);
            auto result = evaluate_dataset(model, data.samples, config);
            std::ofstream(eval_out) << result.to_json().dump(2) << '\n';
            if (!eval_plot.empty()) std::ofstream(eval_plot) << miou_curve_svg(result);
            std::cout << result.to_json(false).dump(2) << '\n';
        } else if (*serve_cmd) {
            std::shared_ptr<const Segmenter> model;
            if (!serve_ckpt.empty()) {
                model = std::make_shared<NetSegmenter>(load_model(serve_ckpt));
            } else {
                ModelConfig mc;
                if (queries > 0) mc.num_queries = queries;
                mc.validate();
                std::cerr << "warning: no checkpoint given, serving an untrained model\n";
                model = std::make_shared<NetSegmenter>(PiClickNet(mc));
            }
            ServiceConfig sc;
            sc.max_image_side = max_side;
            sc.queue_capacity = queue;
            auto service = std::make_shared<AnnotationService>(model, sc);
            HttpServer server(service);
            const int bound = server.bind(host, port);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "listening on http://" << host << ':' << bound << '\n';
            server.listen();
            g_server = nullptr;
        } else if (*synth_cmd) {
            auto samples = synth_ambiguity_dataset(synth_n, synth_size, synth_seed);
            save_folder_dataset(samples, synth_out);
            std::cout << "wrote " << samples.size() << " samples to " << synth_out.string() << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
