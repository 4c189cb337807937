#include "piclick/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include "piclick/config.hpp"

namespace piclick {

namespace {

torch::Tensor string_tensor(const std::string& s) {
    auto t = torch::empty({static_cast<int64_t>(s.size())}, torch::kUInt8);
    std::memcpy(t.data_ptr<uint8_t>(), s.data(), s.size());
    return t;
}

std::string tensor_string(const torch::Tensor& t) {
    auto c = t.contiguous();
    return {reinterpret_cast<const char*>(c.data_ptr<uint8_t>()), static_cast<size_t>(c.numel())};
}

torch::serialize::InputArchive open_archive(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("checkpoint not found: " + path.string());
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path.string());
    } catch (const c10::Error& e) {
        throw ConfigError("unreadable checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
    torch::Tensor version;
    if (!archive.try_read("version", version) || tensor_string(version) != kCheckpointVersion)
        throw ConfigError("not a piclick checkpoint: " + path.string());
    return archive;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const PiClickNet& net, const torch::optim::Optimizer* optimizer,
                     std::optional<TrainState> state) {
    torch::serialize::OutputArchive archive;
    archive.write("version", string_tensor(kCheckpointVersion));
    archive.write("config", string_tensor(to_json(net->config()).dump()));
    for (const auto& item : net->named_parameters()) archive.write("param/" + item.key(), item.value().detach());
    for (const auto& item : net->named_buffers()) archive.write("buffer/" + item.key(), item.value().detach());
    if (optimizer) {
        torch::serialize::OutputArchive nested;
        optimizer->save(nested);
        archive.write("optimizer", nested);
    }
    if (state) archive.write("train_state", torch::tensor({static_cast<int64_t>(state->epoch), state->step}));
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    // Write then rename so an interrupted save never leaves a truncated checkpoint.
    auto tmp = path;
    tmp += ".tmp";
    archive.save_to(tmp.string());
    std::filesystem::rename(tmp, path);
}

ModelConfig read_checkpoint_config(const std::filesystem::path& path) {
    auto archive = open_archive(path);
    torch::Tensor config;
    archive.read("config", config);
    return model_config_from_json(nlohmann::json::parse(tensor_string(config)));
}

PiClickNet load_model(const std::filesystem::path& path) {
    auto archive = open_archive(path);
    torch::Tensor config;
    archive.read("config", config);
    PiClickNet net(model_config_from_json(nlohmann::json::parse(tensor_string(config))));
    torch::NoGradGuard no_grad;
    for (auto& item : net->named_parameters()) {
        torch::Tensor stored;
        if (!archive.try_read("param/" + item.key(), stored))
            throw ConfigError("checkpoint is missing parameter " + item.key());
        if (!stored.sizes().equals(item.value().sizes()))
            throw ConfigError("checkpoint shape mismatch for " + item.key());
        item.value().copy_(stored);
    }
    for (auto& item : net->named_buffers()) {
        torch::Tensor stored;
        if (archive.try_read("buffer/" + item.key(), stored)) item.value().copy_(stored);
    }
    return net;
}

std::optional<TrainState> read_train_state(const std::filesystem::path& path) {
    auto archive = open_archive(path);
    torch::Tensor t;
    if (!archive.try_read("train_state", t)) return std::nullopt;
    return TrainState{static_cast<int>(t[0].item<int64_t>()), t[1].item<int64_t>()};
}

bool load_optimizer_state(const std::filesystem::path& path, torch::optim::Optimizer& optimizer) {
    auto archive = open_archive(path);
    torch::serialize::InputArchive nested;
    if (!archive.try_read("optimizer", nested)) return false;
    optimizer.load(nested);
    return true;
}

}  // namespace piclick
