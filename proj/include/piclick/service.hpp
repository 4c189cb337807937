#pragma once

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <vector>

#include "piclick/segmenter.hpp"

namespace piclick {

/// Error carrying the HTTP status the API reports for it.
class ServiceError : public std::runtime_error {
public:
    ServiceError(int status, const std::string& message) : std::runtime_error(message), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

struct ServiceConfig {
    size_t max_upload_bytes = 16u << 20;
    int max_image_side = 4096;
    /// Forwards allowed to wait or run at once; further requests get 503.
    int queue_capacity = 16;
};

/// Row-major run lengths starting with a run of zeros (possibly empty).
std::vector<uint32_t> encode_rle(const MaskGrid& mask);
MaskGrid decode_rle(const std::vector<uint32_t>& counts, int height, int width);

/// One entry of a session's mutation log.
struct LogEntry {
    enum class Kind { click, select } kind = Kind::click;
    Click click;
    int64_t index = 0;  // for select

    bool operator==(const LogEntry&) const = default;
};

/// Everything the interaction loop keeps per session.
struct SessionState {
    std::string id;
    torch::Tensor image;  // 3 x H x W in [0,1]
    std::vector<Click> clicks;
    ProbGrid prev_mask;
    std::optional<Proposals> proposals;
    std::optional<int64_t> selected;
    uint64_t revision = 0;
    int repicks = 0;
    std::vector<LogEntry> log;

    int height() const { return static_cast<int>(image.size(1)); }
    int width() const { return static_cast<int>(image.size(2)); }
};

/// Applies one log entry: a click runs the model and auto-selects, a select
/// overrides the choice. prev_mask always follows the selected proposal.
void apply_entry(const Segmenter& model, SessionState& state, const LogEntry& entry);

/// Fresh state for image with the given log applied in order.
SessionState replay(const Segmenter& model, const torch::Tensor& image, const std::vector<LogEntry>& log);

/// Wire form of a state: proposals ordered by conf * iou_pred descending, each
/// with its mask as {rle, width, height} and a selected flag.
nlohmann::json state_to_json(const SessionState& state);

/// Thread-safe in-memory session store. Calls on one session are serialized;
/// different sessions proceed in parallel and share the read-only model.
class AnnotationService {
public:
    AnnotationService(std::shared_ptr<const Segmenter> model, ServiceConfig config = {});

    /// Decodes an encoded image (PNG, JPEG, ...). 413 when too large, 415 when undecodable.
    std::string create_session_from_bytes(const std::string& bytes);
    std::string create_session(const torch::Tensor& image);

    nlohmann::json add_click(const std::string& id, int x, int y, Polarity polarity);
    nlohmann::json select(const std::string& id, int64_t index);
    nlohmann::json undo(const std::string& id);
    nlohmann::json get(const std::string& id) const;
    /// Selected mask as a 1-bit PNG.
    std::string mask_png(const std::string& id) const;

    /// Copy of a session for inspection and replay checks.
    SessionState snapshot(const std::string& id) const;

    int num_queries() const { return model_->num_queries(); }
    size_t session_count() const;
    const ServiceConfig& config() const { return config_; }

private:
    struct Session {
        mutable std::mutex mutex;
        SessionState state;
    };

    std::shared_ptr<Session> find(const std::string& id) const;
    void apply_guarded(SessionState& state, const LogEntry& entry);

    std::shared_ptr<const Segmenter> model_;
    ServiceConfig config_;
    mutable std::shared_mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::atomic<int> pending_{0};
    std::mt19937_64 id_rng_;
};

}  // namespace piclick
