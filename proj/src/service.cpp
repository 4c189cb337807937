#include "piclick/service.hpp"

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "piclick/dataset.hpp"

namespace piclick {

std::vector<uint32_t> encode_rle(const MaskGrid& mask) {
    std::vector<uint32_t> counts;
    uint8_t current = 0;
    uint32_t run = 0;
    for (uint8_t v : mask.data) {
        const uint8_t bit = v != 0 ? 1 : 0;
        if (bit != current) {
            counts.push_back(run);
            current = bit;
            run = 0;
        }
        ++run;
    }
    counts.push_back(run);
    return counts;
}

MaskGrid decode_rle(const std::vector<uint32_t>& counts, int height, int width) {
    MaskGrid mask(height, width);
    size_t pos = 0;
    uint8_t bit = 0;
    for (uint32_t run : counts) {
        if (pos + run > mask.size()) throw InvalidInput("RLE runs exceed the mask size");
        std::fill_n(mask.data.begin() + static_cast<std::ptrdiff_t>(pos), run, bit);
        pos += run;
        bit ^= 1;
    }
    if (pos != mask.size()) throw InvalidInput("RLE runs do not cover the mask");
    return mask;
}

void apply_entry(const Segmenter& model, SessionState& state, const LogEntry& entry) {
    if (entry.kind == LogEntry::Kind::click) {
        validate_clicks({entry.click}, state.height(), state.width());
        Click click = entry.click;
        click.order = static_cast<int>(state.clicks.size());
        state.clicks.push_back(click);
        state.proposals = model.predict({state.image, state.clicks, state.prev_mask});
        state.selected = select_mask(*state.proposals).first;
        state.log.push_back({LogEntry::Kind::click, click, 0});
    } else {
        if (!state.proposals) throw ServiceError(409, "no proposals to select from yet");
        if (entry.index < 0 || entry.index >= state.proposals->size())
            throw ServiceError(422, "proposal index " + std::to_string(entry.index) + " out of range [0, " +
                                        std::to_string(state.proposals->size()) + ")");
        state.selected = entry.index;
        ++state.repicks;
        state.log.push_back(entry);
    }
    state.prev_mask = state.proposals->probabilities(*state.selected);
}

SessionState replay(const Segmenter& model, const torch::Tensor& image, const std::vector<LogEntry>& log) {
    SessionState state;
    state.image = image;
    state.prev_mask = ProbGrid(static_cast<int>(image.size(1)), static_cast<int>(image.size(2)), 0.0f);
    for (const auto& entry : log) apply_entry(model, state, entry);
    return state;
}

nlohmann::json state_to_json(const SessionState& state) {
    using nlohmann::json;
    auto clicks = json::array();
    for (const auto& c : state.clicks)
        clicks.push_back({{"x", c.x}, {"y", c.y}, {"polarity", c.positive() ? "positive" : "negative"},
                          {"order", c.order}});
    auto proposals = json::array();
    if (state.proposals) {
        const auto& p = *state.proposals;
        auto conf = p.conf.to(torch::kFloat64).contiguous();
        auto iou = p.iou_pred.to(torch::kFloat64).contiguous();
        std::vector<int64_t> order(static_cast<size_t>(p.size()));
        std::iota(order.begin(), order.end(), int64_t{0});
        auto product = [&](int64_t i) { return conf[i].item<double>() * iou[i].item<double>(); };
        std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) { return product(a) > product(b); });
        for (int64_t i : order) {
            proposals.push_back({{"index", i},
                                 {"conf", conf[i].item<double>()},
                                 {"iou_pred", iou[i].item<double>()},
                                 {"product", product(i)},
                                 {"selected", state.selected && *state.selected == i},
                                 {"mask",
                                  {{"rle", encode_rle(p.binary_mask(i))},
                                   {"width", state.width()},
                                   {"height", state.height()}}}});
        }
    }
    return {{"session_id", state.id},
            {"width", state.width()},
            {"height", state.height()},
            {"revision", state.revision},
            {"repicks", state.repicks},
            {"clicks", clicks},
            {"selected_index", state.selected ? json(*state.selected) : json(nullptr)},
            {"proposals", proposals}};
}

AnnotationService::AnnotationService(std::shared_ptr<const Segmenter> model, ServiceConfig config)
    : model_(std::move(model)), config_(config), id_rng_(std::random_device{}()) {
    if (!model_) throw ConfigError("annotation service needs a model");
}

std::string AnnotationService::create_session_from_bytes(const std::string& bytes) {
    if (bytes.size() > config_.max_upload_bytes) throw ServiceError(413, "upload exceeds the size limit");
    if (bytes.empty()) throw ServiceError(415, "empty image payload");
    std::vector<uint8_t> buffer(bytes.begin(), bytes.end());
    cv::Mat decoded;
    try {
        decoded = cv::imdecode(buffer, cv::IMREAD_COLOR);
    } catch (const cv::Exception&) {
        decoded = cv::Mat();
    }
    if (decoded.empty()) throw ServiceError(415, "payload is not a decodable image");
    return create_session(image_from_mat(decoded));
}

std::string AnnotationService::create_session(const torch::Tensor& image) {
    if (image.dim() != 3 || image.size(0) != 3 || image.size(1) < 1 || image.size(2) < 1)
        throw ServiceError(415, "image must be 3 x H x W");
    if (image.size(1) > config_.max_image_side || image.size(2) > config_.max_image_side)
        throw ServiceError(413, "image side exceeds " + std::to_string(config_.max_image_side));
    auto session = std::make_shared<Session>();
    session->state.image = image.to(torch::kFloat32).contiguous();
    session->state.prev_mask = ProbGrid(static_cast<int>(image.size(1)), static_cast<int>(image.size(2)), 0.0f);
    std::unique_lock lock(sessions_mutex_);
    std::string id;
    do {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(id_rng_()));
        id = buf;
    } while (sessions_.count(id));
    session->state.id = id;
    sessions_.emplace(id, std::move(session));
    return id;
}

std::shared_ptr<AnnotationService::Session> AnnotationService::find(const std::string& id) const {
    std::shared_lock lock(sessions_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ServiceError(404, "unknown session " + id);
    return it->second;
}

size_t AnnotationService::session_count() const {
    std::shared_lock lock(sessions_mutex_);
    return sessions_.size();
}

void AnnotationService::apply_guarded(SessionState& state, const LogEntry& entry) {
    if (entry.kind == LogEntry::Kind::click) {
        if (++pending_ > config_.queue_capacity) {
            --pending_;
            throw ServiceError(503, "inference queue is full");
        }
        try {
            apply_entry(*model_, state, entry);
        } catch (...) {
            --pending_;
            throw;
        }
        --pending_;
    } else {
        apply_entry(*model_, state, entry);
    }
}

nlohmann::json AnnotationService::add_click(const std::string& id, int x, int y, Polarity polarity) {
    auto session = find(id);
    std::lock_guard lock(session->mutex);
    auto& state = session->state;
    if (x < 0 || y < 0 || x >= state.width() || y >= state.height())
        throw ServiceError(422, "click (" + std::to_string(x) + ", " + std::to_string(y) + ") outside the " +
                                    std::to_string(state.width()) + "x" + std::to_string(state.height()) + " image");
    SessionState next = state;
    apply_guarded(next, {LogEntry::Kind::click, Click{x, y, polarity, 0}, 0});
    ++next.revision;
    state = std::move(next);
    return state_to_json(state);
}

nlohmann::json AnnotationService::select(const std::string& id, int64_t index) {
    auto session = find(id);
    std::lock_guard lock(session->mutex);
    auto& state = session->state;
    apply_guarded(state, {LogEntry::Kind::select, {}, index});
    ++state.revision;
    return state_to_json(state);
}

nlohmann::json AnnotationService::undo(const std::string& id) {
    auto session = find(id);
    std::lock_guard lock(session->mutex);
    auto& state = session->state;
    auto last_click = std::find_if(state.log.rbegin(), state.log.rend(),
                                   [](const LogEntry& e) { return e.kind == LogEntry::Kind::click; });
    if (last_click == state.log.rend()) throw ServiceError(409, "nothing to undo");
    std::vector<LogEntry> kept(state.log.begin(), std::prev(last_click.base()));
    if (++pending_ > config_.queue_capacity) {
        --pending_;
        throw ServiceError(503, "inference queue is full");
    }
    SessionState rebuilt;
    try {
        rebuilt = replay(*model_, state.image, kept);
    } catch (...) {
        --pending_;
        throw;
    }
    --pending_;
    rebuilt.id = state.id;
    rebuilt.revision = state.revision + 1;
    state = std::move(rebuilt);
    return state_to_json(state);
}

nlohmann::json AnnotationService::get(const std::string& id) const {
    auto session = find(id);
    std::lock_guard lock(session->mutex);
    return state_to_json(session->state);
}

SessionState AnnotationService::snapshot(const std::string& id) const {
    auto session = find(id);
    std::lock_guard lock(session->mutex);
    return session->state;
}

std::string AnnotationService::mask_png(const std::string& id) const {
    auto session = find(id);
    MaskGrid mask;
    {
        std::lock_guard lock(session->mutex);
        const auto& state = session->state;
        if (!state.proposals || !state.selected) throw ServiceError(409, "no mask selected yet");
        mask = state.proposals->binary_mask(*state.selected);
    }
    std::vector<uint8_t> png;
    cv::imencode(".png", mask_to_mat(mask), png, {cv::IMWRITE_PNG_BILEVEL, 1});
    return {png.begin(), png.end()};
}

}  // namespace piclick
