#include "doctest_torch.hpp"

#include <httplib.h>
#include <opencv2/imgcodecs.hpp>

#include <condition_variable>
#include <thread>

#include "piclick/dataset.hpp"
#include "piclick/http_server.hpp"
#include "piclick/model.hpp"
#include "piclick/service.hpp"
#include "support.hpp"

using namespace piclick;
using nlohmann::json;
using piclick::testing::make_proposals;
using piclick::testing::rect_mask;
using piclick::testing::ScriptedSegmenter;

namespace {

constexpr int kH = 24, kW = 32;

// Seven proposals that depend only on the request (so replays agree); the
// ranking changes with the number of clicks.
std::shared_ptr<ScriptedSegmenter> seven_way() {
    return std::make_shared<ScriptedSegmenter>(7, [](const SegmentRequest& req, int) {
        std::vector<MaskGrid> masks;
        std::vector<double> conf, iou;
        const auto& last = req.clicks.back();
        const int call = static_cast<int>(req.clicks.size());
        for (int i = 0; i < 7; ++i) {
            masks.push_back(rect_mask(kH, kW, last.x - i, last.y - i, last.x + i + 1, last.y + i + 1));
            conf.push_back(0.1 + 0.1 * ((i + call) % 7));
            iou.push_back(0.9 - 0.1 * ((i * 3 + call) % 7));
        }
        return make_proposals(masks, conf, iou);
    });
}

std::string png_bytes(int h, int w) {
    cv::Mat img(h, w, CV_8UC3, cv::Scalar(10, 200, 30));
    std::vector<uint8_t> buf;
    REQUIRE(cv::imencode(".png", img, buf));
    return {buf.begin(), buf.end()};
}

json without_revision(json state) {
    state.erase("revision");
    return state;
}

int status_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ServiceError& e) {
        return e.status();
    }
    return 200;
}

// Server on an ephemeral port, stopped and joined on scope exit.
struct RunningServer {
    std::shared_ptr<AnnotationService> service;
    HttpServer server;
    int port;
    std::thread thread;

    explicit RunningServer(std::shared_ptr<AnnotationService> svc)
        : service(svc), server(svc), port(server.bind("127.0.0.1", 0)), thread([this] { server.listen(); }) {
        server.wait_until_ready();
    }
    ~RunningServer() {
        server.stop();
        thread.join();
    }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port);
        c.set_read_timeout(60, 0);
        return c;
    }
};

}  // namespace

TEST_CASE("row-major RLE round trip and examples") {
    MaskGrid m(1, 3);
    m.data = {1, 1, 0};
    CHECK(encode_rle(m) == std::vector<uint32_t>{0, 2, 1});
    CHECK(encode_rle(MaskGrid(2, 2)) == std::vector<uint32_t>{4});
    CHECK(encode_rle(rect_mask(2, 3, 1, 0, 3, 1)) == std::vector<uint32_t>{1, 2, 3});
    std::mt19937_64 rng(1);
    for (int t = 0; t < 200; ++t) {
        auto r = piclick::testing::random_mask(1 + t % 17, 1 + t % 23, rng, (t % 5) / 4.0);
        REQUIRE(decode_rle(encode_rle(r), r.height, r.width) == r);
    }
    CHECK_THROWS_AS(decode_rle({2, 3}, 2, 2), InvalidInput);
    CHECK_THROWS_AS(decode_rle({1}, 2, 2), InvalidInput);
}

TEST_CASE("session starts empty with a zero previous mask") {
    AnnotationService svc(seven_way());
    auto id = svc.create_session(piclick::testing::gray_image(kH, kW));
    auto s = svc.snapshot(id);
    CHECK(s.clicks.empty());
    CHECK_FALSE(s.proposals.has_value());
    CHECK_FALSE(s.selected.has_value());
    CHECK(s.prev_mask == ProbGrid(kH, kW, 0.0f));
    auto state = svc.get(id);
    CHECK(state["proposals"].empty());
    CHECK(state["selected_index"].is_null());
    CHECK(state["width"] == kW);
    CHECK(state["height"] == kH);
    CHECK(svc.create_session(piclick::testing::gray_image(kH, kW)) != id);
}

TEST_CASE("click response: all proposals, ordered by product, argmax flagged") {
    auto seg = seven_way();
    AnnotationService svc(seg);
    auto id = svc.create_session(piclick::testing::gray_image(kH, kW));
    for (int step = 0; step < 4; ++step) {
        auto state = svc.add_click(id, 10 + step, 8, step % 2 ? Polarity::negative : Polarity::positive);
        const auto& props = state["proposals"];
        REQUIRE(props.size() == 7);
        int flagged = 0;
        for (size_t i = 0; i < props.size(); ++i) {
            if (i > 0) CHECK(props[i]["product"].get<double>() <= props[i - 1]["product"].get<double>());
            CHECK(props[i]["product"].get<double>() ==
                  props[i]["conf"].get<double>() * props[i]["iou_pred"].get<double>());
            flagged += props[i]["selected"].get<bool>();
            CHECK(props[i]["mask"]["width"] == kW);
            CHECK(props[i]["mask"]["height"] == kH);
        }
        CHECK(flagged == 1);
        auto snap = svc.snapshot(id);
        const int64_t expect = select_mask(*snap.proposals).first;
        CHECK(state["selected_index"] == expect);
        for (const auto& p : props)
            if (p["selected"]) CHECK(p["index"] == expect);
        // every mask on the wire decodes to the server-side binarization
        for (const auto& p : props) {
            auto mask = decode_rle(p["mask"]["rle"].get<std::vector<uint32_t>>(), kH, kW);
            CHECK(mask == snap.proposals->binary_mask(p["index"].get<int64_t>()));
        }
        CHECK(state["revision"] == step + 1);
        CHECK(state["clicks"].size() == static_cast<size_t>(step + 1));
        CHECK(snap.prev_mask == snap.proposals->probabilities(*snap.selected));
    }
    // the first forward saw a zero previous mask, later ones the selected proposal
    auto reqs = seg->requests();
    CHECK(reqs[0].prev_mask == ProbGrid(kH, kW, 0.0f));
    CHECK(reqs[1].clicks.size() == 2);
}

TEST_CASE("select overrides the choice and feeds the next forward") {
    auto seg = seven_way();
    AnnotationService svc(seg);
    auto id = svc.create_session(piclick::testing::gray_image(kH, kW));
    CHECK(status_of([&] { svc.select(id, 0); }) == 409);
    svc.add_click(id, 12, 12, Polarity::positive);
    auto picked = svc.snapshot(id);
    auto a = svc.select(id, 2);
    CHECK(a["selected_index"] == 2);
    CHECK(a["repicks"] == 1);
    auto b = svc.select(id, 2);
    CHECK(b["repicks"] == 2);
    CHECK(b["revision"].get<int>() == a["revision"].get<int>() + 1);
    auto strip = [](json s) {
        s.erase("revision");
        s.erase("repicks");
        return s;
    };
    CHECK(strip(a) == strip(b));  // idempotent apart from the counters
    CHECK(svc.snapshot(id).prev_mask == picked.proposals->probabilities(2));

    svc.add_click(id, 14, 12, Polarity::negative);
    CHECK(seg->requests().back().prev_mask == picked.proposals->probabilities(2));

    CHECK(status_of([&] { svc.select(id, 99); }) == 422);
    CHECK(status_of([&] { svc.select(id, -1); }) == 422);
}

TEST_CASE("undo restores the pre-click state and rejects an empty history") {
    AnnotationService svc(seven_way());
    auto id = svc.create_session(piclick::testing::gray_image(kH, kW));
    CHECK(status_of([&] { svc.undo(id); }) == 409);
    svc.add_click(id, 5, 5, Polarity::positive);
    svc.select(id, 3);
    auto before = svc.snapshot(id);
    auto before_json = svc.get(id);
    svc.add_click(id, 20, 10, Polarity::negative);
    auto after_undo = svc.undo(id);
    CHECK(without_revision(after_undo) == without_revision(before_json));
    CHECK(after_undo["revision"].get<uint64_t>() == before.revision + 2);
    auto restored = svc.snapshot(id);
    CHECK(restored.clicks == before.clicks);
    CHECK(restored.prev_mask == before.prev_mask);
    CHECK(restored.selected == before.selected);
    CHECK(restored.repicks == before.repicks);
    CHECK((restored.log == before.log));
    CHECK(torch::equal(restored.proposals->mask_logits, before.proposals->mask_logits));

    svc.undo(id);
    auto empty_again = svc.snapshot(id);
    CHECK(empty_again.clicks.empty());
    CHECK_FALSE(empty_again.proposals.has_value());
    CHECK(empty_again.prev_mask == ProbGrid(kH, kW, 0.0f));
    CHECK(status_of([&] { svc.undo(id); }) == 409);
}

TEST_CASE("replaying a session log reproduces every step") {
    PiClickNet net(piclick::testing::tiny_config(32, 4));
    auto model = std::make_shared<NetSegmenter>(net);
    AnnotationService svc(model);
    auto image = synth_ambiguity_dataset(1, 32, 3).front().image;
    auto id = svc.create_session(image);
    std::vector<SessionState> history;
    svc.add_click(id, 10, 12, Polarity::positive);
    history.push_back(svc.snapshot(id));
    svc.select(id, 1);
    history.push_back(svc.snapshot(id));
    svc.add_click(id, 20, 5, Polarity::negative);
    history.push_back(svc.snapshot(id));
    svc.add_click(id, 14, 14, Polarity::positive);
    history.push_back(svc.snapshot(id));
    const auto& log = history.back().log;
    REQUIRE(log.size() == 4);
    for (size_t n = 1; n <= log.size(); ++n) {
        auto r = replay(*model, image, {log.begin(), log.begin() + n});
        const auto& live = history[n - 1];
        CHECK(torch::equal(r.proposals->mask_logits, live.proposals->mask_logits));
        CHECK(torch::equal(r.proposals->conf, live.proposals->conf));
        CHECK(r.selected == live.selected);
        CHECK(r.prev_mask == live.prev_mask);
        CHECK(r.clicks == live.clicks);
    }
}

TEST_CASE("mask PNG is one bit deep and counts the selected pixels") {
    AnnotationService svc(seven_way());
    auto id = svc.create_session(piclick::testing::gray_image(kH, kW));
    CHECK(status_of([&] { svc.mask_png(id); }) == 409);
    svc.add_click(id, 16, 12, Polarity::positive);
    auto png = svc.mask_png(id);
    std::vector<uint8_t> buf(png.begin(), png.end());
    // IHDR bit depth byte
    REQUIRE(buf.size() > 25);
    CHECK(buf[24] == 1);
    cv::Mat decoded = cv::imdecode(buf, cv::IMREAD_GRAYSCALE);
    REQUIRE(decoded.rows == kH);
    auto snap = svc.snapshot(id);
    CHECK(static_cast<size_t>(cv::countNonZero(decoded)) == count_ones(snap.proposals->binary_mask(*snap.selected)));
}

TEST_CASE("service errors: unknown session, out of bounds, bad uploads") {
    ServiceConfig cfg;
    cfg.max_upload_bytes = 4096;
    cfg.max_image_side = 100;
    AnnotationService svc(seven_way(), cfg);
    CHECK(status_of([&] { svc.get("0123456789abcdef"); }) == 404);
    CHECK(status_of([&] { svc.add_click("nope", 0, 0, Polarity::positive); }) == 404);
    auto id = svc.create_session(piclick::testing::gray_image(kH, kW));
    CHECK(status_of([&] { svc.add_click(id, kW, 0, Polarity::positive); }) == 422);
    CHECK(status_of([&] { svc.add_click(id, 0, -1, Polarity::positive); }) == 422);
    CHECK(svc.get(id)["revision"] == 0);  // rejected calls leave no trace
    CHECK(status_of([&] { svc.create_session_from_bytes("definitely not an image"); }) == 415);
    CHECK(status_of([&] { svc.create_session_from_bytes(""); }) == 415);
    CHECK(status_of([&] { svc.create_session_from_bytes(std::string(5000, 'x')); }) == 413);
    CHECK(status_of([&] { svc.create_session(piclick::testing::gray_image(101, 10)); }) == 413);
    auto ok = svc.create_session_from_bytes(png_bytes(20, 30));
    CHECK(svc.get(ok)["width"] == 30);
}

TEST_CASE("clicks on one session are serialized; sessions run in parallel") {
    AnnotationService svc(seven_way());
    auto shared = svc.create_session(piclick::testing::gray_image(kH, kW));
    std::vector<std::string> own;
    for (int t = 0; t < 4; ++t) own.push_back(svc.create_session(piclick::testing::gray_image(kH, kW)));
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t)
        threads.emplace_back([&, t] {
            for (int k = 0; k < 10; ++k) {
                svc.add_click(shared, (t * 7 + k) % kW, (t + k) % kH, Polarity::positive);
                svc.add_click(own[t], k, k, Polarity::positive);
            }
        });
    for (auto& th : threads) th.join();
    auto s = svc.snapshot(shared);
    CHECK(s.revision == 40);
    CHECK(s.clicks.size() == 40);
    for (size_t i = 0; i < s.clicks.size(); ++i) CHECK(s.clicks[i].order == static_cast<int>(i));
    for (const auto& id : own) CHECK(svc.snapshot(id).revision == 10);
}

TEST_CASE("a full inference queue answers 503") {
    std::mutex m;
    std::condition_variable cv;
    bool release = false;
    int inside = 0;
    auto seg = std::make_shared<ScriptedSegmenter>(1, [&](const SegmentRequest&, int) {
        std::unique_lock lock(m);
        ++inside;
        cv.notify_all();
        cv.wait(lock, [&] { return release; });
        return make_proposals({rect_mask(kH, kW, 0, 0, 2, 2)}, {0.5}, {0.5});
    });
    ServiceConfig cfg;
    cfg.queue_capacity = 1;
    AnnotationService svc(seg, cfg);
    auto a = svc.create_session(piclick::testing::gray_image(kH, kW));
    auto b = svc.create_session(piclick::testing::gray_image(kH, kW));
    std::thread first([&] { svc.add_click(a, 1, 1, Polarity::positive); });
    {
        std::unique_lock lock(m);
        cv.wait(lock, [&] { return inside == 1; });
    }
    CHECK(status_of([&] { svc.add_click(b, 1, 1, Polarity::positive); }) == 503);
    {
        std::lock_guard lock(m);
        release = true;
    }
    cv.notify_all();
    first.join();
    CHECK(status_of([&] { svc.add_click(b, 1, 1, Polarity::positive); }) == 200);
}

TEST_CASE("HTTP API: status codes and payloads") {
    ServiceConfig cfg;
    cfg.max_upload_bytes = 64 * 1024;
    RunningServer rs(std::make_shared<AnnotationService>(seven_way(), cfg));
    auto cli = rs.client();

    auto health = cli.Get("/health");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(json::parse(health->body)["num_queries"] == 7);

    auto created = cli.Post("/sessions", png_bytes(kH, kW), "image/png");
    REQUIRE(created);
    CHECK(created->status == 201);
    auto body = json::parse(created->body);
    CHECK(body["width"] == kW);
    CHECK(body["height"] == kH);
    const std::string id = body["session_id"];
    auto second = cli.Post("/sessions", png_bytes(kH, kW), "image/png");
    CHECK(json::parse(second->body)["session_id"] != id);

    auto corrupt = cli.Post("/sessions", "garbage bytes", "image/png");
    CHECK(corrupt->status == 415);
    CHECK(json::parse(corrupt->body).contains("error"));
    auto huge = cli.Post("/sessions", std::string(70 * 1024, 'x'), "image/png");
    REQUIRE(huge);
    CHECK(huge->status == 413);

    httplib::MultipartFormDataItems form{{"image", png_bytes(10, 12), "x.png", "image/png"}};
    auto multipart = cli.Post("/sessions", form);
    CHECK(multipart->status == 201);
    CHECK(json::parse(multipart->body)["width"] == 12);

    CHECK(cli.Get("/sessions/ffffffffffffffff")->status == 404);
    CHECK(cli.Post("/sessions/ffffffffffffffff/clicks", R"({"x":1,"y":1,"polarity":"positive"})", "application/json")
              ->status == 404);
    CHECK(cli.Post("/sessions/" + id + "/select", R"({"proposal_index":0})", "application/json")->status == 409);
    CHECK(cli.Get("/sessions/" + id + "/mask.png")->status == 409);
    CHECK(cli.Post("/sessions/" + id + "/undo", "", "application/json")->status == 409);
    CHECK(cli.Post("/sessions/" + id + "/clicks", R"({"x":99,"y":1,"polarity":"positive"})", "application/json")
              ->status == 422);
    CHECK(cli.Post("/sessions/" + id + "/clicks", "{not json", "application/json")->status == 400);
    CHECK(cli.Post("/sessions/" + id + "/clicks", R"({"x":1,"y":1,"polarity":"sideways"})", "application/json")
              ->status == 422);

    auto click = cli.Post("/sessions/" + id + "/clicks", R"({"x":10,"y":9,"polarity":"positive"})", "application/json");
    REQUIRE(click);
    CHECK(click->status == 200);
    auto state = json::parse(click->body);
    CHECK(state["proposals"].size() == 7);
    CHECK(state["revision"] == 1);

    CHECK(cli.Post("/sessions/" + id + "/select", R"({"proposal_index":99})", "application/json")->status == 422);
    auto sel = cli.Post("/sessions/" + id + "/select", R"({"proposal_index":4})", "application/json");
    CHECK(sel->status == 200);
    CHECK(json::parse(sel->body)["selected_index"] == 4);

    auto png = cli.Get("/sessions/" + id + "/mask.png");
    REQUIRE(png);
    CHECK(png->status == 200);
    CHECK(png->get_header_value("Content-Type") == "image/png");
    std::vector<uint8_t> buf(png->body.begin(), png->body.end());
    cv::Mat decoded = cv::imdecode(buf, cv::IMREAD_GRAYSCALE);
    auto snap = rs.service->snapshot(id);
    CHECK(static_cast<size_t>(cv::countNonZero(decoded)) == count_ones(snap.proposals->binary_mask(4)));

    auto got = cli.Get("/sessions/" + id);
    CHECK(got->status == 200);
    CHECK(json::parse(got->body) == json::parse(sel->body));
    auto undone = cli.Post("/sessions/" + id + "/undo", "", "application/json");
    CHECK(undone->status == 200);
    CHECK(json::parse(undone->body)["clicks"].empty());
}

TEST_CASE("default untrained model answers with seven proposals") {
    ModelConfig cfg;
    REQUIRE(cfg.num_queries == 7);
    auto model = std::make_shared<NetSegmenter>(PiClickNet(cfg));
    AnnotationService svc(model);
    auto id = svc.create_session(piclick::testing::gray_image(48, 40));
    auto state = svc.add_click(id, 20, 30, Polarity::positive);
    REQUIRE(state["proposals"].size() == 7);
    for (const auto& p : state["proposals"]) {
        CHECK(p["mask"]["width"] == 40);
        CHECK(p["mask"]["height"] == 48);
        CHECK(p["conf"].get<double>() > 0.0);
        CHECK(p["conf"].get<double>() < 1.0);
    }
}
