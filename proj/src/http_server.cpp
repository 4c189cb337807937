#include "piclick/http_server.hpp"

#include <httplib.h>

namespace piclick {

namespace {

using nlohmann::json;

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"error", message}});
}

json parse_body(const httplib::Request& req) {
    try {
        auto doc = json::parse(req.body);
        if (!doc.is_object()) throw ServiceError(400, "request body must be a JSON object");
        return doc;
    } catch (const json::parse_error& e) {
        throw ServiceError(400, std::string("malformed JSON: ") + e.what());
    }
}

Polarity parse_polarity(const json& value) {
    if (value.is_string()) {
        if (value == "positive") return Polarity::positive;
        if (value == "negative") return Polarity::negative;
    } else if (value.is_boolean()) {
        return value.get<bool>() ? Polarity::positive : Polarity::negative;
    } else if (value.is_number_integer()) {
        auto v = value.get<int>();
        if (v == 0 || v == 1) return v == 1 ? Polarity::positive : Polarity::negative;
    }
    throw ServiceError(422, "polarity must be \"positive\" or \"negative\"");
}

int integer_field(const json& doc, const char* key) {
    auto it = doc.find(key);
    if (it == doc.end() || !it->is_number_integer()) throw ServiceError(422, std::string("missing integer '") + key + "'");
    return it->get<int>();
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const ServiceError& e) {
            send_error(res, e.status(), e.what());
        } catch (const InvalidInput& e) {
            send_error(res, 422, e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, e.what());
        }
    };
}

}  // namespace

HttpServer::HttpServer(std::shared_ptr<AnnotationService> service)
    : service_(std::move(service)), server_(std::make_unique<httplib::Server>()) {
    auto& s = *server_;
    auto svc = service_;
    s.set_payload_max_length(svc->config().max_upload_bytes);

    s.Get("/health", guarded([svc](const httplib::Request&, httplib::Response& res) {
              send_json(res, 200, {{"status", "ok"}, {"num_queries", svc->num_queries()},
                                   {"sessions", svc->session_count()}});
          }));

    s.Post("/sessions", guarded([svc](const httplib::Request& req, httplib::Response& res) {
               std::string bytes = req.body;
               if (req.is_multipart_form_data()) {
                   if (!req.has_file("image")) throw ServiceError(415, "multipart upload needs an 'image' field");
                   bytes = req.get_file_value("image").content;
               }
               auto id = svc->create_session_from_bytes(bytes);
               auto state = svc->get(id);
               send_json(res, 201, {{"session_id", id}, {"width", state["width"]}, {"height", state["height"]}});
           }));

    s.Post(R"(/sessions/([0-9a-f]+)/clicks)",
           guarded([svc](const httplib::Request& req, httplib::Response& res) {
               auto doc = parse_body(req);
               const int x = integer_field(doc, "x");
               const int y = integer_field(doc, "y");
               const auto polarity = doc.contains("polarity") ? parse_polarity(doc["polarity"]) : Polarity::positive;
               send_json(res, 200, svc->add_click(req.matches[1], x, y, polarity));
           }));

    s.Post(R"(/sessions/([0-9a-f]+)/select)",
           guarded([svc](const httplib::Request& req, httplib::Response& res) {
               auto doc = parse_body(req);
               send_json(res, 200, svc->select(req.matches[1], integer_field(doc, "proposal_index")));
           }));

    s.Post(R"(/sessions/([0-9a-f]+)/undo)", guarded([svc](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, svc->undo(req.matches[1]));
           }));

    s.Get(R"(/sessions/([0-9a-f]+)/mask\.png)",
          guarded([svc](const httplib::Request& req, httplib::Response& res) {
              res.status = 200;
              res.set_content(svc->mask_png(req.matches[1]), "image/png");
          }));

    s.Get(R"(/sessions/([^/]+))", guarded([svc](const httplib::Request& req, httplib::Response& res) {
              send_json(res, 200, svc->get(req.matches[1]));
          }));

    // Unknown ids that fail the id pattern still get a 404 body.
    s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) {
            std::string message = res.status == 413 ? "payload too large" : "not found";
            send_error(res, res.status, message);
        }
    });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = server_->bind_to_any_port(host);
        if (bound < 0) throw ConfigError("cannot bind " + host);
        return bound;
    }
    if (!server_->bind_to_port(host, port)) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void HttpServer::listen() { server_->listen_after_bind(); }

void HttpServer::stop() {
    if (server_ && server_->is_running()) server_->stop();
}

void HttpServer::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace piclick
