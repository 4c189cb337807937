#pragma once

#include <memory>
#include <string>

#include "piclick/service.hpp"

namespace httplib {
class Server;
}

namespace piclick {

/// JSON-over-HTTP front end for AnnotationService.
///
///   POST /sessions                 raw image bytes (or multipart field "image") -> 201 {session_id, width, height}
///   POST /sessions/{id}/clicks     {"x", "y", "polarity": "positive"|"negative"}  -> state
///   POST /sessions/{id}/select     {"proposal_index"}                             -> state
///   POST /sessions/{id}/undo                                                      -> state
///   GET  /sessions/{id}                                                           -> state
///   GET  /sessions/{id}/mask.png   selected mask, 1-bit PNG
///   GET  /health                   {"status": "ok", "num_queries", "sessions"}
///
/// Errors come back as {"error": message} with the matching status code.
class HttpServer {
public:
    explicit HttpServer(std::shared_ptr<AnnotationService> service);
    ~HttpServer();

    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds host:port (port 0 picks a free one) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop(); blocks.
    void listen();
    void stop();
    /// Blocks until the server accepts connections.
    void wait_until_ready() const;

private:
    std::shared_ptr<AnnotationService> service_;
    std::unique_ptr<httplib::Server> server_;
};

}  // namespace piclick
