#pragma once

// JSON-over-HTTP front end of an Engine.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "vidsearch/engine.hpp"

namespace vidsearch {

/// Maps any exception to (HTTP status, {"error": {...}}) body.
std::pair<int, Json> error_response(const std::exception_ptr& error);

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::optional<std::filesystem::path> static_dir;  // served under "/"
    std::size_t threads = 8;
};

class HttpServer {
public:
    HttpServer(Engine& engine, ServerOptions options = {});
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds to options.port, or an ephemeral port when it is 0; returns the port.
    int bind();
    /// Blocks serving until stop().
    void serve();
    void stop();
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace vidsearch
