#include "vidsearch/http_api.hpp"

#include <httplib.h>

namespace vidsearch {
namespace {

Json error_body(int status, const std::string& message, const Json& details = Json::object()) {
    Json err{{"status", status}, {"message", message}};
    for (const auto& [k, v] : details.items()) err[k] = v;
    return Json{{"error", err}};
}

void send(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(-1, ' ', false, Json::error_handler_t::replace), "application/json");
}

Json parse_body(const httplib::Request& req, bool allow_empty) {
    if (req.body.find_first_not_of(" \t\r\n") == std::string::npos) {
        if (allow_empty) return Json::object();
        throw ApiError(400, "request body is empty");
    }
    try {
        return Json::parse(req.body);
    } catch (const Json::exception& e) {
        throw ApiError(400, std::string("request body is not valid JSON: ") + e.what());
    }
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
            send(res, 200, fn(req));
        } catch (...) {
            const auto [status, body] = error_response(std::current_exception());
            send(res, status, body);
        }
    };
}

Json with_mode(Json body, const char* mode) {
    if (!body.is_object()) throw ApiError(400, "request body must be a JSON object");
    if (body.contains("mode") && body.at("mode") != mode)
        throw ApiError(400, std::string("this endpoint only serves mode '") + mode + "'");
    body["mode"] = mode;
    return body;
}

}  // namespace

std::pair<int, Json> error_response(const std::exception_ptr& error) {
    try {
        std::rethrow_exception(error);
    } catch (const ApiError& e) {
        return {e.status(), error_body(e.status(), e.what(), e.details())};
    } catch (const ParseError& e) {
        return {400, error_body(400, e.what())};
    } catch (const InvalidArgument& e) {
        return {400, error_body(400, e.what())};
    } catch (const DimensionError& e) {
        return {400, error_body(400, e.what())};
    } catch (const NotFound& e) {
        return {404, error_body(404, e.what())};
    } catch (const StateError& e) {
        return {409, error_body(409, e.what())};
    } catch (const TransportError& e) {
        return {502, error_body(502, e.what())};
    } catch (const std::exception& e) {
        return {500, error_body(500, e.what())};
    } catch (...) {
        return {500, error_body(500, "unknown error")};
    }
}

struct HttpServer::Impl {
    Impl(Engine& e, ServerOptions o) : engine(e), options(std::move(o)) {}
    Engine& engine;
    ServerOptions options;
    httplib::Server server;
    bool bound = false;
};

HttpServer::HttpServer(Engine& engine, ServerOptions options)
    : impl_(std::make_unique<Impl>(engine, std::move(options))) {
    auto& s = impl_->server;
    auto& e = impl_->engine;
    const auto threads = impl_->options.threads;
    s.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    s.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    s.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
    });

    s.Post("/api/search", guarded([&e](const httplib::Request& req) { return e.search(parse_body(req, false)); }));
    s.Post("/api/temporal",
           guarded([&e](const httplib::Request& req) { return e.search(with_mode(parse_body(req, false), "temporal")); }));
    s.Post("/api/i2i", guarded([&e](const httplib::Request& req) { return e.search(with_mode(parse_body(req, false), "i2i")); }));
    s.Post("/api/ingest", guarded([&e](const httplib::Request& req) { return e.ingest(parse_body(req, true)); }));
    s.Post("/api/eval", guarded([](const httplib::Request& req) { return Engine::evaluate(parse_body(req, false)); }));
    s.Get("/api/capabilities", guarded([&e](const httplib::Request&) { return e.capabilities(); }));
    s.Get(R"(/api/frame/([^/]+)/([^/]+)/([^/]+))", guarded([&e](const httplib::Request& req) {
              return e.frame(req.matches[1].str(), req.matches[2].str(), req.matches[3].str());
          }));

    if (impl_->options.static_dir) s.set_mount_point("/", impl_->options.static_dir->string());

    s.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (!res.body.empty()) return;
        const auto status = res.status;
        send(res, status, error_body(status, status == 404 ? "no route for " + req.method + " " + req.path : "request failed"));
    });
    s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        const auto [status, body] = error_response(ep);
        send(res, status, body);
    });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
    auto& o = impl_->options;
    if (o.port == 0) {
        o.port = impl_->server.bind_to_any_port(o.host);
    } else if (!impl_->server.bind_to_port(o.host, o.port)) {
        o.port = -1;
    }
    if (o.port < 0) throw Error("cannot bind " + o.host);
    impl_->bound = true;
    return o.port;
}

void HttpServer::serve() {
    if (!impl_->bound) bind();
    impl_->server.listen_after_bind();
}

void HttpServer::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

bool HttpServer::running() const { return impl_->server.is_running(); }

}  // namespace vidsearch
