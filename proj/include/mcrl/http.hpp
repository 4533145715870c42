#pragma once

// HTTP+JSON routes for the experiment service.

#include <httplib.h>

#include "mcrl/service.hpp"

namespace mcrl::service {

namespace detail {

inline void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
    try {
        send_json(res, 200, f());
    } catch (const ServiceError& e) {
        send_json(res, e.status(), {{"error", e.what()}});
    } catch (const ValidationError& e) {
        send_json(res, 400, {{"error", e.what()}});
    } catch (const std::exception& e) {
        send_json(res, 500, {{"error", e.what()}});
    }
}

inline json body_json(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        return json::parse(req.body);
    } catch (const json::exception&) {
        throw ServiceError(400, "request body is not valid JSON");
    }
}

}  // namespace detail

inline void install_routes(httplib::Server& srv, ExperimentService& svc) {
    using httplib::Request;
    using httplib::Response;
    srv.Get("/health", [&svc](const Request&, Response& res) { detail::guarded(res, [&] { return svc.health(); }); });
    srv.Post("/sessions", [&svc](const Request& req, Response& res) {
        detail::guarded(res, [&] { return svc.create_session(detail::body_json(req)); });
    });
    srv.Get(R"(/sessions/([0-9a-f]+)/trial)", [&svc](const Request& req, Response& res) {
        detail::guarded(res, [&] { return svc.get_trial(req.matches[1]); });
    });
    srv.Post(R"(/sessions/([0-9a-f]+)/clicks)", [&svc](const Request& req, Response& res) {
        detail::guarded(res, [&] { return svc.record_click(req.matches[1], detail::body_json(req)); });
    });
    srv.Post(R"(/sessions/([0-9a-f]+)/choice)", [&svc](const Request& req, Response& res) {
        detail::guarded(res, [&] { return svc.record_choice(req.matches[1], detail::body_json(req)); });
    });
    srv.Get("/export", [&svc](const Request& req, Response& res) {
        detail::guarded(res, [&] {
            std::vector<std::string> ids;
            std::stringstream ss(req.get_param_value("session"));
            for (std::string id; std::getline(ss, id, ',');)
                if (!id.empty()) ids.push_back(id);
            return svc.export_logs(ids);
        });
    });
    if (svc.config().static_dir) srv.set_mount_point("/", svc.config().static_dir->string());
}

/// Blocks serving until the server is stopped.
inline void serve(const ServiceConfig& cfg) {
    ExperimentService svc(cfg);
    httplib::Server srv;
    install_routes(srv, svc);
    if (!srv.listen(cfg.host, cfg.port))
        throw ValidationError("cannot listen on " + cfg.host + ":" + std::to_string(cfg.port));
}

}  // namespace mcrl::service
