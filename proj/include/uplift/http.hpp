#pragma once

#include <map>
#include <string>

#include <httplib.h>

#include "uplift/service.hpp"

namespace uplift {

inline std::map<std::string, std::string> query_map(const httplib::Request& req) {
  std::map<std::string, std::string> q;
  for (const auto& [k, v] : req.params) q.emplace(k, v);
  return q;
}

inline void send(httplib::Response& res, const Response& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

/// Binds the service handlers onto an httplib server.
inline void register_routes(httplib::Server& server, const PredictionService& service) {
  server.Post("/predict", [&](const httplib::Request& req, httplib::Response& res) { send(res, service.predict(req.body)); });
  server.Post("/predict/explain",
              [&](const httplib::Request& req, httplib::Response& res) { send(res, service.explain(req.body)); });
  server.Get("/pdp", [&](const httplib::Request& req, httplib::Response& res) { send(res, service.pdp(query_map(req))); });
  server.Get("/runs", [&](const httplib::Request& req, httplib::Response& res) { send(res, service.runs(query_map(req))); });
  server.Get("/model/info", [&](const httplib::Request&, httplib::Response& res) { send(res, service.model_info()); });
  server.Get("/healthz", [&](const httplib::Request&, httplib::Response& res) { send(res, service.healthz()); });
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string msg = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      msg = e.what();
    } catch (...) {
    }
    send(res, error_response(500, msg));
  });
}

}  // namespace uplift
