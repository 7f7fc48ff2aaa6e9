#include <fstream>
#include <sstream>

#include "httplib.h"
#include "medgan/errors.hpp"
#include "medgan/study.hpp"

namespace medgan {
using nlohmann::json;

namespace {

constexpr const char* kPlaceholderPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>Image study</title></head>
<body>
<p>The study frontend is not installed. Start the server with --static-dir pointing at the built frontend.</p>
<p>API: GET /api/trial/next?rater=ID, POST /api/response.</p>
</body></html>
)";

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

struct StudyServer::Impl {
  explicit Impl(StudyService& s) : service(s) {}
  StudyService& service;
  httplib::Server server;
};

StudyServer::StudyServer(StudyService& service, std::filesystem::path static_dir)
    : impl_(std::make_unique<Impl>(service)) {
  auto& svr = impl_->server;
  StudyService* svc = &service;

  svr.Get("/api/trial/next", [svc](const httplib::Request& req, httplib::Response& res) {
    try {
      send_json(res, 200, svc->next_trial(req.get_param_value("rater")));
    } catch (const ValidationError& e) {
      send_json(res, 400, {{"error", e.what()}, {"field", e.field()}});
    }
  });

  svr.Post("/api/response", [svc](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      send_json(res, 400, {{"error", "body is not valid JSON"}, {"field", "body"}});
      return;
    }
    try {
      const StudyRecord r = svc->submit(body);
      send_json(res, 200, {{"ok", true}, {"trial_id", r.trial_id}});
    } catch (const ValidationError& e) {
      send_json(res, 400, {{"error", e.what()}, {"field", e.field()}});
    } catch (const DuplicateResponseError& e) {
      send_json(res, 409, {{"error", e.what()}, {"field", "trial_id"}});
    }
  });

  svr.Get(R"(/api/image/([0-9a-f]+))", [svc](const httplib::Request& req, httplib::Response& res) {
    const auto path = svc->image_for_token(req.matches[1]);
    if (!path) {
      send_json(res, 404, {{"error", "unknown image token"}});
      return;
    }
    std::ifstream in(*path, std::ios::binary);
    if (!in) {
      send_json(res, 500, {{"error", "image unavailable"}});
      return;
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    res.set_content(buf.str(), "image/png");
  });

  if (!static_dir.empty()) {
    svr.set_mount_point("/", static_dir.string());
  } else {
    svr.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_content(kPlaceholderPage, "text/html"); });
  }
}

StudyServer::~StudyServer() { stop(); }

int StudyServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  if (!impl_->server.bind_to_port(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void StudyServer::listen() { impl_->server.listen_after_bind(); }

void StudyServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace medgan
