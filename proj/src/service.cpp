#include "reef/service.hpp"

#include "reef/error.hpp"
#include "reef/registry.hpp"
#include "reef/results.hpp"

#include <httplib.h>

#include <thread>

namespace reef {

using nlohmann::json;

namespace {

int status_for(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::DuplicateVersion:
  case ErrorKind::DuplicateRecord:
    return 409;
  case ErrorKind::UnknownComponent:
    return 404;
  case ErrorKind::DigestMismatch:
    return 422;
  case ErrorKind::StorageFailure:
  case ErrorKind::IoError:
    return 500;
  default:
    return 400;
  }
}

void reply_error(httplib::Response &res, Error const &e) {
  res.status = status_for(e.kind());
  res.set_content(e.to_json().dump(), "application/json");
}

} // namespace

struct Service::Impl {
  ServiceOptions options;
  LocalRegistry registry;
  ResultStore store;
  httplib::Server server;
  std::thread thread;
  int port = 0;

  explicit Impl(ServiceOptions o)
      : options(std::move(o)), registry(options.registry_root), store(options.results_store) {}

  bool authorised(httplib::Request const &req, httplib::Response &res) const {
    if (options.token.empty() || req.get_header_value("Authorization") == "Bearer " + options.token) {
      return true;
    }
    res.status = 401;
    res.set_content(R"({"error":"Unauthorized","message":"missing or wrong bearer token","details":{}})",
                    "application/json");
    return false;
  }

  void routes() {
    server.Get("/v1/index", [this](httplib::Request const &, httplib::Response &res) {
      try {
        res.set_content(registry.index().to_json().dump(), "application/json");
      } catch (Error const &e) {
        reply_error(res, e);
      }
    });

    static constexpr char kComponentPath[] = R"(/v1/components/([^/]+)/([^/]+)/([^/]+))";

    server.Get(kComponentPath, [this](httplib::Request const &req, httplib::Response &res) {
      try {
        auto id = ComponentId::parse(std::string(req.matches[1]) + "/" + std::string(req.matches[2]));
        auto version = Version::parse(req.matches[3].str());
        res.set_content(registry.fetch_blob(id, version), "application/gzip");
      } catch (Error const &e) {
        reply_error(res, e);
      }
    });

    server.Put(kComponentPath, [this](httplib::Request const &req, httplib::Response &res) {
      if (!authorised(req, res)) {
        return;
      }
      try {
        auto id = ComponentId::parse(std::string(req.matches[1]) + "/" + std::string(req.matches[2]));
        auto version = Version::parse(req.matches[3].str());
        std::optional<std::string> digest;
        if (req.has_header("X-Reef-Digest")) {
          digest = req.get_header_value("X-Reef-Digest");
        }
        auto rec = registry.publish_archive(req.body, digest, std::pair{id, version});
        res.status = 201;
        res.set_content(rec.to_json().dump(), "application/json");
      } catch (Error const &e) {
        reply_error(res, e);
      }
    });

    server.Post("/v1/results", [this](httplib::Request const &req, httplib::Response &res) {
      if (!authorised(req, res)) {
        return;
      }
      auto body = json::parse(req.body, nullptr, false);
      if (body.is_discarded()) {
        res.status = 400;
        res.set_content(Error(ErrorKind::SchemaViolation, "request body is not JSON").to_json().dump(),
                        "application/json");
        return;
      }
      try {
        auto id = store.ingest(body);
        res.status = 201;
        res.set_content(json{{"id", id}}.dump(), "application/json");
      } catch (Error const &e) {
        reply_error(res, e);
      }
    });

    server.Get("/v1/results", [this](httplib::Request const &req, httplib::Response &res) {
      try {
        std::optional<ComponentId> solution;
        if (req.has_param("solution")) {
          solution = ComponentId::parse(req.get_param_value("solution"));
        }
        auto since = req.get_param_value("since");
        json out = json::array();
        for (auto const &r : store.load()) {
          // ISO-8601 UTC timestamps of equal shape order lexicographically
          if ((!solution || r.solution == *solution) && (since.empty() || r.timestamp >= since)) {
            out.push_back(r.to_json());
          }
        }
        res.set_content(out.dump(), "application/json");
      } catch (Error const &e) {
        reply_error(res, e);
      }
    });
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) { impl_->routes(); }

Service::~Service() { stop(); }

int Service::bind(std::string const &host, int port) {
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else if (impl_->server.bind_to_port(host, port)) {
    impl_->port = port;
  } else {
    impl_->port = -1;
  }
  if (impl_->port <= 0) {
    throw Error(ErrorKind::TransportFailure, "cannot bind " + host + ":" + std::to_string(port));
  }
  return impl_->port;
}

void Service::start() {
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void Service::serve() { impl_->server.listen_after_bind(); }

void Service::stop() {
  if (!impl_) {
    return;
  }
  impl_->server.stop();
  if (impl_->thread.joinable()) {
    impl_->thread.join();
  }
}

} // namespace reef
