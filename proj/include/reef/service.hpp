#pragma once

#include "reef/fsutil.hpp"
#include "reef/harness.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace reef {

struct ServiceOptions {
  fs::path registry_root;          // LocalRegistry served under /v1/index and /v1/components
  fs::path results_store;          // results.jsonl behind /v1/results
  std::string token;               // when set, PUT and POST need `Authorization: Bearer <token>`
};

/// HTTP front end for a local registry and result store.
///
///   GET  /v1/index
///   GET  /v1/components/{ns}/{name}/{version}
///   PUT  /v1/components/{ns}/{name}/{version}   201, 409 on an existing version
///   POST /v1/results                            201, 400 invalid, 409 duplicate
///   GET  /v1/results?solution=ns/name&since=TIMESTAMP
class Service {
public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(Service const &) = delete;
  Service &operator=(Service const &) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port.
  int bind(std::string const &host, int port);
  /// Serves on a background thread until stop().
  void start();
  /// Serves on the calling thread until stop().
  void serve();
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// POSTs a record to `<base>/v1/results`; returns the stored record id.
/// Throws TransportFailure, SchemaViolation (400) or DuplicateRecord (409).
std::string submit_result(std::string const &base_url, ResultRecord const &record, std::string const &token = {});

std::vector<ResultRecord> list_remote_results(std::string const &base_url, std::optional<std::string> const &solution,
                                              std::optional<std::string> const &since = std::nullopt);

} // namespace reef
