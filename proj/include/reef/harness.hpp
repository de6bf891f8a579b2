#pragma once

#include "reef/json_schema.hpp"
#include "reef/platform.hpp"
#include "reef/registry.hpp"
#include "reef/solution.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace reef {

struct BenchmarkConfig {
  unsigned repetitions = 10;
  unsigned warmup = 1;
  nlohmann::json input = nlohmann::json::object();
  std::optional<std::string> submitter;
};

struct LatencySummary {
  double min = 0, mean = 0, median = 0, p90 = 0, p99 = 0;

  nlohmann::json to_json() const;
  static LatencySummary from_json(nlohmann::json const &j);
};

struct MetricSummary {
  LatencySummary latency_ms;
  double throughput_items_per_s = 0;
  std::optional<double> accuracy;
  std::optional<std::uint64_t> peak_rss_bytes; // absent, never zero, when unmeasured

  nlohmann::json to_json() const;
  static MetricSummary from_json(nlohmann::json const &j);
};

/// Nearest-rank percentile of an ascending range: the value at 1-based rank
/// ceil(p/100 * n), clamped to [1, n].
template <typename T>
T nearest_rank(std::span<T const> sorted, double p) {
  auto n = sorted.size();
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return sorted[rank - 1];
}

/// Throws EmptySamples.
LatencySummary summarize(std::span<double const> samples_ms);

struct ResultRecord {
  ComponentId solution;
  Version solution_version;
  std::string lockfile_digest;
  PlatformInfo platform;
  MetricSummary summary;
  unsigned repetitions = 0;
  std::string timestamp;
  std::optional<std::string> submitter;
  bool reference = false;

  nlohmann::json to_json() const;
  /// Throws SchemaViolation with the list of problems.
  static ResultRecord from_json(nlohmann::json const &j);
  /// SHA-256 of the canonical JSON form.
  std::string digest() const;
  /// First 16 hex characters of the digest.
  std::string id() const { return digest().substr(0, 16); }
};

/// Problems that make a record unacceptable to the store.
std::vector<Violation> check_record(nlohmann::json const &j);

/// Runs warmups (discarded) then measured repetitions, timing each child
/// process on the monotonic clock. Throws BenchmarkFailed(repetition).
ResultRecord benchmark(SolutionManifest const &manifest, Lockfile const &lockfile, BenchmarkConfig const &config,
                       fs::path const &workdir);

/// Writes `result-<timestamp>-<short digest>.json` into `dir`.
fs::path write_result(ResultRecord const &record, fs::path const &dir);

} // namespace reef
