#pragma once

#include "reef/harness.hpp"
#include "reef/solution.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace reef {

enum class Direction { Minimize, Maximize };

struct Objective {
  std::string path; // into the record summary, e.g. `latency_ms.median`
  Direction direction = Direction::Minimize;

  std::string str() const;
  /// `path:min` or `path:max`. Throws InvalidArgument.
  static Objective parse(std::string_view text);
};

/// Objective value of a record, or nullopt when the metric is absent.
std::optional<double> objective_value(ResultRecord const &record, std::string const &path);

/// True when `a` is at least as good as `b` on every coordinate and strictly
/// better on one. Coordinates are already direction-adjusted (larger is better).
inline bool dominates(std::span<double const> a, std::span<double const> b) noexcept {
  bool strict = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) {
      return false;
    }
    strict = strict || a[i] > b[i];
  }
  return strict;
}

/// Indices of the non-dominated points, ascending. Equal points are all kept.
/// `Point` is any contiguous range of doubles.
template <typename Point>
std::vector<std::size_t> non_dominated(std::vector<Point> const &points) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < points.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < points.size() && !dominated; ++j) {
      dominated = j != i && dominates(std::span<double const>(points[j]), std::span<double const>(points[i]));
    }
    if (!dominated) {
      keep.push_back(i);
    }
  }
  return keep;
}

struct Excluded {
  std::string record_id;
  std::string path;
};

struct FrontResult {
  std::vector<ResultRecord> front; // input order
  std::vector<Excluded> excluded;  // records missing an objective metric
};

/// Throws InvalidArgument without objectives.
FrontResult pareto_front(std::vector<ResultRecord> const &records, std::vector<Objective> const &objectives);

enum class MetricStatus { Match, Mismatch, Missing };

std::string_view to_string(MetricStatus status) noexcept;

struct MetricComparison {
  std::string metric;
  std::optional<double> local;
  double reference = 0.0;
  double delta = 0.0;
  MetricStatus status = MetricStatus::Missing;
};

struct ComparisonReport {
  std::vector<MetricComparison> metrics;
  bool overall = true;

  nlohmann::json to_json() const;
};

/// Evaluates each rule against the record summary; `reference` overrides a
/// rule's own reference value for the metrics it names.
ComparisonReport compare(ResultRecord const &record, std::map<std::string, double> const &reference,
                         std::vector<MetricRule> const &rules);

/// JSON-lines store, one canonical record per line.
class ResultStore {
public:
  explicit ResultStore(fs::path path) : path_(std::move(path)) {}

  /// Appends under an exclusive lock. Throws SchemaViolation or DuplicateRecord.
  std::string ingest(nlohmann::json const &record);
  std::string ingest(ResultRecord const &record) { return ingest(record.to_json()); }

  std::vector<ResultRecord> load() const;
  fs::path const &path() const noexcept { return path_; }

private:
  fs::path path_;
};

struct ReportPaths {
  fs::path json;
  fs::path html;
  bool empty = false;
};

/// Writes `report.json` and `report.html` under `out_dir`. An empty
/// selection still yields both files.
ReportPaths emit_report(fs::path const &store, std::optional<ComponentId> const &solution,
                        std::vector<Objective> const &objectives, fs::path const &out_dir);

} // namespace reef
