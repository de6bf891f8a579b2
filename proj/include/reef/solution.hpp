#pragma once

#include "reef/component.hpp"
#include "reef/process.hpp"
#include "reef/registry.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace reef {

enum class StageKind { PrepareEnv, InstallDataset, DetectSoftware, InstallFramework, InstallModel, InstallDeps, Compile };

std::string_view to_string(StageKind kind) noexcept;
std::optional<StageKind> parse_stage_kind(std::string_view text) noexcept;

struct Stage {
  StageKind kind = StageKind::PrepareEnv;
  std::optional<ComponentId> target;
  nlohmann::json params = nlohmann::json::object();
};

enum class Comparator { WithinAbs, WithinRel, AtLeast, AtMost };

std::string_view to_string(Comparator c) noexcept;
std::optional<Comparator> parse_comparator(std::string_view text) noexcept;

struct MetricRule {
  std::string metric; // dotted path into the metrics object
  Comparator comparator = Comparator::WithinAbs;
  double reference = 0.0;
  double tolerance = 0.0;

  nlohmann::json to_json() const;
  static MetricRule from_json(nlohmann::json const &j);
};

/// The `meta` of a solution component.
struct SolutionManifest {
  ComponentId id;
  Version version;
  std::vector<DependencySpec> dependencies;
  std::vector<Stage> stages;
  std::vector<std::string> run_command;
  std::string output_file;
  std::vector<MetricRule> validation;
  std::optional<ComponentId> reference_result;

  static SolutionManifest from_meta(ComponentId id, Version version, nlohmann::json const &meta);
  static SolutionManifest from_component(Component const &component);
};

/// Host-side state shared by init and run.
struct Workspace {
  Registry *registry = nullptr;
  fs::path prefix;
  fs::path env_db;
  std::string platform;
  /// Search dirs for detect-software stages; empty means PATH.
  std::vector<fs::path> detect_dirs;

  /// Pulls a pinned component into `<prefix>/.components/<digest>` (reusing a
  /// verified copy when present).
  Component materialize(Pin const &pin) const;
};

struct StageTrace {
  std::size_t index = 0;
  StageKind kind = StageKind::PrepareEnv;
  std::string target;
  std::string outcome;
};

struct InitResult {
  Lockfile lockfile;
  fs::path lockfile_path;
  std::vector<StageTrace> trace;
};

inline constexpr char kLockFileName[] = "lock.json";
inline constexpr char kEnvStateFileName[] = "env.json";
inline constexpr char kTraceFileName[] = "logs/trace.json";

/// Pins the closure, executes the stages in manifest order and writes
/// `lock.json`. Stage errors keep their kind and gain `details.stage`.
InitResult init(SolutionManifest const &manifest, RegistryIndex const &index, Workspace const &workspace,
                fs::path const &workdir);

struct RunOptions {
  std::map<std::string, std::string> env; // extra child environment
  bool sample_rss = false;
};

struct RunOutput {
  nlohmann::json output;
  ProcessResult process;
  fs::path stdout_log;
  fs::path stderr_log;
};

/// Renders and executes the run command in `workdir`. Throws RenderError,
/// NonZeroExit or MalformedOutput.
RunOutput run(SolutionManifest const &manifest, Lockfile const &lockfile, nlohmann::json const &input,
              fs::path const &workdir, RunOptions const &options = {});

struct RuleOutcome {
  MetricRule rule;
  std::optional<double> value; // nullopt: metric missing
  double delta = 0.0;          // value - reference
  bool pass = false;
};

struct ValidationReport {
  std::vector<RuleOutcome> rules;
  bool pass = true;

  nlohmann::json to_json() const;
};

/// Looks up a dotted path (`latency_ms.median`) in a JSON object.
std::optional<double> lookup_metric(nlohmann::json const &metrics, std::string const &path);

/// Evaluates one rule. Tolerance boundaries are inclusive; a relative slack
/// of 1e-12 absorbs binary rounding of decimal inputs.
bool rule_passes(Comparator comparator, double value, double reference, double tolerance) noexcept;

ValidationReport validate(nlohmann::json const &metrics, std::vector<MetricRule> const &rules);

} // namespace reef
