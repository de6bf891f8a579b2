#pragma once

#include "reef/fsutil.hpp"
#include "reef/template.hpp"
#include "reef/version.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <map>
#include <string>
#include <vector>

namespace reef {

/// Declarative probe for one piece of software (the `meta` of a detector
/// component).
struct DetectorRule {
  std::string software;
  std::vector<std::string> candidates;     // file names looked up in each search dir
  std::vector<fs::path> extra_dirs;
  std::vector<std::string> version_command; // `${exe}` expands to the candidate path
  std::string version_pattern;              // exactly one capture group
  std::vector<ExportTemplate> exports;      // context: location, dir, version, software

  /// Throws InvalidRule.
  static DetectorRule from_json(nlohmann::json const &meta);
};

enum class EnvSource { Detected, Installed };

struct EnvironmentEntry {
  std::string software;
  Version version;
  fs::path location;
  std::map<std::string, std::string> exports;
  std::string platform;
  std::string detected_at;
  EnvSource source = EnvSource::Detected;

  /// Identity used for de-duplication: (software, version, location).
  std::string key() const;

  nlohmann::json to_json() const;
  static EnvironmentEntry from_json(nlohmann::json const &j);
};

struct ProbeDiagnostic {
  fs::path candidate;
  std::string message;
};

struct DetectionResult {
  std::vector<EnvironmentEntry> entries; // version descending, then location ascending
  std::vector<ProbeDiagnostic> diagnostics;
};

inline constexpr std::chrono::milliseconds kProbeTimeout{10'000};

/// Probes every candidate in `search_dirs` followed by the rule's extra dirs.
/// Candidates are probed concurrently; the result order does not depend on
/// completion order.
DetectionResult detect(DetectorRule const &rule, std::vector<fs::path> const &search_dirs,
                       std::string const &platform, std::chrono::milliseconds timeout = kProbeTimeout);

/// The PATH directories.
std::vector<fs::path> default_search_dirs();

/// First entry (in detect order) whose version satisfies `req`. Throws
/// NoSatisfyingEnvironment.
EnvironmentEntry const &select_env(std::vector<EnvironmentEntry> const &entries, VersionReq const &req);

/// Entries of one software in detect order.
std::vector<EnvironmentEntry> entries_for(std::vector<EnvironmentEntry> entries, std::string const &software);

/// Adds or replaces (same key) an entry in the JSON-lines env database and
/// returns its id. Throws PreconditionViolation if the location is missing.
std::string register_env(EnvironmentEntry const &entry, fs::path const &env_db);

std::vector<EnvironmentEntry> list_envs(fs::path const &env_db);

} // namespace reef
