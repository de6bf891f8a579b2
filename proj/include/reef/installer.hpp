#pragma once

#include "reef/component.hpp"
#include "reef/detector.hpp"
#include "reef/template.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <string>
#include <vector>

namespace reef {

struct InstallStep {
  enum class Verb { Fetch, Extract, RunScript, WriteFile };

  Verb verb = Verb::WriteFile;
  // fetch
  std::string url;
  std::string sha256;
  // fetch target / extract destination
  std::string dest;
  // extract
  std::string archive;
  std::string format; // tar-gz | zip
  // run-script
  std::string script;
  std::vector<std::string> args;
  // write-file
  std::string path;
  std::string contents;

  static InstallStep from_json(nlohmann::json const &j);
  std::string_view verb_name() const noexcept;
};

struct RecipeVariant {
  std::vector<std::string> platforms; // `*` matches every platform
  std::vector<InstallStep> steps;
};

struct EnvDependency {
  std::string software;
  VersionReq req;
};

/// A meta-package: the `meta` of a package/dataset/model/script component.
struct InstallRecipe {
  ComponentId package;
  Version version;
  std::vector<RecipeVariant> variants;
  std::vector<EnvDependency> env_dependencies;
  std::vector<ExportTemplate> exports;

  static InstallRecipe from_meta(ComponentId id, Version version, nlohmann::json const &meta);
  static InstallRecipe from_component(Component const &component);
};

/// Steps of the first variant listing `platform` or `*`. Throws
/// NoVariantForPlatform.
std::vector<InstallStep> const &plan_install(InstallRecipe const &recipe, std::string const &platform);

struct InstallRequest {
  InstallRecipe recipe;
  fs::path source_dir;              // component payload, copied into the sandbox first
  std::string source_digest;        // component digest
  nlohmann::json params = nlohmann::json::object();
  TemplateContext extra_context;    // e.g. `dep:ns/name:root` of already installed pins
};

struct InstallOutcome {
  EnvironmentEntry entry;
  std::size_t steps_executed = 0;
  bool reused = false; // stamp matched, nothing ran
};

inline constexpr char kStampFileName[] = ".reef-installed";
inline constexpr char kInstallLogName[] = ".reef-install.log";

/// `<prefix>/<ns>/<name>/<version>`
fs::path install_dir(fs::path const &prefix, ComponentId const &id, Version const &version);

/// Digest recorded in the stamp file for a request on a platform.
std::string stamp_digest(InstallRequest const &request, std::string const &platform);

/// Runs the platform's steps in a scratch directory and renames it into place.
/// A matching stamp makes this a no-op apart from re-registering the entry.
/// Throws FetchDigestMismatch, StepFailed, MissingEnvDependency,
/// SandboxEscape, NoVariantForPlatform, UnknownPlaceholder.
InstallOutcome install(InstallRequest const &request, fs::path const &prefix, fs::path const &env_db,
                       std::string const &platform);

} // namespace reef
