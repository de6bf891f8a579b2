#pragma once

#include <nlohmann/json.hpp>

#include <stdexcept>
#include <string>
#include <string_view>

namespace reef {

/// Every failure the toolchain reports. The CLI maps these onto exit codes.
enum class ErrorKind {
  // component-model
  MissingMeta,
  SchemaViolation,
  PathEscape,
  DuplicatePath,
  // registry
  UnknownComponent,
  NoMatchingVersion,
  VersionConflict,
  CycleDetected,
  DuplicateVersion,
  DigestMismatch,
  StorageFailure,
  TransportFailure,
  // detector
  InvalidRule,
  NoSatisfyingEnvironment,
  PreconditionViolation,
  // installer
  NoVariantForPlatform,
  FetchDigestMismatch,
  StepFailed,
  MissingEnvDependency,
  SandboxEscape,
  UnknownPlaceholder,
  // solution
  StageFailed,
  RenderError,
  NonZeroExit,
  MalformedOutput,
  // harness
  BenchmarkFailed,
  EmptySamples,
  // results
  DuplicateRecord,
  MissingMetric,
  EmptyStore,
  // misc
  InvalidArgument,
  IoError,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Exception carrying a machine-readable kind plus structured details.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, std::string const &message, nlohmann::json details = nlohmann::json::object())
      : std::runtime_error(message), kind_(kind), details_(std::move(details)) {}

  ErrorKind kind() const noexcept { return kind_; }
  nlohmann::json const &details() const noexcept { return details_; }

  nlohmann::json to_json() const {
    return {{"error", std::string(to_string(kind_))}, {"message", what()}, {"details", details_}};
  }

private:
  ErrorKind kind_;
  nlohmann::json details_;
};

} // namespace reef
