#pragma once

#include "reef/fsutil.hpp"

#include <map>
#include <optional>
#include <string>

namespace reef {

/// Where a `cr` invocation keeps its state.
struct GlobalConfig {
  fs::path home = ".reef";
  std::string registry; // path or http(s) URL
  fs::path prefix;
  fs::path env_db;
  fs::path results;
  std::optional<std::string> platform; // nullopt: host `<os>-<arch>`
  std::string token;

  /// Platform override or the host tag.
  std::string platform_tag() const;
  fs::path workdir_root() const { return home / "work"; }
};

/// Flat `key = value` pairs with `#` comments; values may be double-quoted.
/// Throws InvalidArgument on a malformed line.
std::map<std::string, std::string> parse_flat_toml(std::string const &text);

/// Layers defaults, `reef.toml` (when present), then REEF_HOME, REEF_REGISTRY,
/// REEF_PREFIX, REEF_PLATFORM, REEF_ENV_DB, REEF_RESULTS and REEF_TOKEN.
/// Relative paths in the file resolve against the file's directory.
GlobalConfig load_config(std::optional<fs::path> const &file);

} // namespace reef
