#pragma once

#include <nlohmann/json.hpp>

#include <string>

namespace reef {

struct PlatformInfo {
  std::string os;   // linux, darwin, ...
  std::string arch; // x86_64, aarch64, ...
  std::string cpu;  // free-form model name

  std::string tag() const { return os + "-" + arch; }

  nlohmann::json to_json() const { return {{"os", os}, {"arch", arch}, {"cpu", cpu}}; }
  static PlatformInfo from_json(nlohmann::json const &j);
};

PlatformInfo host_platform();

/// `<os>-<arch>` of the host.
std::string host_platform_tag();

} // namespace reef
