#include "reef/platform.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <sys/utsname.h>

namespace reef {

PlatformInfo PlatformInfo::from_json(nlohmann::json const &j) {
  return {j.at("os").get<std::string>(), j.at("arch").get<std::string>(), j.value("cpu", "")};
}

PlatformInfo host_platform() {
  PlatformInfo info;
  utsname u{};
  if (::uname(&u) == 0) {
    info.os = u.sysname;
    info.arch = u.machine;
  } else {
    info.os = "unknown";
    info.arch = "unknown";
  }
  auto normalise = [](std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) {
      return std::isalnum(c) ? static_cast<char>(std::tolower(c)) : '_';
    });
    return s;
  };
  info.os = normalise(info.os);
  info.arch = normalise(info.arch);

  std::ifstream cpuinfo("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpuinfo, line)) {
    if (line.starts_with("model name")) {
      auto colon = line.find(':');
      if (colon != std::string::npos) {
        info.cpu = line.substr(colon + 1);
        info.cpu.erase(0, info.cpu.find_first_not_of(' '));
      }
      break;
    }
  }
  if (info.cpu.empty()) {
    info.cpu = info.arch;
  }
  return info;
}

std::string host_platform_tag() { return host_platform().tag(); }

} // namespace reef
