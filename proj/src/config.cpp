#include "reef/config.hpp"

#include "reef/error.hpp"
#include "reef/platform.hpp"
#include "reef/registry.hpp"

#include <cstdlib>
#include <sstream>

namespace reef {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) {
    return {};
  }
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::optional<std::string> env(char const *name) {
  auto const *v = std::getenv(name);
  if (v == nullptr || *v == '\0') {
    return std::nullopt;
  }
  return std::string(v);
}

bool is_url(std::string const &s) { return s.starts_with("http://") || s.starts_with("https://"); }

} // namespace

std::map<std::string, std::string> parse_flat_toml(std::string const &text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    auto t = trim(line);
    if (t.empty() || t[0] == '#') {
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::InvalidArgument, "reef.toml line " + std::to_string(n) + ": expected key = value");
    }
    auto key = trim(std::string_view(t).substr(0, eq));
    auto value = trim(std::string_view(t).substr(eq + 1));
    if (!value.empty() && value[0] == '"') {
      auto close = value.find('"', 1);
      if (close == std::string::npos) {
        throw Error(ErrorKind::InvalidArgument, "reef.toml line " + std::to_string(n) + ": unterminated string");
      }
      auto rest = trim(std::string_view(value).substr(close + 1));
      if (!rest.empty() && rest[0] != '#') {
        throw Error(ErrorKind::InvalidArgument, "reef.toml line " + std::to_string(n) + ": trailing characters");
      }
      value = value.substr(1, close - 1);
    } else if (auto hash = value.find('#'); hash != std::string::npos) {
      value = trim(std::string_view(value).substr(0, hash));
    }
    if (key.empty()) {
      throw Error(ErrorKind::InvalidArgument, "reef.toml line " + std::to_string(n) + ": empty key");
    }
    out[key] = value;
  }
  return out;
}

std::string GlobalConfig::platform_tag() const { return platform ? *platform : host_platform_tag(); }

GlobalConfig load_config(std::optional<fs::path> const &file) {
  std::map<std::string, std::string> kv;
  fs::path base = fs::current_path();
  auto path = file ? *file : fs::path("reef.toml");
  if (fs::exists(path)) {
    kv = parse_flat_toml(read_file(path));
    base = fs::absolute(path).parent_path();
  } else if (file) {
    throw Error(ErrorKind::InvalidArgument, "config file " + path.string() + " does not exist");
  }
  auto resolve = [&](std::string const &v) { return fs::path(v).is_absolute() ? fs::path(v) : base / v; };

  GlobalConfig c;
  if (auto it = kv.find("home"); it != kv.end()) {
    c.home = resolve(it->second);
  }
  if (auto h = env("REEF_HOME")) {
    c.home = *h;
  }
  c.registry = (c.home / "registry").string();
  c.prefix = c.home / "prefix";
  c.env_db = c.home / "envs.jsonl";
  c.results = c.home / "results.jsonl";

  for (auto const &[k, v] : kv) {
    if (k == "home") {
      continue;
    } else if (k == "registry") {
      c.registry = is_url(v) ? v : resolve(v).string();
    } else if (k == "prefix") {
      c.prefix = resolve(v);
    } else if (k == "env_db") {
      c.env_db = resolve(v);
    } else if (k == "results") {
      c.results = resolve(v);
    } else if (k == "platform") {
      c.platform = v;
    } else if (k == "token") {
      c.token = v;
    } else {
      throw Error(ErrorKind::InvalidArgument, "unknown key '" + k + "' in " + path.string());
    }
  }

  if (auto v = env("REEF_REGISTRY")) {
    c.registry = *v;
  }
  if (auto v = env("REEF_PREFIX")) {
    c.prefix = *v;
  }
  if (auto v = env("REEF_PLATFORM")) {
    c.platform = *v;
  }
  if (auto v = env("REEF_ENV_DB")) {
    c.env_db = *v;
  }
  if (auto v = env("REEF_RESULTS")) {
    c.results = *v;
  }
  if (auto v = env("REEF_TOKEN")) {
    c.token = *v;
  }
  if (c.platform && !valid_platform_tag(*c.platform)) {
    throw Error(ErrorKind::InvalidArgument, "platform '" + *c.platform + "' is not an <os>-<arch> tag");
  }
  return c;
}

} // namespace reef
