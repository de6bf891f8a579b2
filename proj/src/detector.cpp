#include "reef/detector.hpp"

#include "reef/canonical.hpp"
#include "reef/error.hpp"
#include "reef/process.hpp"

#include <algorithm>
#include <cstdlib>
#include <future>
#include <regex>
#include <set>
#include <sstream>

#include <unistd.h>

namespace reef {

using nlohmann::json;

namespace {

struct Probe {
  std::optional<EnvironmentEntry> entry;
  std::optional<ProbeDiagnostic> diagnostic;
};

Probe probe(DetectorRule const &rule, std::regex const &pattern, fs::path const &candidate,
            std::string const &platform, std::chrono::milliseconds timeout) {
  Probe p;
  TemplateContext ctx{{"exe", candidate.string()}};
  ProcessOptions opts;
  for (auto const &arg : rule.version_command) {
    opts.argv.push_back(render(arg, ctx));
  }
  opts.timeout = timeout;
  auto result = run_process(opts);
  if (result.timed_out) {
    p.diagnostic = ProbeDiagnostic{candidate, "probe timed out after " + std::to_string(timeout.count()) + " ms"};
    return p;
  }
  if (result.spawn_failed) {
    p.diagnostic = ProbeDiagnostic{candidate, result.err};
    return p;
  }
  std::string output = result.out + result.err;
  std::smatch m;
  if (!std::regex_search(output, m, pattern)) {
    return p;
  }
  auto version = Version::parse_lenient(m[1].str());
  if (!version) {
    return p;
  }
  if (!Version::try_parse(m[1].str())) {
    p.diagnostic = ProbeDiagnostic{candidate, "version '" + m[1].str() + "' normalised to " + version->str()};
  }
  EnvironmentEntry e;
  e.software = rule.software;
  e.version = *version;
  e.location = candidate;
  e.platform = platform;
  e.detected_at = utc_timestamp();
  e.source = EnvSource::Detected;
  TemplateContext export_ctx{{"location", candidate.string()},
                             {"dir", candidate.parent_path().string()},
                             {"version", version->str()},
                             {"software", rule.software}};
  e.exports = render_exports(rule.exports, export_ctx);
  p.entry = std::move(e);
  return p;
}

bool entry_order(EnvironmentEntry const &a, EnvironmentEntry const &b) {
  if (a.version != b.version) {
    return a.version > b.version;
  }
  return a.location < b.location;
}

} // namespace

DetectorRule DetectorRule::from_json(json const &meta) {
  try {
    DetectorRule r;
    r.software = meta.at("software").get<std::string>();
    r.candidates = meta.at("candidates").get<std::vector<std::string>>();
    for (auto const &d : meta.value("extra_dirs", std::vector<std::string>{})) {
      r.extra_dirs.emplace_back(d);
    }
    r.version_command = meta.at("version_command").get<std::vector<std::string>>();
    r.version_pattern = meta.at("version_pattern").get<std::string>();
    for (auto const &e : meta.value("exports", json::array())) {
      r.exports.push_back({e.at("name").get<std::string>(), e.at("value").get<std::string>()});
    }
    if (r.candidates.empty()) {
      throw Error(ErrorKind::InvalidRule, "detector for " + r.software + " has no candidate file names");
    }
    std::regex re(r.version_pattern, std::regex::ECMAScript);
    if (re.mark_count() != 1) {
      throw Error(ErrorKind::InvalidRule, "version pattern must have exactly one capture group",
                  {{"pattern", r.version_pattern}});
    }
    return r;
  } catch (json::exception const &e) {
    throw Error(ErrorKind::InvalidRule, std::string("malformed detector rule: ") + e.what());
  } catch (std::regex_error const &e) {
    throw Error(ErrorKind::InvalidRule, std::string("bad version pattern: ") + e.what());
  }
}

std::string EnvironmentEntry::key() const {
  return sha256_hex(software + '\0' + version.str() + '\0' + location.string()).substr(0, 16);
}

json EnvironmentEntry::to_json() const {
  return {{"id", key()},
          {"software", software},
          {"version", version.str()},
          {"location", location.string()},
          {"exports", exports},
          {"platform", platform},
          {"detected_at", detected_at},
          {"source", source == EnvSource::Detected ? "detected" : "installed"}};
}

EnvironmentEntry EnvironmentEntry::from_json(json const &j) {
  EnvironmentEntry e;
  e.software = j.at("software").get<std::string>();
  e.version = Version::parse(j.at("version").get<std::string>());
  e.location = j.at("location").get<std::string>();
  e.exports = j.value("exports", std::map<std::string, std::string>{});
  e.platform = j.value("platform", "");
  e.detected_at = j.value("detected_at", "");
  e.source = j.value("source", "detected") == "installed" ? EnvSource::Installed : EnvSource::Detected;
  return e;
}

std::vector<fs::path> default_search_dirs() {
  std::vector<fs::path> dirs;
  char const *path = std::getenv("PATH");
  if (path == nullptr) {
    return dirs;
  }
  std::stringstream ss(path);
  std::string dir;
  while (std::getline(ss, dir, ':')) {
    if (!dir.empty()) {
      dirs.emplace_back(dir);
    }
  }
  return dirs;
}

DetectionResult detect(DetectorRule const &rule, std::vector<fs::path> const &search_dirs,
                       std::string const &platform, std::chrono::milliseconds timeout) {
  std::regex pattern;
  try {
    pattern = std::regex(rule.version_pattern, std::regex::ECMAScript);
  } catch (std::regex_error const &e) {
    throw Error(ErrorKind::InvalidRule, std::string("bad version pattern: ") + e.what());
  }
  if (pattern.mark_count() != 1) {
    throw Error(ErrorKind::InvalidRule, "version pattern must have exactly one capture group");
  }

  std::vector<fs::path> dirs = search_dirs;
  dirs.insert(dirs.end(), rule.extra_dirs.begin(), rule.extra_dirs.end());

  // One probe per distinct executable; symlinked aliases collapse onto the
  // lexicographically smallest path.
  std::map<fs::path, fs::path> by_target;
  for (auto const &dir : dirs) {
    for (auto const &name : rule.candidates) {
      std::error_code ec;
      auto candidate = fs::absolute(dir / name, ec).lexically_normal();
      if (ec || !fs::is_regular_file(candidate, ec) || ::access(candidate.c_str(), X_OK) != 0) {
        continue;
      }
      auto target = fs::canonical(candidate, ec);
      if (ec) {
        continue;
      }
      auto [it, inserted] = by_target.emplace(target, candidate);
      if (!inserted && candidate < it->second) {
        it->second = candidate;
      }
    }
  }

  std::vector<std::future<Probe>> pending;
  for (auto const &[target, candidate] : by_target) {
    pending.push_back(std::async(std::launch::async, probe, std::cref(rule), std::cref(pattern), candidate,
                                 std::cref(platform), timeout));
  }
  DetectionResult result;
  for (auto &f : pending) {
    auto p = f.get();
    if (p.entry) {
      result.entries.push_back(std::move(*p.entry));
    }
    if (p.diagnostic) {
      result.diagnostics.push_back(std::move(*p.diagnostic));
    }
  }
  std::sort(result.entries.begin(), result.entries.end(), entry_order);
  std::sort(result.diagnostics.begin(), result.diagnostics.end(),
            [](auto const &a, auto const &b) { return a.candidate < b.candidate; });
  return result;
}

EnvironmentEntry const &select_env(std::vector<EnvironmentEntry> const &entries, VersionReq const &req) {
  for (auto const &e : entries) {
    if (req.satisfies(e.version)) {
      return e;
    }
  }
  json available = json::array();
  for (auto const &e : entries) {
    available.push_back(e.version.str());
  }
  throw Error(ErrorKind::NoSatisfyingEnvironment, "no environment satisfies '" + req.str() + "'",
              {{"req", req.str()}, {"available", available}});
}

std::vector<EnvironmentEntry> entries_for(std::vector<EnvironmentEntry> entries, std::string const &software) {
  std::erase_if(entries, [&](EnvironmentEntry const &e) { return e.software != software; });
  std::sort(entries.begin(), entries.end(), entry_order);
  return entries;
}

std::vector<EnvironmentEntry> list_envs(fs::path const &env_db) {
  std::vector<EnvironmentEntry> out;
  if (!fs::exists(env_db)) {
    return out;
  }
  std::stringstream in(read_file(env_db));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    try {
      out.push_back(EnvironmentEntry::from_json(json::parse(line)));
    } catch (std::exception const &e) {
      throw Error(ErrorKind::StorageFailure, "corrupt env database " + env_db.string() + ": " + e.what());
    }
  }
  return out;
}

std::string register_env(EnvironmentEntry const &entry, fs::path const &env_db) {
  if (!fs::exists(entry.location)) {
    throw Error(ErrorKind::PreconditionViolation, "environment location does not exist: " + entry.location.string(),
                {{"location", entry.location.string()}});
  }
  FileLock lock(fs::path(env_db.string() + ".lock"));
  auto existing = list_envs(env_db);
  auto key = entry.key();
  auto same = std::find_if(existing.begin(), existing.end(), [&](auto const &e) { return e.key() == key; });
  if (same == existing.end()) {
    append_file(env_db, entry.to_json().dump() + "\n");
  } else {
    *same = entry;
    std::string text;
    for (auto const &e : existing) {
      text += e.to_json().dump() + "\n";
    }
    write_file_atomic(env_db, text);
  }
  return key;
}

} // namespace reef
