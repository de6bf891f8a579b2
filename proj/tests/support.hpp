#pragma once

#include "reef/canonical.hpp"
#include "reef/component.hpp"
#include "reef/error.hpp"
#include "reef/fsutil.hpp"
#include "reef/process.hpp"
#include "reef/registry.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdlib>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace reef::test {

inline fs::path components_dir() { return REEF_COMPONENTS_DIR; }
inline fs::path cr_binary() { return REEF_CR_BINARY; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  TempDir() : path_(make_temp_dir(fs::temp_directory_path(), "reef-test")) {}
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(TempDir const &) = delete;
  TempDir &operator=(TempDir const &) = delete;

  fs::path const &path() const { return path_; }
  fs::path operator/(fs::path const &rel) const { return path_ / rel; }

private:
  fs::path path_;
};

inline void write(fs::path const &path, std::string const &text, bool executable = false) {
  fs::create_directories(path.parent_path());
  write_file_atomic(path, text);
  if (executable) {
    fs::permissions(path, fs::perms::owner_all | fs::perms::group_read | fs::perms::group_exec |
                              fs::perms::others_read | fs::perms::others_exec);
  }
}

/// Writes `<dir>/meta.json` plus files and loads the component back.
inline Component make_component(fs::path const &dir, std::string const &id, std::string const &version,
                                std::string const &kind, nlohmann::json const &meta,
                                std::map<std::string, std::string> const &files = {}) {
  nlohmann::json list = nlohmann::json::array();
  for (auto const &[path, body] : files) {
    write(dir / path, body, path.ends_with(".sh"));
    list.push_back(path);
  }
  write(dir / kMetaFileName,
        nlohmann::json{{"id", id}, {"version", version}, {"kind", kind}, {"meta", meta}, {"files", list}}.dump(2));
  return load_component(dir);
}

/// One-variant recipe that writes a single file.
inline nlohmann::json trivial_recipe(nlohmann::json dependencies = nlohmann::json::array()) {
  return {{"recipes",
           {{{"platforms", {"*"}},
             {"steps", {{{"verb", "write-file"}, {"path", "done.txt"}, {"contents", "${name} ${version}"}}}}}}},
          {"dependencies", std::move(dependencies)}};
}

/// Publishes every bundled demo component into a local registry.
inline void publish_demo(Registry &registry) {
  std::vector<fs::path> dirs;
  for (auto const &e : fs::recursive_directory_iterator(components_dir())) {
    if (e.path().filename() == kMetaFileName) {
      dirs.push_back(e.path().parent_path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  for (auto const &d : dirs) {
    registry.publish(load_component(d));
  }
}

/// Runs a command line, returning exit code plus captured output.
inline ProcessResult run_cmd(std::vector<std::string> argv, std::map<std::string, std::string> env = {},
                             fs::path cwd = {}) {
  ProcessOptions o;
  o.argv = std::move(argv);
  o.env = std::move(env);
  o.cwd = std::move(cwd);
  o.timeout = std::chrono::minutes(5);
  return run_process(o);
}

/// Runs a python3 snippet (argv[1..] available as sys.argv[1..]) and returns
/// its stdout. Used as an independent oracle.
inline std::string python(std::string const &code, std::vector<std::string> const &args = {}) {
  std::vector<std::string> argv{REEF_PYTHON, "-c", code};
  argv.insert(argv.end(), args.begin(), args.end());
  auto r = run_cmd(argv);
  if (!r.ok()) {
    throw std::runtime_error("python oracle failed: " + r.err);
  }
  return r.out;
}

template <typename F>
ErrorKind error_kind_of(F &&f) {
  try {
    f();
  } catch (Error const &e) {
    return e.kind();
  }
  throw std::runtime_error("expected reef::Error, nothing was thrown");
}

} // namespace reef::test
