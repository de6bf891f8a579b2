#pragma once

#include "reef/fsutil.hpp"

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace reef {

struct ProcessOptions {
  std::vector<std::string> argv;
  fs::path cwd;                                // empty: inherit
  std::map<std::string, std::string> env;      // added to (or replacing) the inherited environment
  std::optional<std::chrono::milliseconds> timeout;
  bool sample_rss = false;                     // Linux only; peak summed over the child's process group
  std::chrono::milliseconds rss_interval{50};
};

struct ProcessResult {
  int exit_code = -1;         // -1 when killed by a signal
  int term_signal = 0;
  bool timed_out = false;
  bool spawn_failed = false;
  std::string out;
  std::string err;
  std::chrono::nanoseconds wall{0}; // fork to reap, monotonic clock
  std::optional<std::uint64_t> peak_rss_bytes;

  bool ok() const noexcept { return !spawn_failed && !timed_out && exit_code == 0; }
};

/// Runs a child process to completion, capturing stdout and stderr. The child
/// gets its own process group so a timeout kills everything it spawned.
ProcessResult run_process(ProcessOptions const &options);

/// Resolves `name` against PATH (or returns it unchanged if it has a slash).
std::optional<fs::path> find_executable(std::string const &name);

} // namespace reef
