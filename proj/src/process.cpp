#include "reef/process.hpp"

#include <algorithm>
#include <array>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

extern char **environ;

namespace reef {
namespace {

using Clock = std::chrono::steady_clock;

#ifdef __linux__
std::uint64_t group_rss_bytes(pid_t pgid) {
  static long const page = ::sysconf(_SC_PAGESIZE);
  std::uint64_t total = 0;
  std::error_code ec;
  for (auto const &entry : fs::directory_iterator("/proc", ec)) {
    auto const &name = entry.path().filename().native();
    if (name.empty() || !std::all_of(name.begin(), name.end(), ::isdigit)) {
      continue;
    }
    std::ifstream in(entry.path() / "stat");
    std::string line;
    if (!std::getline(in, line)) {
      continue;
    }
    // comm may contain spaces; fields resume after the last ')'
    auto close = line.rfind(')');
    if (close == std::string::npos) {
      continue;
    }
    std::istringstream fields(line.substr(close + 2));
    std::string state;
    long ppid = 0, pgrp = 0;
    fields >> state >> ppid >> pgrp;
    if (pgrp != pgid) {
      continue;
    }
    std::string skip;
    for (int i = 0; i < 18; ++i) { // fields 6..23; rss is field 24
      fields >> skip;
    }
    long rss_pages = 0;
    fields >> rss_pages;
    if (rss_pages > 0) {
      total += static_cast<std::uint64_t>(rss_pages) * static_cast<std::uint64_t>(page);
    }
  }
  return total;
}
#endif

} // namespace

std::optional<fs::path> find_executable(std::string const &name) {
  if (name.find('/') != std::string::npos) {
    return fs::path(name);
  }
  char const *path = std::getenv("PATH");
  if (path == nullptr) {
    return std::nullopt;
  }
  std::string_view rest(path);
  while (true) {
    auto colon = rest.find(':');
    auto dir = rest.substr(0, colon);
    if (!dir.empty()) {
      fs::path candidate = fs::path(dir) / name;
      if (::access(candidate.c_str(), X_OK) == 0 && fs::is_regular_file(candidate)) {
        return candidate;
      }
    }
    if (colon == std::string_view::npos) {
      break;
    }
    rest.remove_prefix(colon + 1);
  }
  return std::nullopt;
}

ProcessResult run_process(ProcessOptions const &options) {
  ProcessResult result;
  if (options.argv.empty()) {
    result.spawn_failed = true;
    result.err = "empty command";
    return result;
  }

  // Everything the child needs is prepared before fork: only
  // async-signal-safe calls happen between fork and exec.
  std::map<std::string, std::string> env_map;
  for (char **e = environ; *e != nullptr; ++e) {
    std::string_view kv(*e);
    auto eq = kv.find('=');
    if (eq != std::string_view::npos) {
      env_map.emplace(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
    }
  }
  for (auto const &[k, v] : options.env) {
    env_map[k] = v;
  }
  std::vector<std::string> env_strings;
  for (auto const &[k, v] : env_map) {
    env_strings.push_back(k + "=" + v);
  }
  std::vector<char *> envp;
  for (auto &s : env_strings) {
    envp.push_back(s.data());
  }
  envp.push_back(nullptr);

  std::vector<std::string> argv_copy = options.argv;
  std::vector<char *> argv;
  for (auto &a : argv_copy) {
    argv.push_back(a.data());
  }
  argv.push_back(nullptr);

  std::string exe = options.argv.front();
  if (exe.find('/') == std::string::npos) {
    auto found = find_executable(exe);
    if (!found) {
      result.spawn_failed = true;
      result.err = "executable not found: " + exe;
      return result;
    }
    exe = found->string();
  }
  std::string cwd = options.cwd.string();

  int out_pipe[2], err_pipe[2], exec_pipe[2];
  // O_CLOEXEC on every end: concurrent spawns from other threads must not
  // inherit our write ends (dup2 onto 1/2 clears the flag in the child).
  if (::pipe2(out_pipe, O_CLOEXEC) != 0 || ::pipe2(err_pipe, O_CLOEXEC) != 0 ||
      ::pipe2(exec_pipe, O_CLOEXEC) != 0) {
    result.spawn_failed = true;
    result.err = std::string("pipe: ") + std::strerror(errno);
    return result;
  }

  auto start = Clock::now();
  pid_t pid = ::fork();
  if (pid < 0) {
    result.spawn_failed = true;
    result.err = std::string("fork: ") + std::strerror(errno);
    for (int fd : {out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1], exec_pipe[0], exec_pipe[1]}) {
      ::close(fd);
    }
    return result;
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    int devnull = ::open("/dev/null", O_RDONLY);
    if (devnull >= 0) {
      ::dup2(devnull, STDIN_FILENO);
    }
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::dup2(err_pipe[1], STDERR_FILENO);
    if (!cwd.empty() && ::chdir(cwd.c_str()) != 0) {
      int e = errno;
      (void)!::write(exec_pipe[1], &e, sizeof e);
      ::_exit(127);
    }
    ::execve(exe.c_str(), argv.data(), envp.data());
    int e = errno;
    (void)!::write(exec_pipe[1], &e, sizeof e);
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  ::close(exec_pipe[1]);

  int child_errno = 0;
  if (::read(exec_pipe[0], &child_errno, sizeof child_errno) == sizeof child_errno) {
    result.spawn_failed = true;
  }
  ::close(exec_pipe[0]);

  std::uint64_t sampled_peak = 0;
  auto sample = [&] {
#ifdef __linux__
    if (options.sample_rss) {
      sampled_peak = std::max(sampled_peak, group_rss_bytes(pid));
    }
#endif
  };
  auto deadline = options.timeout ? std::optional(start + *options.timeout) : std::nullopt;
  auto kill_group = [&] {
    result.timed_out = true;
    ::kill(-pid, SIGKILL);
  };

  std::array<pollfd, 2> fds{{{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}}};
  std::array<std::string *, 2> sinks{&result.out, &result.err};
  int open_fds = 2;
  std::array<char, 8192> buf;
  sample();
  while (open_fds > 0) {
    int wait_ms = -1;
    if (options.sample_rss) {
      wait_ms = static_cast<int>(options.rss_interval.count());
    }
    if (deadline && !result.timed_out) {
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(*deadline - Clock::now()).count();
      if (left <= 0) {
        kill_group();
        continue;
      }
      wait_ms = wait_ms < 0 ? static_cast<int>(left) : std::min<int>(wait_ms, static_cast<int>(left));
    }
    int rc = ::poll(fds.data(), fds.size(), wait_ms);
    if (rc < 0 && errno != EINTR) {
      break;
    }
    sample();
    for (std::size_t i = 0; i < fds.size(); ++i) {
      if (fds[i].fd < 0 || (fds[i].revents & (POLLIN | POLLHUP | POLLERR)) == 0) {
        continue;
      }
      auto n = ::read(fds[i].fd, buf.data(), buf.size());
      if (n > 0) {
        sinks[i]->append(buf.data(), static_cast<std::size_t>(n));
      } else if (n == 0 || errno != EINTR) {
        ::close(fds[i].fd);
        fds[i].fd = -1;
        --open_fds;
      }
    }
  }

  int status = 0;
  rusage usage{};
  while (true) {
    pid_t r = ::wait4(pid, &status, (deadline || options.sample_rss) ? WNOHANG : 0, &usage);
    if (r == pid) {
      break;
    }
    if (r < 0 && errno != EINTR) {
      break;
    }
    if (r == 0) {
      sample();
      if (deadline && !result.timed_out && Clock::now() >= *deadline) {
        kill_group();
      }
      ::usleep(1000);
    }
  }
  result.wall = Clock::now() - start;

  if (result.spawn_failed) {
    result.err = "cannot execute " + exe + ": " + std::strerror(child_errno);
    result.exit_code = 127;
    return result;
  }
  if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.term_signal = WTERMSIG(status);
  }
#ifdef __linux__
  if (options.sample_rss) {
    // ru_maxrss is in KiB on Linux
    auto reaped = static_cast<std::uint64_t>(usage.ru_maxrss) * 1024u;
    result.peak_rss_bytes = std::max(sampled_peak, reaped);
  }
#endif
  return result;
}

} // namespace reef
