#include "reef/fsutil.hpp"

#include "reef/error.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iterator>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

namespace reef {

std::string read_file(fs::path const &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::IoError, "cannot read " + path.string(), {{"path", path.string()}});
  }
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file_atomic(fs::path const &path, std::string_view contents) {
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
  }
  fs::path tmp = path;
  tmp += ".tmp-" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error(ErrorKind::StorageFailure, "cannot write " + tmp.string(), {{"path", tmp.string()}});
    }
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      throw Error(ErrorKind::StorageFailure, "short write to " + tmp.string(), {{"path", tmp.string()}});
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(ErrorKind::StorageFailure, "cannot rename into " + path.string() + ": " + ec.message(),
                {{"path", path.string()}});
  }
}

void append_file(fs::path const &path, std::string_view contents) {
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::app);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  out.flush();
  if (!out) {
    throw Error(ErrorKind::StorageFailure, "cannot append to " + path.string(), {{"path", path.string()}});
  }
}

bool is_safe_relative(std::string_view rel) noexcept {
  if (rel.empty() || rel.front() == '/' || rel.front() == '\\') {
    return false;
  }
  if (rel.size() >= 2 && rel[1] == ':') {
    return false; // drive letter
  }
  std::size_t start = 0;
  while (start <= rel.size()) {
    auto end = rel.find_first_of("/\\", start);
    if (end == std::string_view::npos) {
      end = rel.size();
    }
    if (rel.substr(start, end - start) == "..") {
      return false;
    }
    start = end + 1;
  }
  return true;
}

fs::path make_temp_dir(fs::path const &parent, std::string_view stem) {
  fs::create_directories(parent);
  std::string templ = (parent / (std::string(stem) + "-XXXXXX")).string();
  if (::mkdtemp(templ.data()) == nullptr) {
    throw Error(ErrorKind::StorageFailure, "cannot create temp dir under " + parent.string());
  }
  return templ;
}

FileLock::FileLock(fs::path const &lock_path) {
  std::error_code ec;
  if (lock_path.has_parent_path()) {
    fs::create_directories(lock_path.parent_path(), ec);
  }
  fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) {
    throw Error(ErrorKind::StorageFailure, "cannot open lock " + lock_path.string());
  }
  while (::flock(fd_, LOCK_EX) != 0) {
    if (errno != EINTR) {
      ::close(fd_);
      throw Error(ErrorKind::StorageFailure, "cannot lock " + lock_path.string());
    }
  }
}

FileLock::~FileLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

ScopedDir::~ScopedDir() {
  if (!path_.empty()) {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
}

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::now();
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
  std::time_t secs = static_cast<std::time_t>(ms / 1000);
  std::tm tm{};
  ::gmtime_r(&secs, &tm);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms % 1000));
  return buf;
}

} // namespace reef
