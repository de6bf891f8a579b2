#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace reef {

namespace fs = std::filesystem;

std::string read_file(fs::path const &path);

/// Writes via a sibling temp file and rename(2), so readers never observe a
/// partially written file.
void write_file_atomic(fs::path const &path, std::string_view contents);

void append_file(fs::path const &path, std::string_view contents);

/// True when `rel` is relative, non-empty and has no `..` segment.
bool is_safe_relative(std::string_view rel) noexcept;

/// Fresh directory `<parent>/<stem>-XXXXXX`.
fs::path make_temp_dir(fs::path const &parent, std::string_view stem);

/// Exclusive advisory lock (flock) on a lock file, held for the object's
/// lifetime.
class FileLock {
public:
  explicit FileLock(fs::path const &lock_path);
  ~FileLock();
  FileLock(FileLock const &) = delete;
  FileLock &operator=(FileLock const &) = delete;

private:
  int fd_ = -1;
};

/// Removes a directory tree on scope exit unless released.
class ScopedDir {
public:
  explicit ScopedDir(fs::path path) : path_(std::move(path)) {}
  ~ScopedDir();
  ScopedDir(ScopedDir const &) = delete;
  ScopedDir &operator=(ScopedDir const &) = delete;

  fs::path const &path() const noexcept { return path_; }
  void release() noexcept { path_.clear(); }

private:
  fs::path path_;
};

/// ISO-8601 UTC with milliseconds, e.g. `2026-10-15T22:17:00.123Z`.
std::string utc_timestamp();

} // namespace reef
