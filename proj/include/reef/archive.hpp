#pragma once

#include "reef/fsutil.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace reef {

struct ArchiveEntry {
  std::string path;
  std::string bytes;
  bool executable = false;
};

/// Deterministic ustar+gzip: entries sorted by path, zero mtimes/owners.
std::string write_tar_gz(std::vector<ArchiveEntry> entries);

/// Regular files only; directories are implied by paths. Throws IoError on a
/// malformed archive.
std::vector<ArchiveEntry> read_tar_gz(std::string_view data);

/// Stored and deflated members. Throws IoError on a malformed archive.
std::vector<ArchiveEntry> read_zip(std::string_view data);

/// Packs `root/<path>` for every listed path.
std::string pack_directory(fs::path const &root, std::vector<std::string> const &paths);

/// Writes entries below `dest`. Throws SandboxEscape if an entry path is
/// absolute or contains `..`.
void extract_entries(std::vector<ArchiveEntry> const &entries, fs::path const &dest);

std::string gzip_compress(std::string_view data);
std::string gzip_decompress(std::string_view data);

} // namespace reef
