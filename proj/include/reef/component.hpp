#pragma once

#include "reef/fsutil.hpp"
#include "reef/json_schema.hpp"
#include "reef/version.hpp"

#include <nlohmann/json.hpp>

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace reef {

enum class Kind { Detector, Package, Dataset, Model, Script, Solution };

std::string_view to_string(Kind kind) noexcept;
std::optional<Kind> parse_kind(std::string_view text) noexcept;

/// Kinds the installer can materialise (they all carry an install recipe).
constexpr bool is_installable(Kind kind) noexcept {
  return kind == Kind::Package || kind == Kind::Dataset || kind == Kind::Model || kind == Kind::Script;
}

/// `namespace/name`, both tokens `[a-z0-9-]{1,64}`.
struct ComponentId {
  std::string ns;
  std::string name;

  auto operator<=>(ComponentId const &) const = default;

  std::string str() const { return ns + "/" + name; }

  static ComponentId parse(std::string_view text);
  static std::optional<ComponentId> try_parse(std::string_view text);
  static bool valid_token(std::string_view token) noexcept;
};

struct FileEntry {
  std::string path; // relative, `/`-separated
  std::uint64_t size = 0;

  bool operator==(FileEntry const &) const = default;
};

/// A component as found on disk: `<root>/meta.json` plus payload files.
struct Component {
  ComponentId id;
  Version version;
  Kind kind = Kind::Package;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<FileEntry> files; // path-sorted
  std::string digest;
  fs::path root;

  /// The part of meta.json covered by the digest: id, version, kind, meta.
  nlohmann::json descriptor() const;
  /// meta.json as written to disk.
  nlohmann::json meta_document() const;
};

inline constexpr char kMetaFileName[] = "meta.json";

/// In-memory payload file used for digesting.
struct FileBlob {
  std::string path;
  std::string bytes;
};

/// SHA-256 over the canonical stream: canonical(meta), then for every file in
/// path order: path, NUL, decimal length, NUL, bytes. Throws DuplicatePath.
std::string canonical_digest(std::vector<FileBlob> files, nlohmann::json const &meta);

/// Same stream, reading file bytes from `root` one file at a time.
std::string canonical_digest_from_disk(fs::path const &root, std::vector<std::string> paths,
                                       nlohmann::json const &meta);

/// Schema plus semantic checks of a kind payload. Empty result means valid.
std::vector<Violation> validate_meta(Kind kind, nlohmann::json const &meta);

/// The JSON Schema document shipped for a kind.
nlohmann::json const &kind_schema(Kind kind);

/// Reads and validates `<dir>/meta.json` and digests the listed files.
/// Throws MissingMeta, SchemaViolation or PathEscape.
Component load_component(fs::path const &dir);

/// Writes meta.json and copies the payload from `component.root` into `dest`.
void store_component(Component const &component, fs::path const &dest);

} // namespace reef
