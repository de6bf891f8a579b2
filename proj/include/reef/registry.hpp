#pragma once

#include "reef/component.hpp"
#include "reef/version.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace reef {

/// `<os>-<arch>`, e.g. `linux-x86_64`.
bool valid_platform_tag(std::string_view tag) noexcept;

struct DependencySpec {
  ComponentId id;
  VersionReq req;
  Kind kind = Kind::Package;
  std::vector<std::string> platforms; // empty: every platform

  bool applies_to(std::string_view platform) const;

  nlohmann::json to_json() const;
  static DependencySpec from_json(nlohmann::json const &j);
};

/// The `dependencies` array of a component meta payload (absent means none).
std::vector<DependencySpec> dependencies_of(nlohmann::json const &meta);

struct IndexEntry {
  Version version;
  Kind kind = Kind::Package;
  std::string digest;
  std::vector<DependencySpec> dependencies;
};

/// id -> strictly increasing version list.
class RegistryIndex {
public:
  using Entries = std::map<ComponentId, std::vector<IndexEntry>>;

  Entries const &entries() const noexcept { return entries_; }

  /// Inserts keeping versions sorted. Throws DuplicateVersion.
  void add(ComponentId const &id, IndexEntry entry);

  bool contains(ComponentId const &id) const { return entries_.contains(id); }
  IndexEntry const *find(ComponentId const &id, Version const &version) const;
  std::vector<Version> versions(ComponentId const &id) const;

  nlohmann::json to_json() const;
  static RegistryIndex from_json(nlohmann::json const &j);
  /// SHA-256 of the canonical JSON form.
  std::string digest() const;

private:
  Entries entries_;
};

/// Maximum version of `id` satisfying `req`. Throws UnknownComponent or
/// NoMatchingVersion.
Version resolve(ComponentId const &id, VersionReq const &req, RegistryIndex const &index);

struct Pin {
  ComponentId id;
  Version version;
  std::string digest;

  bool operator==(Pin const &) const = default;
};

/// Pins the platform-filtered transitive closure of `specs`, one version per
/// id, dependencies before dependents. Throws CycleDetected, VersionConflict,
/// NoMatchingVersion or UnknownComponent.
std::vector<Pin> closure(std::vector<DependencySpec> const &specs, RegistryIndex const &index,
                         std::string const &platform);

struct Lockfile {
  ComponentId solution;
  Version solution_version;
  std::vector<Pin> pins;
  std::string platform;
  std::string index_digest;

  bool operator==(Lockfile const &) const = default;

  nlohmann::json to_json() const;
  static Lockfile from_json(nlohmann::json const &j);
  /// Canonical bytes: equal lockfiles serialize identically.
  std::string serialize() const;
  std::string digest() const;
};

struct PublicationRecord {
  ComponentId id;
  Version version;
  std::string digest;
  std::string index_digest;

  nlohmann::json to_json() const;
};

/// A store of immutable component versions.
class Registry {
public:
  virtual ~Registry() = default;

  virtual RegistryIndex index() = 0;
  /// Throws DuplicateVersion for any existing (id, version).
  virtual PublicationRecord publish(Component const &component) = 0;
  /// Raw archive bytes of a published version.
  virtual std::string fetch_blob(ComponentId const &id, Version const &version) = 0;

  /// Materialises the component at `dest` after checking its recomputed
  /// digest against the index. Throws UnknownComponent or DigestMismatch.
  Component pull(ComponentId const &id, Version const &version, fs::path const &dest);
};

/// `registry/blobs/<digest>` plus `registry/index.json`.
class LocalRegistry final : public Registry {
public:
  explicit LocalRegistry(fs::path root);

  RegistryIndex index() override;
  PublicationRecord publish(Component const &component) override;
  std::string fetch_blob(ComponentId const &id, Version const &version) override;

  /// Publishes an already packed archive after unpacking and verifying it.
  PublicationRecord publish_archive(std::string const &blob, std::optional<std::string> const &expected_digest,
                                    std::optional<std::pair<ComponentId, Version>> const &expected_ref = std::nullopt);

  fs::path const &root() const noexcept { return root_; }

private:
  PublicationRecord commit(Component const &component, std::string const &blob);

  fs::path root_;
};

/// Client for the `/v1/index` and `/v1/components/...` endpoints.
class HttpRegistry final : public Registry {
public:
  explicit HttpRegistry(std::string base_url, std::string token = {});

  RegistryIndex index() override;
  PublicationRecord publish(Component const &component) override;
  std::string fetch_blob(ComponentId const &id, Version const &version) override;

private:
  std::string base_url_;
  std::string token_;
};

/// `http://` / `https://` locations give an HttpRegistry, anything else a
/// LocalRegistry rooted at that path.
std::unique_ptr<Registry> open_registry(std::string const &location, std::string const &token = {});

/// Packs a loaded component (meta.json + listed files) into a blob.
std::string pack_component(Component const &component);

/// Unpacks and loads a blob into `dest` (which must not exist).
Component unpack_component(std::string const &blob, fs::path const &dest);

} // namespace reef
