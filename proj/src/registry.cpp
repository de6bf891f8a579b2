#include "reef/registry.hpp"

#include "reef/archive.hpp"
#include "reef/canonical.hpp"
#include "reef/error.hpp"

#include <algorithm>

namespace reef {

using nlohmann::json;

namespace {

bool valid_platform_token(std::string_view t) {
  return !t.empty() && std::all_of(t.begin(), t.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
  });
}

json pin_to_json(Pin const &p) {
  return {{"id", p.id.str()}, {"version", p.version.str()}, {"digest", p.digest}};
}

} // namespace

bool valid_platform_tag(std::string_view tag) noexcept {
  auto dash = tag.find('-');
  return dash != std::string_view::npos && valid_platform_token(tag.substr(0, dash)) &&
         valid_platform_token(tag.substr(dash + 1));
}

bool DependencySpec::applies_to(std::string_view platform) const {
  return platforms.empty() || std::find(platforms.begin(), platforms.end(), platform) != platforms.end();
}

json DependencySpec::to_json() const {
  json j = {{"id", id.str()}, {"req", req.str()}, {"kind", std::string(to_string(kind))}};
  if (!platforms.empty()) {
    j["platforms"] = platforms;
  }
  return j;
}

DependencySpec DependencySpec::from_json(json const &j) {
  DependencySpec d;
  d.id = ComponentId::parse(j.at("id").get<std::string>());
  d.req = VersionReq::parse(j.at("req").get<std::string>());
  auto kind = parse_kind(j.at("kind").get<std::string>());
  if (!kind) {
    throw Error(ErrorKind::InvalidArgument, "unknown kind in dependency on " + d.id.str());
  }
  d.kind = *kind;
  if (j.contains("platforms")) {
    d.platforms = j["platforms"].get<std::vector<std::string>>();
    if (d.platforms.empty()) {
      throw Error(ErrorKind::InvalidArgument, "platform list of " + d.id.str() + " must be non-empty");
    }
    for (auto const &p : d.platforms) {
      if (!valid_platform_tag(p)) {
        throw Error(ErrorKind::InvalidArgument, "bad platform tag '" + p + "'");
      }
    }
  }
  return d;
}

std::vector<DependencySpec> dependencies_of(json const &meta) {
  std::vector<DependencySpec> deps;
  if (meta.is_object() && meta.contains("dependencies")) {
    for (auto const &d : meta["dependencies"]) {
      deps.push_back(DependencySpec::from_json(d));
    }
  }
  return deps;
}

void RegistryIndex::add(ComponentId const &id, IndexEntry entry) {
  auto &list = entries_[id];
  auto pos = std::lower_bound(list.begin(), list.end(), entry.version,
                              [](IndexEntry const &e, Version const &v) { return e.version < v; });
  if (pos != list.end() && pos->version == entry.version) {
    throw Error(ErrorKind::DuplicateVersion, id.str() + "@" + entry.version.str() + " is already published",
                {{"id", id.str()}, {"version", entry.version.str()}});
  }
  list.insert(pos, std::move(entry));
}

IndexEntry const *RegistryIndex::find(ComponentId const &id, Version const &version) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) {
    return nullptr;
  }
  for (auto const &e : it->second) {
    if (e.version == version) {
      return &e;
    }
  }
  return nullptr;
}

std::vector<Version> RegistryIndex::versions(ComponentId const &id) const {
  std::vector<Version> out;
  if (auto it = entries_.find(id); it != entries_.end()) {
    for (auto const &e : it->second) {
      out.push_back(e.version);
    }
  }
  return out;
}

json RegistryIndex::to_json() const {
  json components = json::object();
  for (auto const &[id, list] : entries_) {
    json versions = json::array();
    for (auto const &e : list) {
      json deps = json::array();
      for (auto const &d : e.dependencies) {
        deps.push_back(d.to_json());
      }
      versions.push_back({{"version", e.version.str()},
                          {"kind", std::string(to_string(e.kind))},
                          {"digest", e.digest},
                          {"dependencies", deps}});
    }
    components[id.str()] = versions;
  }
  return {{"format", 1}, {"components", components}};
}

RegistryIndex RegistryIndex::from_json(json const &j) {
  RegistryIndex index;
  try {
    for (auto const &[id_text, versions] : j.at("components").items()) {
      auto id = ComponentId::parse(id_text);
      for (auto const &v : versions) {
        IndexEntry e;
        e.version = Version::parse(v.at("version").get<std::string>());
        auto kind = parse_kind(v.at("kind").get<std::string>());
        if (!kind) {
          throw Error(ErrorKind::StorageFailure, "unknown kind in index entry " + id_text);
        }
        e.kind = *kind;
        e.digest = v.at("digest").get<std::string>();
        for (auto const &d : v.value("dependencies", json::array())) {
          e.dependencies.push_back(DependencySpec::from_json(d));
        }
        index.add(id, std::move(e));
      }
    }
  } catch (json::exception const &e) {
    throw Error(ErrorKind::StorageFailure, std::string("malformed registry index: ") + e.what());
  }
  return index;
}

std::string RegistryIndex::digest() const { return sha256_hex(canonical_json(to_json())); }

json Lockfile::to_json() const {
  json pins_json = json::array();
  for (auto const &p : pins) {
    pins_json.push_back(pin_to_json(p));
  }
  return {{"solution", {{"id", solution.str()}, {"version", solution_version.str()}}},
          {"pins", pins_json},
          {"platform", platform},
          {"index_digest", index_digest}};
}

Lockfile Lockfile::from_json(json const &j) {
  try {
    Lockfile l;
    l.solution = ComponentId::parse(j.at("solution").at("id").get<std::string>());
    l.solution_version = Version::parse(j.at("solution").at("version").get<std::string>());
    l.platform = j.at("platform").get<std::string>();
    l.index_digest = j.at("index_digest").get<std::string>();
    for (auto const &p : j.at("pins")) {
      l.pins.push_back({ComponentId::parse(p.at("id").get<std::string>()),
                        Version::parse(p.at("version").get<std::string>()), p.at("digest").get<std::string>()});
    }
    return l;
  } catch (json::exception const &e) {
    throw Error(ErrorKind::InvalidArgument, std::string("malformed lockfile: ") + e.what());
  }
}

std::string Lockfile::serialize() const { return canonical_json(to_json()) + "\n"; }

std::string Lockfile::digest() const { return sha256_hex(serialize()); }

json PublicationRecord::to_json() const {
  return {{"id", id.str()}, {"version", version.str()}, {"digest", digest}, {"index_digest", index_digest}};
}

std::string pack_component(Component const &component) {
  std::vector<ArchiveEntry> entries;
  entries.push_back({kMetaFileName, canonical_json(component.meta_document()), false});
  for (auto const &f : component.files) {
    auto full = component.root / f.path;
    auto perms = fs::status(full).permissions();
    entries.push_back({f.path, read_file(full), (perms & fs::perms::owner_exec) != fs::perms::none});
  }
  return write_tar_gz(std::move(entries));
}

Component unpack_component(std::string const &blob, fs::path const &dest) {
  extract_entries(read_tar_gz(blob), dest);
  return load_component(dest);
}

Component Registry::pull(ComponentId const &id, Version const &version, fs::path const &dest) {
  auto idx = index();
  auto const *entry = idx.find(id, version);
  if (entry == nullptr) {
    throw Error(ErrorKind::UnknownComponent, id.str() + "@" + version.str() + " is not in the registry",
                {{"id", id.str()}, {"version", version.str()}});
  }
  auto blob = fetch_blob(id, version);

  auto parent = dest.has_parent_path() ? dest.parent_path() : fs::current_path();
  ScopedDir staging(make_temp_dir(parent, ".pull"));
  auto unpacked = staging.path() / "c";
  Component c;
  try {
    c = unpack_component(blob, unpacked);
  } catch (Error const &e) {
    throw Error(ErrorKind::DigestMismatch, "blob for " + id.str() + "@" + version.str() + " is corrupt: " + e.what(),
                {{"id", id.str()}, {"version", version.str()}});
  }
  if (c.digest != entry->digest || c.id != id || c.version != version) {
    throw Error(ErrorKind::DigestMismatch,
                "digest mismatch for " + id.str() + "@" + version.str() + ": index " + entry->digest + ", blob " +
                    c.digest,
                {{"id", id.str()}, {"version", version.str()}, {"expected", entry->digest}, {"actual", c.digest}});
  }
  std::error_code ec;
  fs::remove_all(dest, ec);
  fs::create_directories(dest.parent_path().empty() ? fs::path(".") : dest.parent_path());
  fs::rename(unpacked, dest);
  c.root = dest;
  return c;
}

LocalRegistry::LocalRegistry(fs::path root) : root_(std::move(root)) {}

RegistryIndex LocalRegistry::index() {
  auto path = root_ / "index.json";
  if (!fs::exists(path)) {
    return {};
  }
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (json::parse_error const &e) {
    throw Error(ErrorKind::StorageFailure, "corrupt registry index " + path.string() + ": " + e.what());
  }
  return RegistryIndex::from_json(j);
}

std::string LocalRegistry::fetch_blob(ComponentId const &id, Version const &version) {
  auto idx = index();
  auto const *entry = idx.find(id, version);
  if (entry == nullptr) {
    throw Error(ErrorKind::UnknownComponent, id.str() + "@" + version.str() + " is not in the registry",
                {{"id", id.str()}, {"version", version.str()}});
  }
  auto path = root_ / "blobs" / entry->digest;
  if (!fs::exists(path)) {
    throw Error(ErrorKind::StorageFailure, "missing blob " + path.string());
  }
  return read_file(path);
}

PublicationRecord LocalRegistry::commit(Component const &component, std::string const &blob) {
  fs::create_directories(root_ / "blobs");
  FileLock lock(root_ / "index.lock");
  auto idx = index();
  IndexEntry entry{component.version, component.kind, component.digest, dependencies_of(component.meta)};
  idx.add(component.id, entry); // throws DuplicateVersion before anything is written
  auto blob_path = root_ / "blobs" / component.digest;
  if (!fs::exists(blob_path)) {
    write_file_atomic(blob_path, blob);
  }
  write_file_atomic(root_ / "index.json", idx.to_json().dump(2) + "\n");
  return {component.id, component.version, component.digest, idx.digest()};
}

PublicationRecord LocalRegistry::publish(Component const &component) {
  auto recomputed = load_component(component.root);
  if (recomputed.digest != component.digest) {
    throw Error(ErrorKind::DigestMismatch, "component " + component.id.str() + " changed on disk since loading",
                {{"expected", component.digest}, {"actual", recomputed.digest}});
  }
  return commit(recomputed, pack_component(recomputed));
}

PublicationRecord LocalRegistry::publish_archive(std::string const &blob,
                                                 std::optional<std::string> const &expected_digest,
                                                 std::optional<std::pair<ComponentId, Version>> const &expected_ref) {
  fs::create_directories(root_);
  ScopedDir staging(make_temp_dir(root_, ".incoming"));
  Component c;
  try {
    c = unpack_component(blob, staging.path() / "c");
  } catch (Error const &e) {
    if (e.kind() != ErrorKind::IoError) {
      throw;
    }
    // an unreadable upload is the client's fault, not a storage failure
    throw Error(ErrorKind::InvalidArgument, std::string("uploaded blob is not a component archive: ") + e.what());
  }
  if (expected_digest && *expected_digest != c.digest) {
    throw Error(ErrorKind::DigestMismatch, "uploaded blob digest " + c.digest + " != declared " + *expected_digest,
                {{"expected", *expected_digest}, {"actual", c.digest}});
  }
  if (expected_ref && (expected_ref->first != c.id || expected_ref->second != c.version)) {
    throw Error(ErrorKind::InvalidArgument, "uploaded blob is " + c.id.str() + "@" + c.version.str() +
                                                ", not " + expected_ref->first.str() + "@" +
                                                expected_ref->second.str());
  }
  return commit(c, pack_component(c));
}

std::unique_ptr<Registry> open_registry(std::string const &location, std::string const &token) {
  if (location.starts_with("http://") || location.starts_with("https://")) {
    return std::make_unique<HttpRegistry>(location, token);
  }
  return std::make_unique<LocalRegistry>(location);
}

} // namespace reef
