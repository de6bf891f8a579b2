#include "reef/component.hpp"

#include "reef/canonical.hpp"
#include "reef/error.hpp"
#include "reef/template.hpp"

#include "schemas_embedded.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <mutex>
#include <regex>
#include <set>

namespace reef {
namespace {

using nlohmann::json;

constexpr std::array<std::pair<Kind, std::string_view>, 6> kKindNames{{
    {Kind::Detector, "detector"},
    {Kind::Package, "package"},
    {Kind::Dataset, "dataset"},
    {Kind::Model, "model"},
    {Kind::Script, "script"},
    {Kind::Solution, "solution"},
}};

void check_req(json const &value, std::string const &path, std::vector<Violation> &out) {
  if (!value.is_string()) {
    return; // reported by the schema
  }
  try {
    (void)VersionReq::parse(value.get<std::string>());
  } catch (Error const &e) {
    out.push_back({path, e.what()});
  }
}

void check_dependencies(json const &meta, std::vector<Violation> &out) {
  auto it = meta.find("dependencies");
  if (it == meta.end() || !it->is_array()) {
    return;
  }
  for (std::size_t i = 0; i < it->size(); ++i) {
    auto const &dep = (*it)[i];
    if (dep.is_object() && dep.contains("req")) {
      check_req(dep["req"], "$.dependencies[" + std::to_string(i) + "].req", out);
    }
  }
}

void check_relative(json const &obj, char const *field, std::string const &path, std::vector<Violation> &out) {
  if (obj.is_object() && obj.contains(field) && obj[field].is_string()) {
    auto const &s = obj[field].get_ref<std::string const &>();
    if (!s.empty() && !is_safe_relative(s)) {
      out.push_back({path + "." + field, "path must be relative without '..'"});
    }
  }
}

void check_detector(json const &meta, std::vector<Violation> &out) {
  if (meta.contains("version_pattern") && meta["version_pattern"].is_string()) {
    try {
      std::regex re(meta["version_pattern"].get<std::string>(), std::regex::ECMAScript);
      if (re.mark_count() != 1) {
        out.push_back({"$.version_pattern", "pattern must have exactly one capture group"});
      }
    } catch (std::regex_error const &e) {
      out.push_back({"$.version_pattern", std::string("invalid regular expression: ") + e.what()});
    }
  }
  if (meta.contains("version_command") && meta["version_command"].is_array()) {
    auto const &cmd = meta["version_command"];
    for (std::size_t i = 0; i < cmd.size(); ++i) {
      if (!cmd[i].is_string()) {
        continue;
      }
      try {
        for (auto const &key : placeholders(cmd[i].get<std::string>())) {
          if (key != "exe") {
            out.push_back({"$.version_command[" + std::to_string(i) + "]", "only ${exe} is available"});
          }
        }
      } catch (Error const &e) {
        out.push_back({"$.version_command[" + std::to_string(i) + "]", e.what()});
      }
    }
  }
}

void check_recipe(json const &meta, std::vector<Violation> &out) {
  if (auto it = meta.find("env_dependencies"); it != meta.end() && it->is_array()) {
    for (std::size_t i = 0; i < it->size(); ++i) {
      if ((*it)[i].is_object() && (*it)[i].contains("req")) {
        check_req((*it)[i]["req"], "$.env_dependencies[" + std::to_string(i) + "].req", out);
      }
    }
  }
  auto recipes = meta.find("recipes");
  if (recipes == meta.end() || !recipes->is_array()) {
    return;
  }
  for (std::size_t r = 0; r < recipes->size(); ++r) {
    auto const &variant = (*recipes)[r];
    if (!variant.is_object() || !variant.contains("steps") || !variant["steps"].is_array()) {
      continue;
    }
    auto const &steps = variant["steps"];
    for (std::size_t s = 0; s < steps.size(); ++s) {
      auto path = "$.recipes[" + std::to_string(r) + "].steps[" + std::to_string(s) + "]";
      for (char const *field : {"dest", "archive", "script", "path"}) {
        check_relative(steps[s], field, path, out);
      }
    }
  }
}

void check_solution(json const &meta, std::vector<Violation> &out) {
  std::set<std::string> declared;
  if (auto it = meta.find("dependencies"); it != meta.end() && it->is_array()) {
    for (auto const &dep : *it) {
      if (dep.is_object() && dep.contains("id") && dep["id"].is_string()) {
        declared.insert(dep["id"].get<std::string>());
      }
    }
  }
  if (auto it = meta.find("pipeline"); it != meta.end() && it->is_array()) {
    std::set<std::string> seen;
    for (std::size_t i = 0; i < it->size(); ++i) {
      auto const &stage = (*it)[i];
      if (!stage.is_object() || !stage.contains("kind") || !stage["kind"].is_string()) {
        continue;
      }
      auto path = "$.pipeline[" + std::to_string(i) + "]";
      auto kind = stage["kind"].get<std::string>();
      if (kind != "install-deps" && !seen.insert(kind).second) {
        out.push_back({path + ".kind", "stage kind '" + kind + "' appears more than once"});
      }
      bool needs_target = kind != "prepare-env" && kind != "install-deps";
      if (stage.contains("target") && stage["target"].is_string()) {
        if (!declared.contains(stage["target"].get<std::string>())) {
          out.push_back({path + ".target", "target is not a declared dependency"});
        }
      } else if (needs_target) {
        out.push_back({path + ".target", "stage kind '" + kind + "' requires a target"});
      }
    }
  }
  auto run = meta.find("run");
  if (run == meta.end() || !run->is_object()) {
    return;
  }
  check_relative(*run, "output", "$.run", out);
  if (auto cmd = run->find("command"); cmd != run->end() && cmd->is_array()) {
    for (std::size_t i = 0; i < cmd->size(); ++i) {
      if (!(*cmd)[i].is_string()) {
        continue;
      }
      auto path = "$.run.command[" + std::to_string(i) + "]";
      try {
        for (auto const &key : placeholders((*cmd)[i].get<std::string>())) {
          bool ok = key == "workdir" || key.starts_with("env:") || key.starts_with("input:");
          if (key.starts_with("dep:")) {
            auto rest = key.substr(4);
            auto colon = rest.rfind(':');
            ok = colon != std::string::npos && rest.substr(colon + 1) == "root" &&
                 declared.contains(rest.substr(0, colon));
          }
          if (!ok) {
            out.push_back({path, "placeholder ${" + key + "} is not an export, dependency root or input"});
          }
        }
      } catch (Error const &e) {
        out.push_back({path, e.what()});
      }
    }
  }
}

void hash_file_frame(Sha256 &h, std::string const &path, std::string_view bytes) {
  h.update(path);
  h.update(std::string_view("\0", 1));
  h.update(std::to_string(bytes.size()));
  h.update(std::string_view("\0", 1));
  h.update(bytes);
}

[[noreturn]] void schema_error(std::string const &what, std::vector<Violation> const &violations) {
  json list = json::array();
  for (auto const &v : violations) {
    list.push_back({{"path", v.path}, {"message", v.message}});
  }
  std::string msg = what;
  for (auto const &v : violations) {
    msg += "\n  " + v.path + ": " + v.message;
  }
  throw Error(ErrorKind::SchemaViolation, msg, {{"violations", list}});
}

} // namespace

std::string_view to_string(Kind kind) noexcept {
  for (auto const &[k, name] : kKindNames) {
    if (k == kind) {
      return name;
    }
  }
  return "unknown";
}

std::optional<Kind> parse_kind(std::string_view text) noexcept {
  for (auto const &[k, name] : kKindNames) {
    if (name == text) {
      return k;
    }
  }
  return std::nullopt;
}

bool ComponentId::valid_token(std::string_view token) noexcept {
  return !token.empty() && token.size() <= 64 && std::all_of(token.begin(), token.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-';
  });
}

std::optional<ComponentId> ComponentId::try_parse(std::string_view text) {
  auto slash = text.find('/');
  if (slash == std::string_view::npos) {
    return std::nullopt;
  }
  ComponentId id{std::string(text.substr(0, slash)), std::string(text.substr(slash + 1))};
  if (!valid_token(id.ns) || !valid_token(id.name)) {
    return std::nullopt;
  }
  return id;
}

ComponentId ComponentId::parse(std::string_view text) {
  if (auto id = try_parse(text)) {
    return *id;
  }
  throw Error(ErrorKind::InvalidArgument, "invalid component id '" + std::string(text) + "' (expected ns/name)",
              {{"id", std::string(text)}});
}

json Component::descriptor() const {
  return {{"id", id.str()}, {"version", version.str()}, {"kind", std::string(to_string(kind))}, {"meta", meta}};
}

json Component::meta_document() const {
  json doc = descriptor();
  json files_json = json::array();
  for (auto const &f : files) {
    files_json.push_back(f.path);
  }
  doc["files"] = files_json;
  return doc;
}

std::string canonical_digest(std::vector<FileBlob> files, json const &meta) {
  std::sort(files.begin(), files.end(), [](FileBlob const &a, FileBlob const &b) { return a.path < b.path; });
  for (std::size_t i = 1; i < files.size(); ++i) {
    if (files[i].path == files[i - 1].path) {
      throw Error(ErrorKind::DuplicatePath, "duplicate path '" + files[i].path + "'", {{"path", files[i].path}});
    }
  }
  Sha256 h;
  h.update(canonical_json(meta));
  for (auto const &f : files) {
    hash_file_frame(h, f.path, f.bytes);
  }
  return h.finish_hex();
}

std::string canonical_digest_from_disk(fs::path const &root, std::vector<std::string> paths, json const &meta) {
  std::sort(paths.begin(), paths.end());
  if (auto dup = std::adjacent_find(paths.begin(), paths.end()); dup != paths.end()) {
    throw Error(ErrorKind::DuplicatePath, "duplicate path '" + *dup + "'", {{"path", *dup}});
  }
  Sha256 h;
  h.update(canonical_json(meta));
  for (auto const &p : paths) {
    hash_file_frame(h, p, read_file(root / p));
  }
  return h.finish_hex();
}

json const &kind_schema(Kind kind) {
  static std::once_flag once;
  static std::map<Kind, json> schemas;
  std::call_once(once, [] {
    for (auto const &[name, text] : detail::kEmbeddedSchemas) {
      schemas[*parse_kind(name)] = json::parse(text);
    }
  });
  return schemas.at(kind);
}

std::vector<Violation> validate_meta(Kind kind, json const &meta) {
  auto violations = SchemaValidator(kind_schema(kind)).validate(meta);
  if (!meta.is_object()) {
    return violations;
  }
  check_dependencies(meta, violations);
  switch (kind) {
  case Kind::Detector:
    check_detector(meta, violations);
    break;
  case Kind::Solution:
    check_solution(meta, violations);
    break;
  default:
    check_recipe(meta, violations);
    break;
  }
  return violations;
}

Component load_component(fs::path const &dir) {
  auto meta_path = dir / kMetaFileName;
  if (!fs::is_regular_file(meta_path)) {
    throw Error(ErrorKind::MissingMeta, "no " + std::string(kMetaFileName) + " in " + dir.string(),
                {{"dir", dir.string()}});
  }
  json doc;
  try {
    doc = json::parse(read_file(meta_path));
  } catch (json::parse_error const &e) {
    schema_error(meta_path.string() + " is not valid JSON: " + e.what(), {{"$", e.what()}});
  }
  if (!doc.is_object()) {
    schema_error(meta_path.string() + " must be a JSON object", {{"$", "expected object"}});
  }

  std::vector<Violation> top;
  auto need_string = [&](char const *key) -> std::string {
    if (!doc.contains(key) || !doc[key].is_string()) {
      top.push_back({std::string("$.") + key, "required string"});
      return {};
    }
    return doc[key].get<std::string>();
  };
  auto id_text = need_string("id");
  auto version_text = need_string("version");
  auto kind_text = need_string("kind");
  auto id = ComponentId::try_parse(id_text);
  if (!id_text.empty() && !id) {
    top.push_back({"$.id", "expected ns/name with [a-z0-9-]{1,64} tokens"});
  }
  auto version = Version::try_parse(version_text);
  if (!version_text.empty() && !version) {
    top.push_back({"$.version", "expected M.m.p"});
  }
  auto kind = parse_kind(kind_text);
  if (!kind_text.empty() && !kind) {
    top.push_back({"$.kind", "unknown kind"});
  }
  if (!doc.contains("meta") || !doc["meta"].is_object()) {
    top.push_back({"$.meta", "required object"});
  }
  std::vector<std::string> paths;
  if (!doc.contains("files") || !doc["files"].is_array()) {
    top.push_back({"$.files", "required array of relative paths"});
  } else {
    for (std::size_t i = 0; i < doc["files"].size(); ++i) {
      auto const &f = doc["files"][i];
      if (!f.is_string()) {
        top.push_back({"$.files[" + std::to_string(i) + "]", "expected string"});
        continue;
      }
      auto p = f.get<std::string>();
      if (!is_safe_relative(p)) {
        throw Error(ErrorKind::PathEscape, "listed path '" + p + "' leaves " + dir.string(), {{"path", p}});
      }
      paths.push_back(p);
    }
  }
  for (auto const &[key, value] : doc.items()) {
    if (key != "id" && key != "version" && key != "kind" && key != "meta" && key != "files") {
      top.push_back({"$." + key, "unknown property"});
    }
  }
  // meta problems are reported together with top-level ones
  if (kind && doc.contains("meta") && doc["meta"].is_object()) {
    for (auto v : validate_meta(*kind, doc["meta"])) {
      v.path = "$.meta" + v.path.substr(1);
      top.push_back(std::move(v));
    }
  }
  if (!top.empty()) {
    schema_error("invalid " + meta_path.string(), top);
  }

  Component c;
  c.id = *id;
  c.version = *version;
  c.kind = *kind;
  c.meta = doc["meta"];
  c.root = dir;


  for (auto const &p : paths) {
    auto full = dir / p;
    if (!fs::is_regular_file(full)) {
      throw Error(ErrorKind::IoError, "listed file '" + p + "' missing in " + dir.string(), {{"path", p}});
    }
    c.files.push_back({p, static_cast<std::uint64_t>(fs::file_size(full))});
  }
  std::sort(c.files.begin(), c.files.end(), [](FileEntry const &a, FileEntry const &b) { return a.path < b.path; });
  c.digest = canonical_digest_from_disk(dir, paths, c.descriptor());
  return c;
}

void store_component(Component const &component, fs::path const &dest) {
  fs::create_directories(dest);
  for (auto const &f : component.files) {
    auto target = dest / f.path;
    fs::create_directories(target.parent_path());
    fs::copy_file(component.root / f.path, target, fs::copy_options::overwrite_existing);
  }
  write_file_atomic(dest / kMetaFileName, component.meta_document().dump(2) + "\n");
}

} // namespace reef
