#include "reef/installer.hpp"

#include "reef/archive.hpp"
#include "reef/canonical.hpp"
#include "reef/error.hpp"
#include "reef/http.hpp"
#include "reef/process.hpp"

#include <algorithm>
#include <cctype>

namespace reef {

using nlohmann::json;

namespace {

std::string scalar_text(json const &v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

fs::path sandboxed(fs::path const &root, std::string const &rel, std::size_t step) {
  if (!is_safe_relative(rel)) {
    throw Error(ErrorKind::SandboxEscape, "step " + std::to_string(step) + " path '" + rel + "' leaves the sandbox",
                {{"step", step}, {"path", rel}});
  }
  return root / rel;
}

std::string fetch_bytes(std::string const &url, std::size_t step) {
  if (url.starts_with("file://")) {
    fs::path p = url.substr(7);
    if (!fs::is_regular_file(p)) {
      throw Error(ErrorKind::StepFailed, "step " + std::to_string(step) + ": no such file " + p.string(),
                  {{"step", step}, {"url", url}});
    }
    return read_file(p);
  }
  if (url.starts_with("http://") || url.starts_with("https://")) {
    return http_get(url);
  }
  throw Error(ErrorKind::StepFailed, "step " + std::to_string(step) + ": unsupported URL scheme in " + url,
              {{"step", step}, {"url", url}});
}

} // namespace

std::string_view InstallStep::verb_name() const noexcept {
  switch (verb) {
  case Verb::Fetch: return "fetch";
  case Verb::Extract: return "extract";
  case Verb::RunScript: return "run-script";
  case Verb::WriteFile: return "write-file";
  }
  return "?";
}

InstallStep InstallStep::from_json(json const &j) {
  InstallStep s;
  auto verb = j.at("verb").get<std::string>();
  if (verb == "fetch") {
    s.verb = Verb::Fetch;
    s.url = j.at("url").get<std::string>();
    s.sha256 = j.at("sha256").get<std::string>();
    s.dest = j.value("dest", "");
  } else if (verb == "extract") {
    s.verb = Verb::Extract;
    s.archive = j.at("archive").get<std::string>();
    s.format = j.at("format").get<std::string>();
    s.dest = j.value("dest", "");
  } else if (verb == "run-script") {
    s.verb = Verb::RunScript;
    s.script = j.at("script").get<std::string>();
    s.args = j.value("args", std::vector<std::string>{});
  } else if (verb == "write-file") {
    s.verb = Verb::WriteFile;
    s.path = j.at("path").get<std::string>();
    s.contents = j.at("contents").get<std::string>();
  } else {
    throw Error(ErrorKind::SchemaViolation, "unknown step verb '" + verb + "'");
  }
  return s;
}

InstallRecipe InstallRecipe::from_meta(ComponentId id, Version version, json const &meta) {
  InstallRecipe r;
  r.package = std::move(id);
  r.version = version;
  try {
    for (auto const &v : meta.at("recipes")) {
      RecipeVariant variant;
      variant.platforms = v.at("platforms").get<std::vector<std::string>>();
      for (auto const &s : v.at("steps")) {
        variant.steps.push_back(InstallStep::from_json(s));
      }
      if (variant.steps.empty()) {
        throw Error(ErrorKind::SchemaViolation, "recipe variant without steps in " + r.package.str());
      }
      r.variants.push_back(std::move(variant));
    }
    for (auto const &d : meta.value("env_dependencies", json::array())) {
      r.env_dependencies.push_back({d.at("software").get<std::string>(), VersionReq::parse(d.at("req").get<std::string>())});
    }
    for (auto const &e : meta.value("exports", json::array())) {
      r.exports.push_back({e.at("name").get<std::string>(), e.at("value").get<std::string>()});
    }
  } catch (json::exception const &e) {
    throw Error(ErrorKind::SchemaViolation, "malformed recipe in " + r.package.str() + ": " + e.what());
  }
  if (r.variants.empty()) {
    throw Error(ErrorKind::SchemaViolation, "recipe of " + r.package.str() + " has no variants");
  }
  return r;
}

InstallRecipe InstallRecipe::from_component(Component const &component) {
  if (!is_installable(component.kind)) {
    throw Error(ErrorKind::InvalidArgument,
                component.id.str() + " is a " + std::string(to_string(component.kind)) + ", not installable");
  }
  return from_meta(component.id, component.version, component.meta);
}

std::vector<InstallStep> const &plan_install(InstallRecipe const &recipe, std::string const &platform) {
  for (auto const &v : recipe.variants) {
    if (std::find(v.platforms.begin(), v.platforms.end(), platform) != v.platforms.end() ||
        std::find(v.platforms.begin(), v.platforms.end(), "*") != v.platforms.end()) {
      return v.steps;
    }
  }
  throw Error(ErrorKind::NoVariantForPlatform, recipe.package.str() + " has no recipe for " + platform,
              {{"id", recipe.package.str()}, {"platform", platform}});
}

fs::path install_dir(fs::path const &prefix, ComponentId const &id, Version const &version) {
  return prefix / id.ns / id.name / version.str();
}

std::string stamp_digest(InstallRequest const &request, std::string const &platform) {
  return sha256_hex(request.source_digest + '\0' + canonical_json(request.params) + '\0' + platform);
}

InstallOutcome install(InstallRequest const &request, fs::path const &prefix, fs::path const &env_db,
                       std::string const &platform) {
  auto const &recipe = request.recipe;
  auto const &steps = plan_install(recipe, platform);
  auto final_dir = install_dir(prefix, recipe.package, recipe.version);
  auto label = recipe.package.ns + "." + recipe.package.name + "." + recipe.version.str();

  // Environment dependencies must all resolve before anything runs.
  auto known = list_envs(env_db);
  TemplateContext ctx = request.extra_context;
  std::map<std::string, std::string> child_env;
  for (auto const &dep : recipe.env_dependencies) {
    auto candidates = entries_for(known, dep.software);
    EnvironmentEntry const *chosen = nullptr;
    try {
      chosen = &select_env(candidates, dep.req);
    } catch (Error const &) {
      json available = json::array();
      for (auto const &c : candidates) {
        available.push_back(c.version.str());
      }
      throw Error(ErrorKind::MissingEnvDependency,
                  recipe.package.str() + " needs " + dep.software + " '" + dep.req.str() + "'",
                  {{"software", dep.software}, {"req", dep.req.str()}, {"available", available}});
    }
    for (auto const &[name, value] : chosen->exports) {
      ctx["env:" + name] = value;
      child_env[name] = value;
    }
    ctx["dep:" + dep.software + ":root"] = chosen->location.string();
  }
  ctx["prefix"] = final_dir.string();
  ctx["src"] = fs::absolute(request.source_dir).string();
  ctx["name"] = recipe.package.name;
  ctx["version"] = recipe.version.str();
  ctx["platform"] = platform;
  for (auto const &[key, value] : request.params.items()) {
    ctx["param:" + key] = scalar_text(value);
    child_env[env_var_name("REEF_PARAM_", key)] = scalar_text(value);
  }

  auto digest = stamp_digest(request, platform);
  FileLock lock(prefix / ".locks" / (label + ".lock"));

  auto make_entry = [&](std::string const &installed_at) {
    EnvironmentEntry e;
    e.software = recipe.package.name;
    e.version = recipe.version;
    e.location = final_dir;
    e.platform = platform;
    e.detected_at = installed_at;
    e.source = EnvSource::Installed;
    e.exports = render_exports(recipe.exports, ctx);
    return e;
  };

  auto stamp_path = final_dir / kStampFileName;
  if (fs::exists(stamp_path)) {
    try {
      auto stamp = json::parse(read_file(stamp_path));
      if (stamp.at("digest").get<std::string>() == digest) {
        InstallOutcome out{make_entry(stamp.at("installed_at").get<std::string>()), 0, true};
        auto existing = list_envs(env_db);
        bool registered = std::any_of(existing.begin(), existing.end(),
                                      [&](auto const &e) { return e.to_json() == out.entry.to_json(); });
        if (!registered) {
          register_env(out.entry, env_db);
        }
        return out;
      }
    } catch (json::exception const &) {
      // unreadable stamp: reinstall
    }
  }

  ScopedDir scratch(make_temp_dir(prefix / ".staging", label));
  auto const &root = scratch.path();
  for (auto const &entry : fs::recursive_directory_iterator(request.source_dir)) {
    auto rel = fs::relative(entry.path(), request.source_dir);
    if (rel == kMetaFileName) {
      continue;
    }
    if (entry.is_directory()) {
      fs::create_directories(root / rel);
    } else if (entry.is_regular_file()) {
      fs::create_directories((root / rel).parent_path());
      fs::copy_file(entry.path(), root / rel, fs::copy_options::overwrite_existing);
    }
  }
  child_env["REEF_PREFIX"] = final_dir.string();
  child_env["REEF_STAGING"] = root.string();
  child_env["REEF_SRC"] = ctx["src"];
  child_env["REEF_PLATFORM"] = platform;

  std::string log;
  std::size_t executed = 0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    auto const &step = steps[i];
    log += "== step " + std::to_string(i) + " " + std::string(step.verb_name()) + "\n";
    switch (step.verb) {
    case InstallStep::Verb::Fetch: {
      auto url = render(step.url, ctx);
      auto bytes = fetch_bytes(url, i);
      auto actual = sha256_hex(bytes);
      if (actual != step.sha256) {
        throw Error(ErrorKind::FetchDigestMismatch,
                    "fetched " + url + " has digest " + actual + ", expected " + step.sha256,
                    {{"step", i}, {"url", url}, {"expected", step.sha256}, {"actual", actual}});
      }
      auto name = step.dest.empty() ? fs::path(url).filename().string() : render(step.dest, ctx);
      auto target = sandboxed(root, name, i);
      fs::create_directories(target.parent_path());
      write_file_atomic(target, bytes);
      log += url + " -> " + name + " (" + actual + ")\n";
      break;
    }
    case InstallStep::Verb::Extract: {
      auto archive = sandboxed(root, render(step.archive, ctx), i);
      auto dest = step.dest.empty() ? root : sandboxed(root, render(step.dest, ctx), i);
      auto data = read_file(archive);
      std::vector<ArchiveEntry> entries;
      try {
        entries = step.format == "zip" ? read_zip(data) : read_tar_gz(data);
      } catch (Error const &e) {
        if (e.kind() == ErrorKind::IoError) {
          throw Error(ErrorKind::StepFailed, "step " + std::to_string(i) + ": " + e.what(),
                      {{"step", i}, {"exit_status", nullptr}, {"output", e.what()}});
        }
        throw;
      }
      extract_entries(entries, dest);
      log += "extracted " + std::to_string(entries.size()) + " entries\n";
      break;
    }
    case InstallStep::Verb::RunScript: {
      auto script = sandboxed(root, render(step.script, ctx), i);
      ProcessOptions opts;
      opts.argv = {"/bin/sh", script.string()};
      for (auto const &a : step.args) {
        opts.argv.push_back(render(a, ctx));
      }
      opts.cwd = root;
      opts.env = child_env;
      auto result = run_process(opts);
      log += result.out + result.err;
      if (!result.ok()) {
        throw Error(ErrorKind::StepFailed,
                    "step " + std::to_string(i) + " (" + step.script + ") exited with status " +
                        std::to_string(result.exit_code),
                    {{"step", i}, {"exit_status", result.exit_code}, {"output", result.out + result.err}});
      }
      break;
    }
    case InstallStep::Verb::WriteFile: {
      auto target = sandboxed(root, render(step.path, ctx), i);
      write_file_atomic(target, render(step.contents, ctx));
      break;
    }
    }
    ++executed;
  }

  auto installed_at = utc_timestamp();
  write_file_atomic(root / kInstallLogName, log);
  write_file_atomic(root / kStampFileName,
                    json{{"digest", digest}, {"installed_at", installed_at}, {"package", recipe.package.str()}}.dump() +
                        "\n");
  std::error_code ec;
  fs::remove_all(final_dir, ec);
  fs::create_directories(final_dir.parent_path());
  fs::rename(root, final_dir);
  scratch.release();

  InstallOutcome out{make_entry(installed_at), executed, false};
  register_env(out.entry, env_db);
  return out;
}

} // namespace reef
