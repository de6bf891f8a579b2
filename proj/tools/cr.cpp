// cr: command-line front end for the reef toolchain.

#include "reef/config.hpp"
#include "reef/detector.hpp"
#include "reef/error.hpp"
#include "reef/harness.hpp"
#include "reef/platform.hpp"
#include "reef/registry.hpp"
#include "reef/results.hpp"
#include "reef/service.hpp"
#include "reef/solution.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <csignal>
#include <cstring>
#include <iostream>
#include <regex>

using nlohmann::json;
using namespace reef;

namespace {

enum Exit { kOk = 0, kValidation = 1, kUsage = 2, kEnvironment = 3, kTransport = 4 };

int exit_code(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::InvalidArgument:
    return kUsage;
  case ErrorKind::TransportFailure:
    return kTransport;
  case ErrorKind::MissingMeta:
  case ErrorKind::SchemaViolation:
  case ErrorKind::PathEscape:
  case ErrorKind::DuplicatePath:
  case ErrorKind::DuplicateVersion:
  case ErrorKind::DuplicateRecord:
  case ErrorKind::MissingMetric:
  case ErrorKind::EmptySamples:
    return kValidation;
  default:
    return kEnvironment;
  }
}

struct Globals {
  std::optional<std::string> config_file, registry, prefix, env_db, results, platform;
  bool json_out = false;
};

struct Context {
  GlobalConfig cfg;
  bool json_out = false;

  std::unique_ptr<Registry> registry() const { return open_registry(cfg.registry, cfg.token); }

  Workspace workspace(Registry *reg) const {
    Workspace ws;
    ws.registry = reg;
    ws.prefix = cfg.prefix;
    ws.env_db = cfg.env_db;
    ws.platform = cfg.platform_tag();
    return ws;
  }

  fs::path workdir(ComponentId const &id, Version const &v) const {
    return cfg.workdir_root() / id.ns / id.name / v.str();
  }

  void emit(json const &doc, std::string const &text) const {
    if (json_out) {
      std::cout << doc.dump(2) << std::endl;
    } else if (!text.empty()) {
      std::cout << text << std::endl;
    }
  }
};

Context make_context(Globals const &g) {
  Context c;
  c.json_out = g.json_out;
  c.cfg = load_config(g.config_file ? std::optional<fs::path>(*g.config_file) : std::nullopt);
  if (g.registry) {
    c.cfg.registry = *g.registry;
  }
  if (g.prefix) {
    c.cfg.prefix = *g.prefix;
  }
  if (g.env_db) {
    c.cfg.env_db = *g.env_db;
  }
  if (g.results) {
    c.cfg.results = *g.results;
  }
  if (g.platform) {
    if (!valid_platform_tag(*g.platform)) {
      throw Error(ErrorKind::InvalidArgument, "platform '" + *g.platform + "' is not an <os>-<arch> tag");
    }
    c.cfg.platform = *g.platform;
  }
  return c;
}

struct Ref {
  ComponentId id;
  std::optional<Version> version; // nullopt: latest
};

/// `ns/name[@version]`, or a bare name that is unique across namespaces.
Ref parse_ref(std::string const &text, RegistryIndex const &index) {
  auto at = text.find('@');
  auto name = text.substr(0, at);
  Ref r;
  if (at != std::string::npos) {
    auto v = text.substr(at + 1);
    if (v != "latest") {
      auto parsed = Version::try_parse(v);
      if (!parsed) {
        throw Error(ErrorKind::InvalidArgument, "bad version '" + v + "' in reference " + text);
      }
      r.version = *parsed;
    }
  }
  if (name.find('/') != std::string::npos) {
    auto id = ComponentId::try_parse(name);
    if (!id) {
      throw Error(ErrorKind::InvalidArgument, "bad component reference '" + text + "'");
    }
    r.id = *id;
    return r;
  }
  std::vector<ComponentId> matches;
  for (auto const &[id, _] : index.entries()) {
    if (id.name == name) {
      matches.push_back(id);
    }
  }
  if (matches.empty()) {
    throw Error(ErrorKind::UnknownComponent, "no component named '" + name + "'", {{"ref", text}});
  }
  if (matches.size() > 1) {
    std::string list;
    for (auto const &m : matches) {
      list += " " + m.str();
    }
    throw Error(ErrorKind::InvalidArgument, "'" + name + "' is ambiguous:" + list);
  }
  r.id = matches.front();
  return r;
}

Pin pin_of(Ref const &ref, RegistryIndex const &index) {
  auto version = ref.version ? *ref.version : resolve(ref.id, VersionReq::any(), index);
  auto const *entry = index.find(ref.id, version);
  if (entry == nullptr) {
    throw Error(ErrorKind::UnknownComponent, ref.id.str() + "@" + version.str() + " is not in the registry",
                {{"id", ref.id.str()}, {"version", version.str()}});
  }
  return {ref.id, version, entry->digest};
}

struct Loaded {
  SolutionManifest manifest;
  Lockfile lockfile;
  fs::path workdir;
};

/// A solution that `cr init` already prepared.
Loaded load_initialised(Context const &ctx, std::string const &text) {
  auto reg = ctx.registry();
  auto index = reg->index();
  auto ref = parse_ref(text, index);
  if (!ref.version) {
    // newest version with an initialised workdir, else the newest published
    auto versions = index.versions(ref.id);
    for (auto it = versions.rbegin(); it != versions.rend(); ++it) {
      if (fs::exists(ctx.workdir(ref.id, *it) / kLockFileName)) {
        ref.version = *it;
        break;
      }
    }
  }
  auto pin = pin_of(ref, index);
  auto workdir = ctx.workdir(pin.id, pin.version);
  auto lock_path = workdir / kLockFileName;
  if (!fs::exists(lock_path)) {
    throw Error(ErrorKind::PreconditionViolation,
                pin.id.str() + "@" + pin.version.str() + " is not initialised; run `cr init` first");
  }
  auto lockfile = Lockfile::from_json(json::parse(read_file(lock_path)));
  auto ws = ctx.workspace(reg.get());
  auto manifest = SolutionManifest::from_component(ws.materialize(pin));
  return {manifest, lockfile, workdir};
}

json read_input(std::optional<std::string> const &file) {
  if (!file) {
    return json::object();
  }
  auto j = json::parse(read_file(*file), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorKind::InvalidArgument, "input file " + *file + " must hold a JSON object");
  }
  return j;
}

int cmd_init(Context const &ctx, std::string const &ref_text) {
  auto reg = ctx.registry();
  auto index = reg->index();
  auto pin = pin_of(parse_ref(ref_text, index), index);
  if (index.find(pin.id, pin.version)->kind != Kind::Solution) {
    throw Error(ErrorKind::InvalidArgument, pin.id.str() + " is not a solution");
  }
  auto ws = ctx.workspace(reg.get());
  auto manifest = SolutionManifest::from_component(ws.materialize(pin));
  auto workdir = ctx.workdir(pin.id, pin.version);
  auto result = init(manifest, index, ws, workdir);
  json trace = json::array();
  for (auto const &t : result.trace) {
    trace.push_back({{"kind", std::string(to_string(t.kind))}, {"target", t.target}, {"outcome", t.outcome}});
  }
  ctx.emit({{"lockfile", result.lockfile_path.string()},
            {"lockfile_digest", result.lockfile.digest()},
            {"workdir", workdir.string()},
            {"pins", result.lockfile.pins.size()},
            {"trace", trace}},
           result.lockfile_path.string());
  return kOk;
}

int cmd_run(Context const &ctx, std::string const &ref, std::optional<std::string> const &input) {
  auto l = load_initialised(ctx, ref);
  auto out = run(l.manifest, l.lockfile, read_input(input), l.workdir);
  auto path = l.workdir / l.manifest.output_file;
  ctx.emit({{"output", path.string()}, {"result", out.output}}, path.string());
  return kOk;
}

int cmd_benchmark(Context const &ctx, std::string const &ref, unsigned reps, unsigned warmup,
                  std::optional<std::string> const &input, std::optional<std::string> const &submit,
                  std::optional<std::string> const &submitter) {
  if (submitter && !ComponentId::valid_token(*submitter)) {
    throw Error(ErrorKind::InvalidArgument, "submitter must be a token of [a-z0-9-]");
  }
  auto l = load_initialised(ctx, ref);
  BenchmarkConfig cfg;
  cfg.repetitions = reps;
  cfg.warmup = warmup;
  cfg.input = read_input(input);
  cfg.submitter = submitter;
  auto record = benchmark(l.manifest, l.lockfile, cfg, l.workdir);
  auto path = write_result(record, l.workdir / "results");
  auto id = ResultStore(ctx.cfg.results).ingest(record);
  json doc = {{"result", path.string()}, {"id", id}, {"record", record.to_json()}, {"submitted", nullptr}};
  if (submit) {
    doc["submitted"] = submit_result(*submit, record, ctx.cfg.token);
  }
  ctx.emit(doc, path.string());
  return kOk;
}

int cmd_validate(Context const &ctx, std::string const &ref, std::optional<std::string> const &input) {
  auto l = load_initialised(ctx, ref);
  auto out_path = l.workdir / l.manifest.output_file;
  json output;
  if (fs::exists(out_path)) {
    output = json::parse(read_file(out_path), nullptr, false);
    if (output.is_discarded() || !output.is_object()) {
      throw Error(ErrorKind::MalformedOutput, out_path.string() + " is not a JSON object");
    }
  } else {
    output = run(l.manifest, l.lockfile, read_input(input), l.workdir).output;
  }
  auto report = validate(output.value("metrics", json::object()), l.manifest.validation);
  std::string text;
  for (auto const &r : report.rules) {
    text += (r.pass ? "PASS " : r.value ? "FAIL " : "MISSING ") + r.rule.metric + " " +
            std::string(to_string(r.rule.comparator)) + " " + json(r.rule.reference).dump();
    if (r.value) {
      text += " value " + json(*r.value).dump() + " delta " + json(r.delta).dump();
    }
    text += "\n";
  }
  text += report.pass ? "validation passed" : "validation failed";
  ctx.emit(report.to_json(), text);
  return report.pass ? kOk : kValidation;
}

int cmd_publish(Context const &ctx, std::string const &dir) {
  auto component = load_component(dir);
  auto rec = ctx.registry()->publish(component);
  ctx.emit(rec.to_json(), rec.id.str() + "@" + rec.version.str() + " " + rec.digest);
  return kOk;
}

int cmd_pull(Context const &ctx, std::string const &ref, std::optional<std::string> const &dest) {
  auto reg = ctx.registry();
  auto index = reg->index();
  auto pin = pin_of(parse_ref(ref, index), index);
  fs::path target = dest ? fs::path(*dest) : fs::path(pin.id.name + "-" + pin.version.str());
  if (fs::exists(target)) {
    throw Error(ErrorKind::InvalidArgument, "destination " + target.string() + " already exists");
  }
  auto c = reg->pull(pin.id, pin.version, target);
  ctx.emit({{"id", c.id.str()}, {"version", c.version.str()}, {"digest", c.digest}, {"path", target.string()}},
           target.string());
  return kOk;
}

int cmd_search(Context const &ctx, std::string const &pattern) {
  std::regex re;
  try {
    re = std::regex(pattern, std::regex::icase);
  } catch (std::regex_error const &e) {
    throw Error(ErrorKind::InvalidArgument, "bad pattern: " + std::string(e.what()));
  }
  auto index = ctx.registry()->index();
  json list = json::array();
  std::string text;
  for (auto const &[id, entries] : index.entries()) {
    if (!std::regex_search(id.str(), re)) {
      continue;
    }
    json versions = json::array();
    std::string vs;
    for (auto const &e : entries) {
      versions.push_back(e.version.str());
      vs += " " + e.version.str();
    }
    list.push_back({{"id", id.str()}, {"kind", std::string(to_string(entries.back().kind))}, {"versions", versions}});
    text += id.str() + " (" + std::string(to_string(entries.back().kind)) + ")" + vs + "\n";
  }
  if (!text.empty()) {
    text.pop_back();
  }
  ctx.emit(list, text);
  return kOk;
}

int cmd_detect(Context const &ctx, std::string const &ref, std::vector<std::string> const &dirs) {
  auto reg = ctx.registry();
  auto index = reg->index();
  auto pin = pin_of(parse_ref(ref, index), index);
  auto c = ctx.workspace(reg.get()).materialize(pin);
  if (c.kind != Kind::Detector) {
    throw Error(ErrorKind::InvalidArgument, pin.id.str() + " is not a detector");
  }
  auto rule = DetectorRule::from_json(c.meta);
  std::vector<fs::path> search;
  if (dirs.empty()) {
    search = default_search_dirs();
  } else {
    search.assign(dirs.begin(), dirs.end());
  }
  auto result = detect(rule, search, ctx.cfg.platform_tag());
  json entries = json::array();
  std::string text;
  for (auto const &e : result.entries) {
    auto id = register_env(e, ctx.cfg.env_db);
    auto j = e.to_json();
    j["id"] = id;
    entries.push_back(j);
    text += e.software + " " + e.version.str() + " " + e.location.string() + "\n";
  }
  json diags = json::array();
  for (auto const &d : result.diagnostics) {
    diags.push_back({{"candidate", d.candidate.string()}, {"message", d.message}});
    if (!ctx.json_out) {
      std::cerr << "note: " << d.candidate.string() << ": " << d.message << "\n";
    }
  }
  if (result.entries.empty()) {
    text = "no " + rule.software + " found\n";
  }
  text.pop_back();
  ctx.emit({{"entries", entries}, {"diagnostics", diags}}, text);
  return kOk;
}

int cmd_report(Context const &ctx, std::optional<std::string> const &solution, std::vector<std::string> const &objs,
               std::optional<std::string> const &out) {
  std::vector<Objective> objectives;
  for (auto const &o : objs) {
    objectives.push_back(Objective::parse(o));
  }
  std::optional<ComponentId> filter;
  if (solution) {
    auto id = ComponentId::try_parse(solution->substr(0, solution->find('@')));
    if (!id) {
      throw Error(ErrorKind::InvalidArgument, "--solution expects ns/name");
    }
    filter = *id;
  }
  auto dir = out ? fs::path(*out) : ctx.cfg.home / "report";
  auto paths = emit_report(ctx.cfg.results, filter, objectives, dir);
  if (paths.empty && !ctx.json_out) {
    std::cerr << "warning: no records in " << ctx.cfg.results.string() << "; wrote an empty report\n";
  }
  ctx.emit({{"json", paths.json.string()}, {"html", paths.html.string()}, {"empty", paths.empty}},
           paths.json.string() + "\n" + paths.html.string());
  return kOk;
}

Service *g_service = nullptr;

void on_signal(int) {
  if (g_service != nullptr) {
    g_service->stop();
  }
}

int cmd_serve(Context const &ctx, std::string const &host, int port) {
  if (ctx.cfg.registry.starts_with("http://") || ctx.cfg.registry.starts_with("https://")) {
    throw Error(ErrorKind::InvalidArgument, "serve needs a local registry path");
  }
  Service service({ctx.cfg.registry, ctx.cfg.results, ctx.cfg.token});
  auto bound = service.bind(host, port);
  auto url = "http://" + host + ":" + std::to_string(bound);
  ctx.emit({{"url", url}, {"port", bound}}, "serving on " + url);
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  service.serve();
  g_service = nullptr;
  return kOk;
}

void report_error(bool json_out, std::string const &kind, std::string const &message, json const &details) {
  if (json_out) {
    std::cerr << json{{"error", kind}, {"message", message}, {"details", details}}.dump() << std::endl;
  } else {
    std::cerr << "error: " << message << " [" << kind << "]" << std::endl;
  }
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"cr - portable benchmark workflows: components, solutions and results"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config_file, "Config file (default ./reef.toml when present)");
  app.add_option("--registry", g.registry, "Registry path or http(s) URL");
  app.add_option("--prefix", g.prefix, "Managed install prefix");
  app.add_option("--env-db", g.env_db, "Environment database (JSON lines)");
  app.add_option("--results", g.results, "Result store (JSON lines)");
  app.add_option("--platform", g.platform, "Platform tag override, <os>-<arch>");
  app.add_flag("--json", g.json_out, "Machine-readable output");

  std::string ref;
  std::optional<std::string> input, submit, submitter, dest, solution, out;
  unsigned reps = 10, warmup = 1;
  std::vector<std::string> dirs, objectives;
  std::string dir, pattern, host = "127.0.0.1";
  int port = 8080;

  auto *init_cmd = app.add_subcommand("init", "Pull a solution, pin its dependencies and run its stages");
  init_cmd->add_option("solution", ref, "ns/name[@version]")->required();

  auto *run_cmd = app.add_subcommand("run", "Run an initialised solution once");
  run_cmd->add_option("solution", ref)->required();
  run_cmd->add_option("--input", input, "JSON object file passed as ${input:key}");

  auto *bench_cmd = app.add_subcommand("benchmark", "Measure repeated runs and store a result record");
  bench_cmd->add_option("solution", ref)->required();
  bench_cmd->add_option("--repetitions,-n", reps)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--warmup", warmup)->check(CLI::NonNegativeNumber);
  bench_cmd->add_option("--input", input);
  bench_cmd->add_option("--submit", submit, "Results service URL");
  bench_cmd->add_option("--submitter", submitter, "Submitter token");

  auto *validate_cmd = app.add_subcommand("validate", "Check the last run output against the solution's rules");
  validate_cmd->add_option("solution", ref)->required();
  validate_cmd->add_option("--input", input);

  auto *publish_cmd = app.add_subcommand("publish", "Publish a component directory");
  publish_cmd->add_option("dir", dir)->required();

  auto *pull_cmd = app.add_subcommand("pull", "Download and verify a component");
  pull_cmd->add_option("ref", ref)->required();
  pull_cmd->add_option("--dest", dest);

  auto *search_cmd = app.add_subcommand("search", "List components whose id matches a regex");
  search_cmd->add_option("pattern", pattern)->required();

  auto *detect_cmd = app.add_subcommand("detect", "Probe the host with a detector and register what it finds");
  detect_cmd->add_option("detector", ref)->required();
  detect_cmd->add_option("--dir", dirs, "Search directory (repeatable; default PATH)");

  auto *report_cmd = app.add_subcommand("report", "Write report.json and report.html from the result store");
  report_cmd->add_option("--solution", solution);
  report_cmd->add_option("--objective", objectives, "PATH:min|max (repeatable)");
  report_cmd->add_option("--out", out, "Output directory (default <home>/report)");

  auto *serve_cmd = app.add_subcommand("serve", "Serve the registry and result store over HTTP");
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port, "0 picks a free port");

  bool json_requested = false;
  for (int i = 1; i < argc; ++i) {
    json_requested = json_requested || std::strcmp(argv[i], "--json") == 0;
  }

  try {
    app.parse(argc, argv);
  } catch (CLI::CallForHelp const &e) {
    return app.exit(e);
  } catch (CLI::CallForAllHelp const &e) {
    return app.exit(e);
  } catch (CLI::ParseError const &e) {
    report_error(json_requested, "UsageError", e.what(), json::object());
    if (!json_requested) {
      std::cerr << "run `cr --help` for usage" << std::endl;
    }
    return kUsage;
  }

  try {
    auto ctx = make_context(g);
    if (*init_cmd) {
      return cmd_init(ctx, ref);
    }
    if (*run_cmd) {
      return cmd_run(ctx, ref, input);
    }
    if (*bench_cmd) {
      return cmd_benchmark(ctx, ref, reps, warmup, input, submit, submitter);
    }
    if (*validate_cmd) {
      return cmd_validate(ctx, ref, input);
    }
    if (*publish_cmd) {
      return cmd_publish(ctx, dir);
    }
    if (*pull_cmd) {
      return cmd_pull(ctx, ref, dest);
    }
    if (*search_cmd) {
      return cmd_search(ctx, pattern);
    }
    if (*detect_cmd) {
      return cmd_detect(ctx, ref, dirs);
    }
    if (*report_cmd) {
      return cmd_report(ctx, solution, objectives, out);
    }
    if (*serve_cmd) {
      return cmd_serve(ctx, host, port);
    }
  } catch (Error const &e) {
    report_error(g.json_out, std::string(to_string(e.kind())), e.what(), e.details());
    return exit_code(e.kind());
  } catch (json::exception const &e) {
    report_error(g.json_out, "MalformedJson", e.what(), json::object());
    return kEnvironment;
  } catch (fs::filesystem_error const &e) {
    report_error(g.json_out, "IoError", e.what(), json::object());
    return kEnvironment;
  }
  return kUsage;
}
