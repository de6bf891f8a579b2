#include "reef/solution.hpp"

#include "reef/canonical.hpp"
#include "reef/detector.hpp"
#include "reef/error.hpp"
#include "reef/installer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <set>

namespace reef {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<StageKind, std::string_view>, 7> kStageNames{{
    {StageKind::PrepareEnv, "prepare-env"},
    {StageKind::InstallDataset, "install-dataset"},
    {StageKind::DetectSoftware, "detect-software"},
    {StageKind::InstallFramework, "install-framework"},
    {StageKind::InstallModel, "install-model"},
    {StageKind::InstallDeps, "install-deps"},
    {StageKind::Compile, "compile"},
}};

constexpr std::array<std::pair<Comparator, std::string_view>, 4> kComparatorNames{{
    {Comparator::WithinAbs, "within-abs"},
    {Comparator::WithinRel, "within-rel"},
    {Comparator::AtLeast, "at-least"},
    {Comparator::AtMost, "at-most"},
}};

std::string scalar_text(json const &v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

std::optional<Kind> expected_target_kind(StageKind k) {
  switch (k) {
  case StageKind::InstallDataset: return Kind::Dataset;
  case StageKind::InstallFramework: return Kind::Package;
  case StageKind::InstallModel: return Kind::Model;
  case StageKind::Compile: return Kind::Script;
  case StageKind::DetectSoftware: return Kind::Detector;
  default: return std::nullopt;
  }
}

json trace_json(std::vector<StageTrace> const &trace) {
  json out = json::array();
  for (auto const &t : trace) {
    out.push_back({{"index", t.index}, {"kind", std::string(to_string(t.kind))}, {"target", t.target},
                   {"outcome", t.outcome}});
  }
  return out;
}

/// Mutable state of one init run.
class Initializer {
public:
  Initializer(SolutionManifest const &manifest, RegistryIndex const &index, Workspace const &ws, fs::path workdir,
              std::vector<Pin> pins)
      : index_(index), ws_(ws), workdir_(std::move(workdir)), pins_(std::move(pins)) {
    for (auto const &p : pins_) {
      pinned_.emplace(p.id, p);
    }
    for (auto const &s : manifest.stages) {
      if (s.target) {
        targeted_.insert(*s.target);
      }
    }
  }

  std::string run_stage(Stage const &stage, std::string &log) {
    switch (stage.kind) {
    case StageKind::PrepareEnv:
      fs::create_directories(workdir_ / "logs");
      fs::create_directories(workdir_ / "data");
      log += "workdir " + workdir_.string() + "\n";
      return "prepared";
    case StageKind::DetectSoftware:
      return detect_stage(stage, log);
    case StageKind::InstallDeps:
      return install_deps_stage(stage, log);
    default:
      return install_stage(stage, log);
    }
  }

  json env_state(std::string const &lock_digest) const {
    return {{"lockfile_digest", lock_digest}, {"roots", roots_}, {"exports", exports_}};
  }

private:
  Pin const *pin_for(ComponentId const &id) const {
    auto it = pinned_.find(id);
    return it == pinned_.end() ? nullptr : &it->second;
  }

  Component const &component(Pin const &pin) {
    auto it = loaded_.find(pin.id);
    if (it == loaded_.end()) {
      it = loaded_.emplace(pin.id, ws_.materialize(pin)).first;
    }
    return it->second;
  }

  void remember(ComponentId const &id, EnvironmentEntry const &entry) {
    roots_[id.str()] = entry.location.string();
    for (auto const &[k, v] : entry.exports) {
      exports_[k] = v;
    }
  }

  TemplateContext context() const {
    TemplateContext ctx;
    for (auto const &[id, root] : roots_) {
      ctx["dep:" + id + ":root"] = root;
    }
    for (auto const &[k, v] : exports_) {
      ctx["env:" + k] = v;
    }
    return ctx;
  }

  InstallOutcome install_one(Pin const &pin, json const &params, std::string &log) {
    auto const &c = component(pin);
    InstallRequest req{InstallRecipe::from_component(c), c.root, c.digest, params, context()};
    auto outcome = install(req, ws_.prefix, ws_.env_db, ws_.platform);
    installed_.insert(pin.id);
    remember(pin.id, outcome.entry);
    log += "install " + pin.id.str() + "@" + pin.version.str() + ": " +
           (outcome.reused ? std::string("up to date") : std::to_string(outcome.steps_executed) + " steps") + "\n";
    return outcome;
  }

  /// Installs the not-yet-installed pinned dependencies of `id` (pin order),
  /// then `id` itself.
  InstallOutcome install_with_deps(Pin const &pin, json const &params, std::string &log) {
    std::set<ComponentId> needed;
    std::function<void(ComponentId const &)> walk = [&](ComponentId const &id) {
      auto const *p = pin_for(id);
      if (p == nullptr) {
        return;
      }
      for (auto const &dep : index_.find(id, p->version)->dependencies) {
        if (dep.applies_to(ws_.platform) && needed.insert(dep.id).second) {
          walk(dep.id);
        }
      }
    };
    walk(pin.id);
    for (auto const &p : pins_) {
      if (needed.contains(p.id) && !installed_.contains(p.id) && is_installable(index_.find(p.id, p.version)->kind)) {
        install_one(p, json::object(), log);
      }
    }
    return install_one(pin, params, log);
  }

  Pin const *stage_pin(Stage const &stage) {
    auto const *pin = pin_for(*stage.target);
    if (pin == nullptr) {
      return nullptr;
    }
    if (auto want = expected_target_kind(stage.kind)) {
      auto kind = index_.find(pin->id, pin->version)->kind;
      if (kind != *want) {
        throw Error(ErrorKind::InvalidArgument,
                    std::string(to_string(stage.kind)) + " target " + pin->id.str() + " is a " +
                        std::string(to_string(kind)) + ", expected " + std::string(to_string(*want)));
      }
    }
    return pin;
  }

  std::string install_stage(Stage const &stage, std::string &log) {
    auto const *pin = stage_pin(stage);
    if (pin == nullptr) {
      log += stage.target->str() + " is not pinned for " + ws_.platform + "\n";
      return "skipped";
    }
    auto outcome = install_with_deps(*pin, stage.params, log);
    return outcome.reused ? "up-to-date" : "installed";
  }

  /// Installs pins no stage targets; targeted ones wait for their own stage.
  std::string install_deps_stage(Stage const &stage, std::string &log) {
    if (stage.target) {
      return install_stage(stage, log);
    }
    std::size_t count = 0;
    for (auto const &p : pins_) {
      if (!installed_.contains(p.id) && !targeted_.contains(p.id) &&
          is_installable(index_.find(p.id, p.version)->kind)) {
        install_one(p, stage.params, log);
        ++count;
      }
    }
    return "installed " + std::to_string(count);
  }

  std::string detect_stage(Stage const &stage, std::string &log) {
    auto const *pin = stage_pin(stage);
    if (pin == nullptr) {
      log += stage.target->str() + " is not pinned for " + ws_.platform + "\n";
      return "skipped";
    }
    auto rule = DetectorRule::from_json(component(*pin).meta);
    auto req = VersionReq::parse(stage.params.value("req", std::string("*")));
    auto dirs = ws_.detect_dirs.empty() ? default_search_dirs() : ws_.detect_dirs;
    auto found = reef::detect(rule, dirs, ws_.platform);
    for (auto const &d : found.diagnostics) {
      log += "probe " + d.candidate.string() + ": " + d.message + "\n";
    }
    for (auto const &e : found.entries) {
      register_env(e, ws_.env_db);
      log += "found " + rule.software + " " + e.version.str() + " at " + e.location.string() + "\n";
    }
    auto hit = std::find_if(found.entries.begin(), found.entries.end(),
                            [&](auto const &e) { return req.satisfies(e.version); });
    if (hit != found.entries.end()) {
      remember(pin->id, *hit);
      log += "selected " + hit->location.string() + "\n";
      return "detected";
    }

    // Fall back to a pinned installable named after the software.
    auto fallback = std::find_if(pins_.begin(), pins_.end(), [&](Pin const &p) {
      return p.id.name == rule.software && is_installable(index_.find(p.id, p.version)->kind);
    });
    if (fallback != pins_.end()) {
      log += rule.software + " not found; installing " + fallback->id.str() + "\n";
      auto params = stage.params;
      params.erase("req");
      auto outcome = install_with_deps(*fallback, params, log);
      if (req.satisfies(outcome.entry.version)) {
        remember(pin->id, outcome.entry);
        return "installed-fallback";
      }
    }
    json available = json::array();
    for (auto const &e : found.entries) {
      available.push_back(e.version.str());
    }
    throw Error(ErrorKind::MissingEnvDependency, "no " + rule.software + " satisfying '" + req.str() + "' found",
                {{"software", rule.software}, {"req", req.str()}, {"available", available}});
  }

  RegistryIndex const &index_;
  Workspace const &ws_;
  fs::path workdir_;
  std::vector<Pin> pins_;
  std::map<ComponentId, Pin> pinned_;
  std::map<ComponentId, Component> loaded_;
  std::set<ComponentId> installed_;
  std::set<ComponentId> targeted_;
  std::map<std::string, std::string> roots_;
  std::map<std::string, std::string> exports_;
};

} // namespace

std::string_view to_string(StageKind kind) noexcept {
  for (auto const &[k, name] : kStageNames) {
    if (k == kind) {
      return name;
    }
  }
  return "?";
}

std::optional<StageKind> parse_stage_kind(std::string_view text) noexcept {
  for (auto const &[k, name] : kStageNames) {
    if (name == text) {
      return k;
    }
  }
  return std::nullopt;
}

std::string_view to_string(Comparator c) noexcept {
  for (auto const &[k, name] : kComparatorNames) {
    if (k == c) {
      return name;
    }
  }
  return "?";
}

std::optional<Comparator> parse_comparator(std::string_view text) noexcept {
  for (auto const &[k, name] : kComparatorNames) {
    if (name == text) {
      return k;
    }
  }
  return std::nullopt;
}

json MetricRule::to_json() const {
  return {{"metric", metric},
          {"comparator", std::string(to_string(comparator))},
          {"reference", reference},
          {"tolerance", tolerance}};
}

MetricRule MetricRule::from_json(json const &j) {
  MetricRule r;
  r.metric = j.at("metric").get<std::string>();
  auto c = parse_comparator(j.at("comparator").get<std::string>());
  if (!c) {
    throw Error(ErrorKind::SchemaViolation, "unknown comparator " + j.at("comparator").dump());
  }
  r.comparator = *c;
  r.reference = j.at("reference").get<double>();
  r.tolerance = j.value("tolerance", 0.0);
  if (r.tolerance < 0) {
    throw Error(ErrorKind::SchemaViolation, "tolerance must be non-negative");
  }
  return r;
}

SolutionManifest SolutionManifest::from_meta(ComponentId id, Version version, json const &meta) {
  auto violations = validate_meta(Kind::Solution, meta);
  if (!violations.empty()) {
    json list = json::array();
    std::string msg = "invalid solution manifest for " + id.str();
    for (auto const &v : violations) {
      list.push_back({{"path", v.path}, {"message", v.message}});
      msg += "\n  " + v.path + ": " + v.message;
    }
    throw Error(ErrorKind::SchemaViolation, msg, {{"violations", list}});
  }
  SolutionManifest m;
  m.id = std::move(id);
  m.version = version;
  m.dependencies = dependencies_of(meta);
  for (auto const &s : meta.at("pipeline")) {
    Stage stage;
    stage.kind = *parse_stage_kind(s.at("kind").get<std::string>());
    if (s.contains("target")) {
      stage.target = ComponentId::parse(s["target"].get<std::string>());
    }
    stage.params = s.value("params", json::object());
    m.stages.push_back(std::move(stage));
  }
  m.run_command = meta.at("run").at("command").get<std::vector<std::string>>();
  m.output_file = meta.at("run").at("output").get<std::string>();
  for (auto const &r : meta.value("validation", json::array())) {
    m.validation.push_back(MetricRule::from_json(r));
  }
  if (meta.contains("reference_result")) {
    m.reference_result = ComponentId::parse(meta["reference_result"].get<std::string>());
  }
  return m;
}

SolutionManifest SolutionManifest::from_component(Component const &component) {
  if (component.kind != Kind::Solution) {
    throw Error(ErrorKind::InvalidArgument, component.id.str() + " is not a solution");
  }
  return from_meta(component.id, component.version, component.meta);
}

Component Workspace::materialize(Pin const &pin) const {
  auto dir = prefix / ".components" / pin.digest;
  if (fs::exists(dir / kMetaFileName)) {
    try {
      auto c = load_component(dir);
      if (c.digest == pin.digest) {
        return c;
      }
    } catch (Error const &) {
      // stale or damaged cache entry: pull again
    }
  }
  if (registry == nullptr) {
    throw Error(ErrorKind::InvalidArgument, "workspace has no registry");
  }
  auto c = registry->pull(pin.id, pin.version, dir);
  if (c.digest != pin.digest) {
    throw Error(ErrorKind::DigestMismatch, pin.id.str() + "@" + pin.version.str() + " does not match the lockfile",
                {{"expected", pin.digest}, {"actual", c.digest}});
  }
  return c;
}

InitResult init(SolutionManifest const &manifest, RegistryIndex const &index, Workspace const &workspace,
                fs::path const &workdir) {
  InitResult result;
  result.lockfile.solution = manifest.id;
  result.lockfile.solution_version = manifest.version;
  result.lockfile.platform = workspace.platform;
  result.lockfile.index_digest = index.digest();
  result.lockfile.pins = closure(manifest.dependencies, index, workspace.platform);

  fs::create_directories(workdir / "logs");
  Initializer state(manifest, index, workspace, workdir, result.lockfile.pins);

  for (std::size_t i = 0; i < manifest.stages.size(); ++i) {
    auto const &stage = manifest.stages[i];
    StageTrace t{i, stage.kind, stage.target ? stage.target->str() : std::string(), ""};
    std::string log = "stage " + std::to_string(i) + " " + std::string(to_string(stage.kind)) + "\n";
    try {
      t.outcome = state.run_stage(stage, log);
      result.trace.push_back(t);
      write_file_atomic(workdir / ("logs/stage-" + std::to_string(i) + ".log"), log);
    } catch (Error const &e) {
      t.outcome = "failed";
      result.trace.push_back(t);
      log += std::string("error: ") + e.what() + "\n";
      write_file_atomic(workdir / ("logs/stage-" + std::to_string(i) + ".log"), log);
      write_file_atomic(workdir / kTraceFileName, trace_json(result.trace).dump(2) + "\n");
      auto details = e.details();
      details["stage"] = i;
      details["stage_kind"] = std::string(to_string(stage.kind));
      throw Error(e.kind(),
                  "stage " + std::to_string(i) + " (" + std::string(to_string(stage.kind)) + "): " + e.what(),
                  details);
    }
  }
  write_file_atomic(workdir / kTraceFileName, trace_json(result.trace).dump(2) + "\n");

  result.lockfile_path = workdir / kLockFileName;
  auto bytes = result.lockfile.serialize();
  write_file_atomic(result.lockfile_path, bytes);
  write_file_atomic(workdir / kEnvStateFileName, state.env_state(sha256_hex(bytes)).dump(2) + "\n");
  return result;
}

RunOutput run(SolutionManifest const &manifest, Lockfile const &lockfile, json const &input, fs::path const &workdir,
              RunOptions const &options) {
  auto state_path = workdir / kEnvStateFileName;
  if (!fs::exists(state_path)) {
    throw Error(ErrorKind::PreconditionViolation, "solution not initialised in " + workdir.string());
  }
  auto state = json::parse(read_file(state_path));
  if (state.value("lockfile_digest", "") != lockfile.digest()) {
    throw Error(ErrorKind::PreconditionViolation, "workdir was initialised for a different lockfile");
  }

  TemplateContext ctx;
  std::map<std::string, std::string> child_env = options.env;
  for (auto const &[id, root] : state.at("roots").items()) {
    ctx["dep:" + id + ":root"] = root.get<std::string>();
  }
  for (auto const &[k, v] : state.at("exports").items()) {
    ctx["env:" + k] = v.get<std::string>();
    child_env.emplace(k, v.get<std::string>());
  }
  if (input.is_object()) {
    for (auto const &[k, v] : input.items()) {
      ctx["input:" + k] = scalar_text(v);
      child_env[env_var_name("REEF_INPUT_", k)] = scalar_text(v);
    }
  }
  ctx["workdir"] = fs::absolute(workdir).string();
  child_env["REEF_WORKDIR"] = ctx["workdir"];

  ProcessOptions opts;
  try {
    for (auto const &arg : manifest.run_command) {
      opts.argv.push_back(render(arg, ctx));
    }
  } catch (Error const &e) {
    throw Error(ErrorKind::RenderError, std::string("cannot render run command: ") + e.what(), e.details());
  }
  opts.cwd = workdir;
  opts.env = child_env;
  opts.sample_rss = options.sample_rss;

  auto out_path = workdir / manifest.output_file;
  std::error_code ec;
  fs::remove(out_path, ec);
  fs::create_directories(workdir / "logs");
  std::size_t k = 0;
  while (fs::exists(workdir / ("logs/run-" + std::to_string(k) + ".out"))) {
    ++k;
  }

  RunOutput out;
  out.process = run_process(opts);
  out.stdout_log = workdir / ("logs/run-" + std::to_string(k) + ".out");
  out.stderr_log = workdir / ("logs/run-" + std::to_string(k) + ".err");
  write_file_atomic(out.stdout_log, out.process.out);
  write_file_atomic(out.stderr_log, out.process.err);

  if (!out.process.ok()) {
    int status = out.process.spawn_failed ? 127 : out.process.exit_code;
    throw Error(ErrorKind::NonZeroExit,
                "run command exited with status " + std::to_string(status) + " (see " + out.stderr_log.string() + ")",
                {{"status", status}, {"signal", out.process.term_signal}, {"log", out.stderr_log.string()}});
  }
  if (!fs::exists(out_path)) {
    throw Error(ErrorKind::MalformedOutput, "run produced no " + manifest.output_file, {{"path", out_path.string()}});
  }
  try {
    out.output = json::parse(read_file(out_path));
  } catch (json::parse_error const &e) {
    throw Error(ErrorKind::MalformedOutput, manifest.output_file + " is not JSON: " + e.what(),
                {{"path", out_path.string()}});
  }
  if (!out.output.is_object()) {
    throw Error(ErrorKind::MalformedOutput, manifest.output_file + " must hold a JSON object",
                {{"path", out_path.string()}});
  }
  return out;
}

std::optional<double> lookup_metric(json const &metrics, std::string const &path) {
  json const *node = &metrics;
  std::size_t start = 0;
  while (start <= path.size()) {
    auto dot = path.find('.', start);
    auto key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) {
      return std::nullopt;
    }
    node = &(*node)[key];
    if (dot == std::string::npos) {
      break;
    }
    start = dot + 1;
  }
  if (!node->is_number()) {
    return std::nullopt;
  }
  return node->get<double>();
}

bool rule_passes(Comparator comparator, double value, double reference, double tolerance) noexcept {
  if (std::isnan(value) || std::isnan(reference)) {
    return false;
  }
  double slack = 1e-12 * std::max({1.0, std::fabs(value), std::fabs(reference)});
  double gap = std::fabs(value - reference);
  switch (comparator) {
  case Comparator::WithinAbs: return gap <= tolerance + slack;
  case Comparator::WithinRel: return gap <= tolerance * std::fabs(reference) + slack;
  case Comparator::AtLeast: return value >= reference;
  case Comparator::AtMost: return value <= reference;
  }
  return false;
}

ValidationReport validate(json const &metrics, std::vector<MetricRule> const &rules) {
  ValidationReport report;
  for (auto const &rule : rules) {
    RuleOutcome o{rule, lookup_metric(metrics, rule.metric), 0.0, false};
    if (o.value) {
      o.delta = *o.value - rule.reference;
      o.pass = rule_passes(rule.comparator, *o.value, rule.reference, rule.tolerance);
    }
    report.pass = report.pass && o.pass;
    report.rules.push_back(std::move(o));
  }
  return report;
}

json ValidationReport::to_json() const {
  json rules_json = json::array();
  for (auto const &o : rules) {
    json r = o.rule.to_json();
    r["value"] = o.value ? json(*o.value) : json(nullptr);
    r["delta"] = o.value ? json(o.delta) : json(nullptr);
    r["status"] = !o.value ? "MissingMetric" : (o.pass ? "pass" : "fail");
    rules_json.push_back(r);
  }
  return {{"pass", pass}, {"rules", rules_json}};
}

} // namespace reef
