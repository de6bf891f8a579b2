#include "reef/harness.hpp"

#include "reef/canonical.hpp"
#include "reef/error.hpp"

#include <cctype>
#include <chrono>
#include <numeric>

namespace reef {

using nlohmann::json;

LatencySummary summarize(std::span<double const> samples_ms) {
  if (samples_ms.empty()) {
    throw Error(ErrorKind::EmptySamples, "cannot summarise zero samples");
  }
  std::vector<double> sorted(samples_ms.begin(), samples_ms.end());
  std::sort(sorted.begin(), sorted.end());
  std::span<double const> view(sorted);
  LatencySummary s;
  s.min = sorted.front();
  s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
  // guard the mean against summation rounding outside [min, max]
  s.mean = std::clamp(s.mean, sorted.front(), sorted.back());
  s.median = nearest_rank(view, 50.0);
  s.p90 = nearest_rank(view, 90.0);
  s.p99 = nearest_rank(view, 99.0);
  return s;
}

json LatencySummary::to_json() const {
  return {{"min", min}, {"mean", mean}, {"median", median}, {"p90", p90}, {"p99", p99}};
}

LatencySummary LatencySummary::from_json(json const &j) {
  return {j.at("min").get<double>(), j.at("mean").get<double>(), j.at("median").get<double>(),
          j.at("p90").get<double>(), j.at("p99").get<double>()};
}

json MetricSummary::to_json() const {
  return {{"latency_ms", latency_ms.to_json()},
          {"throughput_items_per_s", throughput_items_per_s},
          {"accuracy", accuracy ? json(*accuracy) : json(nullptr)},
          {"peak_rss_bytes", peak_rss_bytes ? json(*peak_rss_bytes) : json(nullptr)}};
}

MetricSummary MetricSummary::from_json(json const &j) {
  MetricSummary m;
  m.latency_ms = LatencySummary::from_json(j.at("latency_ms"));
  m.throughput_items_per_s = j.at("throughput_items_per_s").get<double>();
  if (j.contains("accuracy") && !j["accuracy"].is_null()) {
    m.accuracy = j["accuracy"].get<double>();
  }
  if (j.contains("peak_rss_bytes") && !j["peak_rss_bytes"].is_null()) {
    m.peak_rss_bytes = j["peak_rss_bytes"].get<std::uint64_t>();
  }
  return m;
}

json ResultRecord::to_json() const {
  return {{"solution", {{"id", solution.str()}, {"version", solution_version.str()}}},
          {"lockfile_digest", lockfile_digest},
          {"platform", platform.to_json()},
          {"summary", summary.to_json()},
          {"repetitions", repetitions},
          {"timestamp", timestamp},
          {"submitter", submitter ? json(*submitter) : json(nullptr)},
          {"reference", reference}};
}

std::vector<Violation> check_record(json const &j) {
  std::vector<Violation> v;
  if (!j.is_object()) {
    return {{"$", "expected object"}};
  }
  auto need = [&](char const *key, auto pred, char const *what) {
    if (!j.contains(key) || !pred(j[key])) {
      v.push_back({std::string("$.") + key, what});
      return false;
    }
    return true;
  };
  auto is_obj = [](json const &x) { return x.is_object(); };
  auto is_str = [](json const &x) { return x.is_string(); };
  if (need("solution", is_obj, "required object")) {
    auto const &s = j["solution"];
    if (!s.contains("id") || !s["id"].is_string() || !ComponentId::try_parse(s["id"].get<std::string>())) {
      v.push_back({"$.solution.id", "expected ns/name"});
    }
    if (!s.contains("version") || !s["version"].is_string() || !Version::try_parse(s["version"].get<std::string>())) {
      v.push_back({"$.solution.version", "expected M.m.p"});
    }
  }
  if (need("lockfile_digest", is_str, "required string") && !is_hex_digest(j["lockfile_digest"].get<std::string>())) {
    v.push_back({"$.lockfile_digest", "expected 64 lowercase hex characters"});
  }
  if (need("platform", is_obj, "required object")) {
    for (char const *k : {"os", "arch"}) {
      if (!j["platform"].contains(k) || !j["platform"][k].is_string()) {
        v.push_back({std::string("$.platform.") + k, "required string"});
      }
    }
  }
  need("timestamp", is_str, "required string");
  need("repetitions", [](json const &x) { return x.is_number_unsigned() && x.get<unsigned>() >= 1; },
       "positive integer");
  if (j.contains("submitter") && !j["submitter"].is_null()) {
    auto ok = j["submitter"].is_string() && ComponentId::valid_token(j["submitter"].get<std::string>());
    if (!ok) {
      v.push_back({"$.submitter", "expected token [a-z0-9-]{1,64} or null"});
    }
  }
  if (j.contains("reference") && !j["reference"].is_boolean()) {
    v.push_back({"$.reference", "expected boolean"});
  }
  if (need("summary", is_obj, "required object")) {
    auto const &s = j["summary"];
    if (!s.contains("latency_ms") || !s["latency_ms"].is_object()) {
      v.push_back({"$.summary.latency_ms", "required object"});
    } else {
      auto const &l = s["latency_ms"];
      bool numbers = true;
      for (char const *k : {"min", "mean", "median", "p90", "p99"}) {
        if (!l.contains(k) || !l[k].is_number()) {
          v.push_back({std::string("$.summary.latency_ms.") + k, "required number"});
          numbers = false;
        }
      }
      if (numbers) {
        double mn = l["min"], med = l["median"], p90 = l["p90"], p99 = l["p99"], mean = l["mean"];
        if (!(mn <= med && med <= p90 && p90 <= p99 && mn <= mean)) {
          v.push_back({"$.summary.latency_ms", "expected min <= median <= p90 <= p99 and min <= mean"});
        }
      }
    }
    if (!s.contains("throughput_items_per_s") || !s["throughput_items_per_s"].is_number()) {
      v.push_back({"$.summary.throughput_items_per_s", "required number"});
    }
    if (s.contains("accuracy") && !s["accuracy"].is_null()) {
      if (!s["accuracy"].is_number() || s["accuracy"].get<double>() < 0 || s["accuracy"].get<double>() > 1) {
        v.push_back({"$.summary.accuracy", "expected number in [0, 1] or null"});
      }
    }
    if (s.contains("peak_rss_bytes") && !s["peak_rss_bytes"].is_null() && !s["peak_rss_bytes"].is_number_unsigned()) {
      v.push_back({"$.summary.peak_rss_bytes", "expected non-negative integer or null"});
    }
  }
  return v;
}

ResultRecord ResultRecord::from_json(json const &j) {
  auto violations = check_record(j);
  if (!violations.empty()) {
    json list = json::array();
    std::string msg = "invalid result record";
    for (auto const &v : violations) {
      list.push_back({{"path", v.path}, {"message", v.message}});
      msg += "\n  " + v.path + ": " + v.message;
    }
    throw Error(ErrorKind::SchemaViolation, msg, {{"violations", list}});
  }
  ResultRecord r;
  r.solution = ComponentId::parse(j["solution"]["id"].get<std::string>());
  r.solution_version = Version::parse(j["solution"]["version"].get<std::string>());
  r.lockfile_digest = j["lockfile_digest"].get<std::string>();
  r.platform = PlatformInfo::from_json(j["platform"]);
  r.summary = MetricSummary::from_json(j["summary"]);
  r.repetitions = j["repetitions"].get<unsigned>();
  r.timestamp = j["timestamp"].get<std::string>();
  if (j.contains("submitter") && !j["submitter"].is_null()) {
    r.submitter = j["submitter"].get<std::string>();
  }
  r.reference = j.value("reference", false);
  return r;
}

std::string ResultRecord::digest() const { return sha256_hex(canonical_json(to_json())); }

ResultRecord benchmark(SolutionManifest const &manifest, Lockfile const &lockfile, BenchmarkConfig const &config,
                       fs::path const &workdir) {
  if (config.repetitions < 1) {
    throw Error(ErrorKind::InvalidArgument, "repetitions must be at least 1");
  }
  std::vector<double> latencies;
  double items = 0;
  double seconds = 0;
  std::optional<double> accuracy;
  std::optional<std::uint64_t> peak;
  bool rss_known = true;

  unsigned total = config.warmup + config.repetitions;
  for (unsigned i = 0; i < total; ++i) {
    bool warm = i < config.warmup;
    unsigned rep = warm ? 0 : i - config.warmup + 1;
    RunOptions opts;
    opts.sample_rss = !warm;
    opts.env = {{"REEF_RUN_INDEX", std::to_string(i)},
                {"REEF_REPETITION", std::to_string(rep)},
                {"REEF_PHASE", warm ? "warmup" : "measure"}};
    RunOutput out;
    try {
      out = run(manifest, lockfile, config.input, workdir, opts);
    } catch (Error const &e) {
      auto details = e.details();
      details["phase"] = warm ? "warmup" : "measure";
      details["repetition"] = warm ? i + 1 : rep;
      details["cause"] = std::string(to_string(e.kind()));
      throw Error(ErrorKind::BenchmarkFailed,
                  std::string(warm ? "warmup run " + std::to_string(i + 1) : "repetition " + std::to_string(rep)) +
                      " failed: " + e.what(),
                  details);
    }
    if (warm) {
      continue;
    }
    auto wall_s = std::chrono::duration<double>(out.process.wall).count();
    latencies.push_back(wall_s * 1000.0);
    seconds += wall_s;
    auto const &o = out.output;
    items += o.contains("items_processed") && o["items_processed"].is_number() ? o["items_processed"].get<double>()
                                                                                : 1.0;
    if (auto acc = lookup_metric(o.value("metrics", json::object()), "accuracy")) {
      accuracy = *acc;
    }
    if (out.process.peak_rss_bytes && *out.process.peak_rss_bytes > 0) {
      peak = std::max(peak.value_or(0), *out.process.peak_rss_bytes);
    } else {
      rss_known = false;
    }
  }

  ResultRecord r;
  r.solution = manifest.id;
  r.solution_version = manifest.version;
  r.lockfile_digest = lockfile.digest();
  r.platform = host_platform();
  r.summary.latency_ms = summarize(latencies);
  r.summary.throughput_items_per_s = seconds > 0 ? items / seconds : 0.0;
  r.summary.accuracy = accuracy;
  r.summary.peak_rss_bytes = rss_known ? peak : std::nullopt;
  r.repetitions = config.repetitions;
  r.timestamp = utc_timestamp();
  r.submitter = config.submitter;
  return r;
}

fs::path write_result(ResultRecord const &record, fs::path const &dir) {
  std::string stamp;
  for (char c : record.timestamp) {
    if (std::isdigit(static_cast<unsigned char>(c)) || c == 'T' || c == 'Z') {
      stamp += c;
    }
  }
  auto path = dir / ("result-" + stamp + "-" + record.digest().substr(0, 12) + ".json");
  write_file_atomic(path, canonical_json(record.to_json()) + "\n");
  return path;
}

} // namespace reef
