#include "reef/results.hpp"

#include "reef/canonical.hpp"
#include "reef/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace reef {

using nlohmann::json;

std::string Objective::str() const { return path + (direction == Direction::Minimize ? ":min" : ":max"); }

Objective Objective::parse(std::string_view text) {
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw Error(ErrorKind::InvalidArgument, "objective must look like PATH:min or PATH:max, got '" +
                                                std::string(text) + "'");
  }
  auto dir = text.substr(colon + 1);
  Objective o;
  o.path = std::string(text.substr(0, colon));
  if (dir == "min") {
    o.direction = Direction::Minimize;
  } else if (dir == "max") {
    o.direction = Direction::Maximize;
  } else {
    throw Error(ErrorKind::InvalidArgument, "objective direction must be min or max, got '" + std::string(dir) + "'");
  }
  return o;
}

std::optional<double> objective_value(ResultRecord const &record, std::string const &path) {
  return lookup_metric(record.summary.to_json(), path);
}

FrontResult pareto_front(std::vector<ResultRecord> const &records, std::vector<Objective> const &objectives) {
  if (objectives.empty()) {
    throw Error(ErrorKind::InvalidArgument, "pareto_front needs at least one objective");
  }
  FrontResult result;
  std::vector<std::vector<double>> points;
  std::vector<std::size_t> source;
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::vector<double> p;
    for (auto const &o : objectives) {
      auto v = objective_value(records[i], o.path);
      if (!v) {
        result.excluded.push_back({records[i].id(), o.path});
        break;
      }
      p.push_back(o.direction == Direction::Maximize ? *v : -*v);
    }
    if (p.size() == objectives.size()) {
      points.push_back(std::move(p));
      source.push_back(i);
    }
  }
  for (auto k : non_dominated(points)) {
    result.front.push_back(records[source[k]]);
  }
  return result;
}

std::string_view to_string(MetricStatus status) noexcept {
  switch (status) {
  case MetricStatus::Match:
    return "match";
  case MetricStatus::Mismatch:
    return "mismatch";
  case MetricStatus::Missing:
    return "missing";
  }
  return "missing";
}

json ComparisonReport::to_json() const {
  json list = json::array();
  for (auto const &m : metrics) {
    list.push_back({{"metric", m.metric},
                    {"local", m.local ? json(*m.local) : json(nullptr)},
                    {"reference", m.reference},
                    {"delta", m.local ? json(m.delta) : json(nullptr)},
                    {"status", std::string(to_string(m.status))}});
  }
  return {{"metrics", list}, {"overall", overall}};
}

ComparisonReport compare(ResultRecord const &record, std::map<std::string, double> const &reference,
                         std::vector<MetricRule> const &rules) {
  auto rewritten = rules;
  for (auto &r : rewritten) {
    if (auto it = reference.find(r.metric); it != reference.end()) {
      r.reference = it->second;
    }
  }
  auto v = validate(record.summary.to_json(), rewritten);
  ComparisonReport report;
  for (auto const &o : v.rules) {
    MetricComparison m;
    m.metric = o.rule.metric;
    m.local = o.value;
    m.reference = o.rule.reference;
    m.delta = o.delta;
    m.status = !o.value ? MetricStatus::Missing : o.pass ? MetricStatus::Match : MetricStatus::Mismatch;
    report.overall = report.overall && m.status == MetricStatus::Match;
    report.metrics.push_back(m);
  }
  return report;
}

namespace {

std::string identity_key(json const &j) {
  auto sub = j.contains("submitter") && !j["submitter"].is_null() ? j["submitter"].get<std::string>() : "";
  return j["lockfile_digest"].get<std::string>() + '\0' + j["timestamp"].get<std::string>() + '\0' + sub;
}

std::vector<json> read_lines(fs::path const &path) {
  std::vector<json> out;
  if (!fs::exists(path)) {
    return out;
  }
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      // a torn final line from a crashed writer is ignored
      continue;
    }
    out.push_back(std::move(j));
  }
  return out;
}

fs::path lock_path(fs::path const &store) { return fs::path(store.string() + ".lock"); }

} // namespace

std::string ResultStore::ingest(json const &j) {
  auto record = ResultRecord::from_json(j);
  auto normal = record.to_json();
  if (!path_.parent_path().empty()) {
    fs::create_directories(path_.parent_path());
  }
  FileLock lock(lock_path(path_));
  auto key = identity_key(normal);
  for (auto const &existing : read_lines(path_)) {
    if (existing.contains("lockfile_digest") && existing.contains("timestamp") && identity_key(existing) == key) {
      throw Error(ErrorKind::DuplicateRecord, "a record with this lockfile digest, timestamp and submitter exists",
                  {{"id", record.id()}});
    }
  }
  append_file(path_, canonical_json(normal) + "\n");
  return record.id();
}

std::vector<ResultRecord> ResultStore::load() const {
  std::vector<ResultRecord> out;
  for (auto const &j : read_lines(path_)) {
    out.push_back(ResultRecord::from_json(j));
  }
  return out;
}

namespace {

std::string html_escape(std::string const &s) {
  std::string out;
  for (char c : s) {
    switch (c) {
    case '&':
      out += "&amp;";
      break;
    case '<':
      out += "&lt;";
      break;
    case '>':
      out += "&gt;";
      break;
    case '"':
      out += "&quot;";
      break;
    default:
      out += c;
    }
  }
  return out;
}

std::string fmt(std::optional<double> v) {
  if (!v) {
    return "-";
  }
  std::ostringstream os;
  os.precision(6);
  os << *v;
  return os.str();
}

std::string render_html(json const &report, std::vector<ResultRecord> const &records, std::vector<bool> const &flags,
                        std::vector<Objective> const &objectives) {
  std::ostringstream h;
  h << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>reef results</title>\n"
    << "<style>body{font-family:sans-serif;margin:2em}table{border-collapse:collapse}"
    << "td,th{border:1px solid #ccc;padding:4px 8px;text-align:right}tr.front{background:#e8f5e9}"
    << "circle.front{fill:#2e7d32}circle.other{fill:#9e9e9e}</style></head><body>\n";
  h << "<h1>Results</h1>\n<p>" << records.size() << " record(s). Latency statistic: median. Objectives:";
  for (auto const &o : objectives) {
    h << " <code>" << html_escape(o.str()) << "</code>";
  }
  h << "</p>\n";

  // scatter of the first two objectives (second axis collapses to 0 with one objective)
  constexpr double W = 560, H = 360, M = 50;
  std::vector<std::pair<double, double>> pts;
  std::vector<std::size_t> which;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto x = objective_value(records[i], objectives[0].path);
    auto y = objectives.size() > 1 ? objective_value(records[i], objectives[1].path) : std::optional<double>(0.0);
    if (x && y) {
      pts.emplace_back(*x, *y);
      which.push_back(i);
    }
  }
  h << "<svg width=\"" << W << "\" height=\"" << H << "\">\n";
  h << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\" stroke=\"#ccc\"/>\n";
  h << "<text x=\"" << W / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">" << html_escape(objectives[0].str())
    << "</text>\n";
  if (objectives.size() > 1) {
    h << "<text x=\"14\" y=\"" << H / 2 << "\" transform=\"rotate(-90 14 " << H / 2 << ")\" text-anchor=\"middle\">"
      << html_escape(objectives[1].str()) << "</text>\n";
  }
  if (!pts.empty()) {
    auto [xmin, xmax] = std::minmax_element(pts.begin(), pts.end(), [](auto &a, auto &b) { return a.first < b.first; });
    auto [ymin, ymax] =
        std::minmax_element(pts.begin(), pts.end(), [](auto &a, auto &b) { return a.second < b.second; });
    double x0 = xmin->first, x1 = xmax->first, y0 = ymin->second, y1 = ymax->second;
    auto sx = [&](double x) { return x1 > x0 ? M + (x - x0) / (x1 - x0) * (W - 2 * M) : W / 2; };
    auto sy = [&](double y) { return y1 > y0 ? H - M - (y - y0) / (y1 - y0) * (H - 2 * M) : H / 2; };
    for (std::size_t k = 0; k < pts.size(); ++k) {
      auto i = which[k];
      h << "<circle class=\"" << (flags[i] ? "front" : "other") << "\" cx=\"" << sx(pts[k].first) << "\" cy=\""
        << sy(pts[k].second) << "\" r=\"6\"><title>" << html_escape(records[i].id()) << "</title></circle>\n";
    }
  }
  h << "</svg>\n";

  h << "<table>\n<tr><th>id</th><th>solution</th><th>platform</th><th>submitter</th><th>median ms</th>"
    << "<th>p90 ms</th><th>p99 ms</th><th>items/s</th><th>accuracy</th><th>peak RSS</th><th>frontier</th></tr>\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto const &r = records[i];
    auto const &l = r.summary.latency_ms;
    h << "<tr" << (flags[i] ? " class=\"front\"" : "") << "><td>" << r.id() << "</td><td>"
      << html_escape(r.solution.str() + "@" + r.solution_version.str()) << "</td><td>" << html_escape(r.platform.tag())
      << "</td><td>" << html_escape(r.submitter.value_or(r.reference ? "reference" : "-")) << "</td><td>"
      << fmt(l.median) << "</td><td>" << fmt(l.p90) << "</td><td>" << fmt(l.p99) << "</td><td>"
      << fmt(r.summary.throughput_items_per_s) << "</td><td>" << fmt(r.summary.accuracy) << "</td><td>"
      << (r.summary.peak_rss_bytes ? std::to_string(*r.summary.peak_rss_bytes) : "-") << "</td><td>"
      << (flags[i] ? "yes" : "no") << "</td></tr>\n";
  }
  h << "</table>\n<script type=\"application/json\" id=\"report-data\">"
    // "</" cannot appear inside a script element
    << [&] {
         auto s = report.dump();
         std::string out;
         for (std::size_t i = 0; i < s.size(); ++i) {
           out += s[i];
           if (s[i] == '<' ) {
             out.back() = '\\';
             out += "u003c";
           }
         }
         return out;
       }()
    << "</script>\n</body></html>\n";
  return h.str();
}

} // namespace

ReportPaths emit_report(fs::path const &store, std::optional<ComponentId> const &solution,
                        std::vector<Objective> const &objectives_in, fs::path const &out_dir) {
  auto objectives = objectives_in;
  if (objectives.empty()) {
    objectives = {Objective{"latency_ms.median", Direction::Minimize}, Objective{"accuracy", Direction::Maximize}};
  }
  std::vector<ResultRecord> records;
  for (auto &r : ResultStore(store).load()) {
    if (!solution || r.solution == *solution) {
      records.push_back(std::move(r));
    }
  }

  auto front = pareto_front(records, objectives);
  std::set<std::string> front_ids;
  for (auto const &r : front.front) {
    front_ids.insert(r.digest());
  }
  std::vector<bool> flags;
  for (auto const &r : records) {
    flags.push_back(front_ids.contains(r.digest()));
  }

  // latest reference record per solution id
  std::map<std::string, ResultRecord const *> refs;
  for (auto const &r : records) {
    if (r.reference) {
      auto &slot = refs[r.solution.str()];
      if (!slot || slot->timestamp <= r.timestamp) {
        slot = &r;
      }
    }
  }
  static const std::vector<std::string> kCompared{"latency_ms.median", "throughput_items_per_s", "accuracy"};

  json list = json::array();
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto const &r = records[i];
    json entry = r.to_json();
    entry["id"] = r.id();
    entry["on_frontier"] = static_cast<bool>(flags[i]);
    json cmp = nullptr;
    if (auto it = refs.find(r.solution.str()); it != refs.end() && !r.reference) {
      json metrics = json::array();
      for (auto const &m : kCompared) {
        auto local = objective_value(r, m);
        auto ref = objective_value(*it->second, m);
        metrics.push_back({{"metric", m},
                           {"local", local ? json(*local) : json(nullptr)},
                           {"reference", ref ? json(*ref) : json(nullptr)},
                           {"delta", local && ref ? json(*local - *ref) : json(nullptr)}});
      }
      cmp = {{"reference_id", it->second->id()}, {"metrics", metrics}};
    }
    entry["comparison"] = cmp;
    list.push_back(std::move(entry));
  }
  json excluded = json::array();
  for (auto const &e : front.excluded) {
    excluded.push_back({{"id", e.record_id}, {"missing", e.path}});
  }
  json objs = json::array();
  for (auto const &o : objectives) {
    objs.push_back(o.str());
  }
  json report = {{"format", 1},
                 {"solution", solution ? json(solution->str()) : json(nullptr)},
                 {"objectives", objs},
                 {"metadata", {{"latency_statistic", "median"}, {"percentile_method", "nearest-rank"}}},
                 {"records", list},
                 {"excluded", excluded},
                 {"empty", records.empty()}};

  fs::create_directories(out_dir);
  ReportPaths paths{out_dir / "report.json", out_dir / "report.html", records.empty()};
  write_file_atomic(paths.json, report.dump(2) + "\n");
  write_file_atomic(paths.html, render_html(report, records, flags, objectives));
  return paths;
}

} // namespace reef
