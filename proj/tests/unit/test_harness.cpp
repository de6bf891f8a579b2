#include "oracles.hpp"

#include "reef/harness.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace reef;
using namespace reef::test;
using nlohmann::json;

namespace {

struct Bench {
  TempDir tmp;
  LocalRegistry registry{tmp / "registry"};
  Workspace ws;
  SolutionManifest manifest;
  Lockfile lockfile;
  fs::path workdir = tmp / "work";

  Bench() {
    ws.registry = &registry;
    ws.prefix = tmp / "prefix";
    ws.env_db = tmp / "envs.jsonl";
    ws.platform = kPlatform;
    ws.detect_dirs = {tmp / "none"};
    publish_demo(registry);
    manifest = SolutionManifest::from_component(load_component(components_dir() / "mlperf/demo-mock-detection/1.0.0"));
    lockfile = init(manifest, registry.index(), ws, workdir).lockfile;
  }
};

ResultRecord sample_record() {
  ResultRecord r;
  r.solution = ComponentId::parse("mlperf/demo");
  r.solution_version = Version::parse("1.0.0");
  r.lockfile_digest = std::string(64, 'a');
  r.platform = {"linux", "x86_64", "cpu"};
  r.summary.latency_ms = {1, 2, 2, 3, 4};
  r.summary.throughput_items_per_s = 10;
  r.summary.accuracy = 0.5;
  r.repetitions = 3;
  r.timestamp = "2026-01-02T03:04:05.678Z";
  return r;
}

} // namespace

TEST(Summarize, MatchesNearestRankOracle) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> size(1, 60), pick(0, 3);
  std::uniform_real_distribution<double> val(0.1, 500);
  for (int round = 0; round < 1000; ++round) {
    std::vector<double> s(size(rng));
    for (auto &x : s) {
      // mix of distinct and heavily repeated values
      x = pick(rng) == 0 ? std::round(val(rng) / 100) : val(rng);
    }
    auto sum = summarize(s);
    EXPECT_EQ(sum.median, percentile_oracle(s, 50));
    EXPECT_EQ(sum.p90, percentile_oracle(s, 90));
    EXPECT_EQ(sum.p99, percentile_oracle(s, 99));
    EXPECT_EQ(sum.min, *std::min_element(s.begin(), s.end()));
    long double total = 0;
    for (double x : s) {
      total += x;
    }
    EXPECT_NEAR(sum.mean, static_cast<double>(total / s.size()), 1e-9 * std::max(1.0, sum.mean));

    // reported values are samples and respect the order invariant
    for (double v : {sum.median, sum.p90, sum.p99}) {
      EXPECT_NE(std::find(s.begin(), s.end(), v), s.end());
    }
    EXPECT_LE(sum.min, sum.median);
    EXPECT_LE(sum.median, sum.p90);
    EXPECT_LE(sum.p90, sum.p99);
    EXPECT_LE(sum.min, sum.mean);
    EXPECT_LE(sum.mean, *std::max_element(s.begin(), s.end()));

    // input order does not matter
    auto shuffled = s;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto again = summarize(shuffled);
    EXPECT_EQ(again.median, sum.median);
    EXPECT_EQ(again.p99, sum.p99);
  }
}

TEST(Summarize, KnownValues) {
  std::vector<double> three{3, 1, 2};
  auto s = summarize(three);
  EXPECT_EQ(s.median, 2);
  EXPECT_EQ(s.min, 1);
  EXPECT_EQ(s.mean, 2);
  EXPECT_EQ(s.p99, 3);

  std::vector<double> hundred;
  for (int i = 1; i <= 100; ++i) {
    hundred.push_back(i);
  }
  auto h = summarize(hundred);
  EXPECT_EQ(h.median, 50);
  EXPECT_EQ(h.p90, 90);
  EXPECT_EQ(h.p99, 99);

  std::vector<double> one{7.5};
  auto o = summarize(one);
  EXPECT_EQ(o.min, 7.5);
  EXPECT_EQ(o.mean, 7.5);
  EXPECT_EQ(o.median, 7.5);
  EXPECT_EQ(o.p90, 7.5);
  EXPECT_EQ(o.p99, 7.5);

  std::vector<double> even{1, 2, 3, 4};
  EXPECT_EQ(summarize(even).median, 2); // a sample, never an interpolation

  EXPECT_EQ(error_kind_of([] { summarize(std::span<double const>{}); }), ErrorKind::EmptySamples);
}

TEST(Summarize, MeanStaysWithinRangeForIdenticalSamples) {
  for (double v : {0.1, 1.0 / 3.0, 1e-7, 123.456789}) {
    for (std::size_t n : {3u, 7u, 10u, 1000u}) {
      std::vector<double> s(n, v);
      auto r = summarize(s);
      EXPECT_EQ(r.mean, v);
      EXPECT_EQ(r.min, v);
    }
  }
}

TEST(ResultRecordTest, RoundTripAndId) {
  auto r = sample_record();
  auto j = r.to_json();
  EXPECT_TRUE(check_record(j).empty());
  auto back = ResultRecord::from_json(j);
  EXPECT_EQ(back.to_json(), j);
  EXPECT_EQ(back.digest(), r.digest());
  EXPECT_EQ(r.digest(), sha256_hex(canonical_json(j)));
  EXPECT_EQ(r.id(), r.digest().substr(0, 16));
  EXPECT_TRUE(j["summary"]["peak_rss_bytes"].is_null());

  r.submitter = "team-a";
  EXPECT_NE(r.digest(), back.digest());
}

TEST(ResultRecordTest, ChecksRejectBrokenRecords) {
  auto base = sample_record().to_json();
  auto expect_path = [&](json j, std::string const &path) {
    auto v = check_record(j);
    ASSERT_FALSE(v.empty()) << j.dump();
    EXPECT_TRUE(std::any_of(v.begin(), v.end(), [&](Violation const &x) { return x.path == path; }))
        << path << " in " << j.dump();
    try {
      ResultRecord::from_json(j);
      ADD_FAILURE() << "accepted " << j.dump();
    } catch (Error const &e) {
      EXPECT_EQ(e.kind(), ErrorKind::SchemaViolation);
      EXPECT_FALSE(e.details().at("violations").empty());
    }
  };
  auto j = base;
  j.erase("lockfile_digest");
  expect_path(j, "$.lockfile_digest");
  j = base;
  j["lockfile_digest"] = "ABC";
  expect_path(j, "$.lockfile_digest");
  j = base;
  j["repetitions"] = 0;
  expect_path(j, "$.repetitions");
  j = base;
  j["summary"]["latency_ms"]["p90"] = 0.5;
  expect_path(j, "$.summary.latency_ms");
  j = base;
  j["summary"]["accuracy"] = 1.5;
  expect_path(j, "$.summary.accuracy");
  j = base;
  j["submitter"] = "Not A Token";
  expect_path(j, "$.submitter");
  j = base;
  j["solution"]["id"] = "nope";
  expect_path(j, "$.solution.id");
  EXPECT_FALSE(check_record(json::array()).empty());
}

TEST(WriteResult, NamedByTimestampAndDigest) {
  TempDir tmp;
  auto r = sample_record();
  auto path = write_result(r, tmp.path());
  EXPECT_EQ(path.filename().string(), "result-20260102T030405678Z-" + r.digest().substr(0, 12) + ".json");
  EXPECT_EQ(read_file(path), canonical_json(r.to_json()) + "\n");
}

TEST(Benchmark, ScheduledLatenciesAreReflected) {
  Bench b;
  BenchmarkConfig cfg;
  cfg.repetitions = 5;
  cfg.warmup = 0;
  cfg.input = {{"schedule", "50,60,70,80,90"}};
  cfg.submitter = "lab-1";
  auto r = benchmark(b.manifest, b.lockfile, cfg, b.workdir);
  auto const &l = r.summary.latency_ms;
  // each run sleeps for its scheduled time plus a little process overhead
  EXPECT_GE(l.min, 50);
  EXPECT_LE(l.min, 50 + 20);
  EXPECT_GE(l.median, 70);
  EXPECT_LE(l.median, 70 + 20);
  EXPECT_GE(l.p90, 90);
  EXPECT_LE(l.p90, 90 + 20);
  EXPECT_EQ(l.p90, l.p99); // nearest rank of 5 samples
  EXPECT_NEAR(r.summary.throughput_items_per_s, 50.0 * 5 / (l.mean * 5 / 1000.0), 1e-6);
  ASSERT_TRUE(r.summary.accuracy);
  EXPECT_DOUBLE_EQ(*r.summary.accuracy, 0.231);
  ASSERT_TRUE(r.summary.peak_rss_bytes);
  EXPECT_GT(*r.summary.peak_rss_bytes, 0u);
  EXPECT_LT(*r.summary.peak_rss_bytes, 1ull << 31);
  EXPECT_EQ(r.repetitions, 5u);
  EXPECT_EQ(r.submitter, "lab-1");
  EXPECT_EQ(r.lockfile_digest, b.lockfile.digest());
  EXPECT_TRUE(check_record(r.to_json()).empty());
}

TEST(Benchmark, FailureNamesTheRepetition) {
  Bench b;
  BenchmarkConfig cfg;
  cfg.repetitions = 5;
  cfg.warmup = 1;
  cfg.input = {{"schedule", "1"}, {"fail_at", 3}};
  try {
    benchmark(b.manifest, b.lockfile, cfg, b.workdir);
    FAIL() << "expected BenchmarkFailed";
  } catch (Error const &e) {
    EXPECT_EQ(e.kind(), ErrorKind::BenchmarkFailed);
    EXPECT_EQ(e.details().at("repetition"), 3);
    EXPECT_EQ(e.details().at("phase"), "measure");
    EXPECT_EQ(e.details().at("cause"), "NonZeroExit");
    EXPECT_NE(std::string(e.what()).find("repetition 3"), std::string::npos);
  }
  // runs before the failure completed and left their logs
  EXPECT_TRUE(fs::exists(b.workdir / "logs/run-2.out"));
  EXPECT_FALSE(fs::exists(b.workdir / "logs/run-4.out"));
}

TEST(Benchmark, PhasesAndRunIndicesReachTheProgram) {
  Bench b;
  // swap the run command for one that logs its environment
  write(b.tmp / "probe.sh",
        "echo \"$REEF_RUN_INDEX $REEF_REPETITION $REEF_PHASE\" >> \"$1/phases.log\"\n"
        "echo '{\"items_processed\": 2}' > \"$1/output.json\"\n",
        true);
  auto manifest = b.manifest;
  manifest.run_command = {"/bin/sh", (b.tmp / "probe.sh").string(), "${workdir}"};
  BenchmarkConfig cfg;
  cfg.repetitions = 3;
  cfg.warmup = 2;
  auto r = benchmark(manifest, b.lockfile, cfg, b.workdir);
  EXPECT_EQ(read_file(b.workdir / "phases.log"),
            "0 0 warmup\n1 0 warmup\n2 1 measure\n3 2 measure\n4 3 measure\n");
  EXPECT_FALSE(r.summary.accuracy);
  EXPECT_NEAR(r.summary.throughput_items_per_s, 2.0 * 3 / (r.summary.latency_ms.mean * 3 / 1000.0), 1e-6);

  cfg.repetitions = 0;
  EXPECT_EQ(error_kind_of([&] { benchmark(manifest, b.lockfile, cfg, b.workdir); }), ErrorKind::InvalidArgument);
}
