#include "oracles.hpp"

#include "reef/detector.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace reef;
using namespace reef::test;
using nlohmann::json;
using namespace std::chrono_literals;

namespace {

DetectorRule mock_cc_rule() {
  return DetectorRule::from_json({{"software", "mock-cc"},
                                  {"candidates", {"mock-cc"}},
                                  {"version_command", {"${exe}", "--version"}},
                                  {"version_pattern", "([0-9]+\\.[0-9]+(?:\\.[0-9]+)?)"},
                                  {"exports", {{{"name", "CC"}, {"value", "${location}"}},
                                               {{"name", "CC_DIR"}, {"value", "${dir}"}}}}});
}

fs::path fake_compiler(fs::path const &dir, std::string const &banner) {
  auto exe = dir / "mock-cc";
  write(exe, "#!/bin/sh\necho '" + banner + "'\n", true);
  return exe;
}

} // namespace

TEST(Detect, ThreeCompilersOrderedByVersionThenPath) {
  TempDir tmp;
  fake_compiler(tmp / "a", "mock-cc 9.3.0");
  fake_compiler(tmp / "b", "mock-cc version 11.1.0 (fixture)");
  fake_compiler(tmp / "c", "mock-cc 10.2.1");
  std::vector<fs::path> dirs{tmp / "c", tmp / "a", tmp / "b"};

  auto first = detect(mock_cc_rule(), dirs, kPlatform);
  ASSERT_EQ(first.entries.size(), 3u);
  EXPECT_EQ(first.entries[0].version.str(), "11.1.0");
  EXPECT_EQ(first.entries[1].version.str(), "10.2.1");
  EXPECT_EQ(first.entries[2].version.str(), "9.3.0");
  EXPECT_EQ(first.entries[0].location, tmp / "b/mock-cc");
  EXPECT_EQ(first.entries[2].exports.at("CC"), (tmp / "a/mock-cc").string());
  EXPECT_EQ(first.entries[2].exports.at("CC_DIR"), (tmp / "a").string());
  for (auto const &e : first.entries) {
    EXPECT_EQ(e.source, EnvSource::Detected);
    EXPECT_EQ(Version::parse(e.version.str()), e.version);
  }

  for (int run = 0; run < 10; ++run) {
    auto again = detect(mock_cc_rule(), dirs, kPlatform);
    ASSERT_EQ(again.entries.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_EQ(again.entries[i].location, first.entries[i].location);
      EXPECT_EQ(again.entries[i].version, first.entries[i].version);
    }
  }
}

TEST(Detect, EqualVersionsTieBreakOnPath) {
  TempDir tmp;
  fake_compiler(tmp / "z", "mock-cc 9.3.0");
  fake_compiler(tmp / "m", "mock-cc 9.3.0");
  auto r = detect(mock_cc_rule(), {tmp / "z", tmp / "m"}, kPlatform);
  ASSERT_EQ(r.entries.size(), 2u);
  EXPECT_EQ(r.entries[0].location, tmp / "m/mock-cc");
}

TEST(Detect, EmptyDirsAndNonMatchingCandidates) {
  TempDir tmp;
  EXPECT_TRUE(detect(mock_cc_rule(), {}, kPlatform).entries.empty());
  fake_compiler(tmp / "x", "no version here");
  write(tmp / "y/mock-cc", "not executable"); // skipped: no exec bit
  auto r = detect(mock_cc_rule(), {tmp / "x", tmp / "y", tmp / "missing"}, kPlatform);
  EXPECT_TRUE(r.entries.empty());
}

TEST(Detect, PartialVersionIsNormalisedAndNoted) {
  TempDir tmp;
  fake_compiler(tmp / "p", "mock-cc 9.3");
  auto r = detect(mock_cc_rule(), {tmp / "p"}, kPlatform);
  ASSERT_EQ(r.entries.size(), 1u);
  EXPECT_EQ(r.entries[0].version.str(), "9.3.0");
  ASSERT_EQ(r.diagnostics.size(), 1u);
  EXPECT_NE(r.diagnostics[0].message.find("normalised"), std::string::npos);
}

TEST(Detect, SlowProbeIsSkippedWithDiagnostic) {
  TempDir tmp;
  write(tmp / "slow/mock-cc", "#!/bin/sh\nsleep 5\necho 'mock-cc 1.0.0'\n", true);
  fake_compiler(tmp / "fast", "mock-cc 2.0.0");
  auto r = detect(mock_cc_rule(), {tmp / "slow", tmp / "fast"}, kPlatform, 300ms);
  ASSERT_EQ(r.entries.size(), 1u);
  EXPECT_EQ(r.entries[0].version.str(), "2.0.0");
  ASSERT_EQ(r.diagnostics.size(), 1u);
  EXPECT_NE(r.diagnostics[0].message.find("timed out"), std::string::npos);
}

TEST(Detect, SymlinkAliasesProbeOnce) {
  TempDir tmp;
  auto real = fake_compiler(tmp / "real", "mock-cc 9.3.0");
  fs::create_directories(tmp / "alias");
  fs::create_symlink(real, tmp / "alias/mock-cc");
  auto r = detect(mock_cc_rule(), {tmp / "real", tmp / "alias"}, kPlatform);
  ASSERT_EQ(r.entries.size(), 1u);
  EXPECT_EQ(r.entries[0].location, tmp / "alias/mock-cc");
}

TEST(DetectorRule, InvalidRules) {
  auto base = json{{"software", "x"}, {"candidates", {"x"}}, {"version_command", {"${exe}"}},
                   {"version_pattern", "([0-9.]+)"}};
  EXPECT_NO_THROW(DetectorRule::from_json(base));
  auto bad = base;
  bad["version_pattern"] = "([0-9";
  EXPECT_EQ(error_kind_of([&] { DetectorRule::from_json(bad); }), ErrorKind::InvalidRule);
  bad["version_pattern"] = "no groups";
  EXPECT_EQ(error_kind_of([&] { DetectorRule::from_json(bad); }), ErrorKind::InvalidRule);
  bad = base;
  bad["candidates"] = json::array();
  EXPECT_EQ(error_kind_of([&] { DetectorRule::from_json(bad); }), ErrorKind::InvalidRule);
  bad = base;
  bad.erase("software");
  EXPECT_EQ(error_kind_of([&] { DetectorRule::from_json(bad); }), ErrorKind::InvalidRule);
}

TEST(SelectEnv, MatchesFilterMaxOracle) {
  std::mt19937 rng(8);
  std::uniform_int_distribution<int> d(0, 12);
  for (int round = 0; round < 500; ++round) {
    std::vector<EnvironmentEntry> entries;
    for (int i = std::uniform_int_distribution<int>(0, 6)(rng); i > 0; --i) {
      EnvironmentEntry e;
      e.software = "mock-cc";
      e.version = Version{std::uint64_t(d(rng) % 4 + 8), std::uint64_t(d(rng) % 3), 0};
      e.location = "/opt/" + std::to_string(d(rng)) + "/mock-cc";
      entries.push_back(e);
    }
    entries = entries_for(entries, "mock-cc");
    auto req = VersionReq::parse(">=" + std::to_string(d(rng) % 5 + 8) + "." + std::to_string(d(rng) % 3));

    auto best = select_env_oracle(entries, req);
    if (best) {
      auto const &chosen = select_env(entries, req);
      EXPECT_EQ(chosen.version, best->version);
      EXPECT_EQ(chosen.location, best->location);
    } else {
      EXPECT_EQ(error_kind_of([&] { select_env(entries, req); }), ErrorKind::NoSatisfyingEnvironment);
    }
  }
}

TEST(SelectEnv, PicksNewestSatisfying) {
  EnvironmentEntry a, b;
  a.version = Version::parse("11.1.0");
  a.location = "/b";
  b.version = Version::parse("9.3.0");
  b.location = "/a";
  std::vector<EnvironmentEntry> es{a, b};
  EXPECT_EQ(select_env(es, VersionReq::parse(">=10.0")).version.str(), "11.1.0");
  EXPECT_EQ(select_env({b}, VersionReq::any()).version.str(), "9.3.0");
  EXPECT_EQ(error_kind_of([&] { select_env({b}, VersionReq::parse("10.0.0")); }), ErrorKind::NoSatisfyingEnvironment);
}

TEST(RegisterEnv, DedupesOnSoftwareVersionLocation) {
  TempDir tmp;
  auto exe = fake_compiler(tmp / "bin", "mock-cc 9.3.0");
  auto entries = detect(mock_cc_rule(), {tmp / "bin"}, kPlatform).entries;
  ASSERT_EQ(entries.size(), 1u);
  auto db = tmp / "envs.jsonl";
  auto id1 = register_env(entries[0], db);
  auto changed = entries[0];
  changed.exports["EXTRA"] = "1";
  auto id2 = register_env(changed, db);
  EXPECT_EQ(id1, id2);
  auto listed = list_envs(db);
  ASSERT_EQ(listed.size(), 1u);
  EXPECT_EQ(listed[0].exports.at("EXTRA"), "1");
  EXPECT_EQ(listed[0].to_json(), changed.to_json());

  auto other = entries[0];
  other.version = Version::parse("9.3.1");
  register_env(other, db);
  EXPECT_EQ(list_envs(db).size(), 2u);
}

TEST(RegisterEnv, MissingLocationIsPreconditionViolation) {
  TempDir tmp;
  EnvironmentEntry e;
  e.software = "ghost";
  e.version = Version::parse("1.0.0");
  e.location = tmp / "nope";
  EXPECT_EQ(error_kind_of([&] { register_env(e, tmp / "envs.jsonl"); }), ErrorKind::PreconditionViolation);
  EXPECT_FALSE(fs::exists(tmp / "envs.jsonl"));
}
