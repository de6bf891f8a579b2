#include "support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace reef;
using namespace reef::test;
using nlohmann::json;

namespace {

// Independent digest: canonical descriptor, then path \0 len \0 bytes per
// path-sorted file.
constexpr char kDigestOracle[] = R"(
import hashlib, json, os, sys
root = sys.argv[1]
doc = json.load(open(os.path.join(root, 'meta.json'), encoding='utf-8'))
desc = {k: doc[k] for k in ('id', 'version', 'kind', 'meta')}
h = hashlib.sha256(json.dumps(desc, sort_keys=True, separators=(',', ':'), ensure_ascii=False).encode('utf-8'))
for p in sorted(doc['files'], key=lambda s: s.encode('utf-8')):
    data = open(os.path.join(root, p), 'rb').read()
    h.update(p.encode('utf-8') + b'\0' + str(len(data)).encode() + b'\0' + data)
print(h.hexdigest())
)";

json dataset_meta() { return trivial_recipe(); }

} // namespace

TEST(ComponentDigest, MatchesIndependentOracle) {
  std::mt19937 rng(5);
  for (int round = 0; round < 10; ++round) {
    TempDir tmp;
    std::map<std::string, std::string> files;
    for (int i = std::uniform_int_distribution<int>(0, 6)(rng); i > 0; --i) {
      std::string body(std::uniform_int_distribution<std::size_t>(0, 300)(rng), '\0');
      for (auto &c : body) {
        c = static_cast<char>(rng() & 0xff);
      }
      files["dir" + std::to_string(i % 2) + "/f" + std::to_string(i) + ".bin"] = body;
    }
    auto meta = dataset_meta();
    meta["description"] = "round " + std::to_string(round) + " ünïcode";
    auto c = make_component(tmp.path(), "ns/data-" + std::to_string(round), "1.0." + std::to_string(round), "dataset",
                            meta, files);
    EXPECT_EQ(c.digest + "\n", python(kDigestOracle, {tmp.path().string()}));
  }
}

TEST(ComponentDigest, IndependentOfListingOrderAndMetaKeyOrder) {
  auto meta = dataset_meta();
  std::vector<FileBlob> a{{"b.txt", "B"}, {"a.txt", "A"}, {"c/d.txt", "D"}};
  std::vector<FileBlob> b{{"c/d.txt", "D"}, {"a.txt", "A"}, {"b.txt", "B"}};
  json desc = {{"id", "x/y"}, {"version", "1.0.0"}, {"kind", "dataset"}, {"meta", meta}};
  EXPECT_EQ(canonical_digest(a, desc), canonical_digest(b, desc));
  auto reordered = json::parse(R"({"version":"1.0.0","meta":)" + meta.dump() + R"(,"kind":"dataset","id":"x/y"})");
  EXPECT_EQ(canonical_digest(a, desc), canonical_digest(a, reordered));
}

TEST(ComponentDigest, ChangesWithAnyByteOrBoundary) {
  json desc = {{"id", "x/y"}};
  auto base = canonical_digest({{"a", "xy"}, {"b", "z"}}, desc);
  EXPECT_NE(base, canonical_digest({{"a", "x"}, {"b", "yz"}}, desc)); // length framing
  EXPECT_NE(base, canonical_digest({{"a", "xy"}, {"b", "Z"}}, desc));
  EXPECT_NE(base, canonical_digest({{"a", "xy"}, {"c", "z"}}, desc));
  EXPECT_NE(base, canonical_digest({{"a", "xy"}, {"b", "z"}}, json{{"id", "x/z"}}));
}

TEST(ComponentDigest, DuplicatePathRejected) {
  EXPECT_EQ(error_kind_of([] { canonical_digest({{"a", "1"}, {"a", "2"}}, json::object()); }),
            ErrorKind::DuplicatePath);
}

TEST(LoadComponent, MissingMeta) {
  TempDir tmp;
  EXPECT_EQ(error_kind_of([&] { load_component(tmp.path()); }), ErrorKind::MissingMeta);
}

TEST(LoadComponent, SchemaViolationListsPaths) {
  TempDir tmp;
  write(tmp / "meta.json", R"({"id":"Bad/ID","version":"1.0","kind":"dataset","meta":{"recipes":[]},"files":[]})");
  try {
    load_component(tmp.path());
    FAIL() << "expected SchemaViolation";
  } catch (Error const &e) {
    EXPECT_EQ(e.kind(), ErrorKind::SchemaViolation);
    auto text = e.details().dump();
    EXPECT_NE(text.find("$.id"), std::string::npos);
    EXPECT_NE(text.find("$.version"), std::string::npos);
    EXPECT_NE(text.find("$.meta.recipes"), std::string::npos);
  }
}

TEST(LoadComponent, PathEscape) {
  TempDir tmp;
  for (auto bad : {"../x", "/etc/passwd", "a/../../b"}) {
    write(tmp / "meta.json", json{{"id", "a/b"},
                                  {"version", "1.0.0"},
                                  {"kind", "dataset"},
                                  {"meta", dataset_meta()},
                                  {"files", {bad}}}
                                 .dump());
    EXPECT_EQ(error_kind_of([&] { load_component(tmp.path()); }), ErrorKind::PathEscape) << bad;
  }
}

TEST(LoadComponent, DuplicateListedPath) {
  TempDir tmp;
  write(tmp / "f.txt", "x");
  write(tmp / "meta.json", json{{"id", "a/b"},
                                {"version", "1.0.0"},
                                {"kind", "dataset"},
                                {"meta", dataset_meta()},
                                {"files", {"f.txt", "f.txt"}}}
                               .dump());
  EXPECT_EQ(error_kind_of([&] { load_component(tmp.path()); }), ErrorKind::DuplicatePath);
}

TEST(LoadComponent, StoreRoundTripKeepsDigest) {
  TempDir tmp;
  auto c = make_component(tmp / "src", "a/b", "1.2.3", "model", dataset_meta(), {{"w.bin", "weights"}});
  store_component(c, tmp / "copy");
  auto again = load_component(tmp / "copy");
  EXPECT_EQ(again.digest, c.digest);
  EXPECT_EQ(again.files, c.files);
}

TEST(ValidateMeta, DetectorRegexNeedsOneGroup) {
  json rule = {{"software", "gcc"},
               {"candidates", {"gcc"}},
               {"version_command", {"${exe}", "--version"}},
               {"version_pattern", "gcc ([0-9.]+)"}};
  EXPECT_TRUE(validate_meta(Kind::Detector, rule).empty());
  rule["version_pattern"] = "gcc [0-9.]+";
  EXPECT_FALSE(validate_meta(Kind::Detector, rule).empty());
  rule["version_pattern"] = "(gcc) ([0-9.]+)";
  EXPECT_FALSE(validate_meta(Kind::Detector, rule).empty());
  rule["version_pattern"] = "gcc ([0-9.]+";
  EXPECT_FALSE(validate_meta(Kind::Detector, rule).empty());
}

TEST(ValidateMeta, DetectorCommandOnlyKnowsExe) {
  json rule = {{"software", "gcc"},
               {"candidates", {"gcc"}},
               {"version_command", {"${exe}", "${other}"}},
               {"version_pattern", "([0-9.]+)"}};
  EXPECT_FALSE(validate_meta(Kind::Detector, rule).empty());
}

TEST(ValidateMeta, RecipeRejectsUnknownVerbAndBadDigest) {
  auto meta = dataset_meta();
  meta["recipes"][0]["steps"] = json::array({{{"verb", "download"}, {"url", "x"}}});
  EXPECT_FALSE(validate_meta(Kind::Dataset, meta).empty());
  meta["recipes"][0]["steps"] = json::array({{{"verb", "fetch"}, {"url", "x"}, {"sha256", "ABC"}}});
  EXPECT_FALSE(validate_meta(Kind::Dataset, meta).empty());
  meta["recipes"][0]["steps"] = json::array({{{"verb", "write-file"}, {"path", "../x"}, {"contents", ""}}});
  EXPECT_FALSE(validate_meta(Kind::Dataset, meta).empty());
}

TEST(ValidateMeta, SolutionStagesAndPlaceholders) {
  json sol = {{"dependencies", {{{"id", "a/data"}, {"req", "*"}, {"kind", "dataset"}}}},
              {"pipeline", {{{"kind", "prepare-env"}}, {{"kind", "install-dataset"}, {"target", "a/data"}}}},
              {"run", {{"command", {"${dep:a/data:root}/run", "${workdir}", "${input:n}", "${env:PATH}"}}, {"output", "o.json"}}},
              {"validation", json::array()}};
  EXPECT_TRUE(validate_meta(Kind::Solution, sol).empty()) << validate_meta(Kind::Solution, sol).size();

  auto undeclared = sol;
  undeclared["pipeline"][1]["target"] = "a/other";
  EXPECT_FALSE(validate_meta(Kind::Solution, undeclared).empty());

  auto twice = sol;
  twice["pipeline"].push_back({{"kind", "install-dataset"}, {"target", "a/data"}});
  EXPECT_FALSE(validate_meta(Kind::Solution, twice).empty());

  auto stray = sol;
  stray["run"]["command"].push_back("${dep:b/c:root}");
  EXPECT_FALSE(validate_meta(Kind::Solution, stray).empty());

  auto unknown = sol;
  unknown["run"]["command"].push_back("${prefix}");
  EXPECT_FALSE(validate_meta(Kind::Solution, unknown).empty());

  auto badkind = sol;
  badkind["pipeline"][0]["kind"] = "deploy";
  EXPECT_FALSE(validate_meta(Kind::Solution, badkind).empty());

  auto escape = sol;
  escape["run"]["output"] = "../o.json";
  EXPECT_FALSE(validate_meta(Kind::Solution, escape).empty());
}

TEST(ComponentId, Tokens) {
  EXPECT_TRUE(ComponentId::try_parse("mlperf/demo-1"));
  EXPECT_FALSE(ComponentId::try_parse("MLPerf/demo"));
  EXPECT_FALSE(ComponentId::try_parse("a/b/c"));
  EXPECT_FALSE(ComponentId::try_parse("/b"));
  EXPECT_FALSE(ComponentId::try_parse("a/" + std::string(65, 'x')));
  EXPECT_TRUE(ComponentId::try_parse("a/" + std::string(64, 'x')));
}
