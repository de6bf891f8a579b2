#include "support.hpp"

#include "reef/archive.hpp"
#include "reef/installer.hpp"

#include <gtest/gtest.h>

using namespace reef;
using namespace reef::test;
using nlohmann::json;

namespace {

constexpr char kPlatform[] = "linux-x86_64";

/// Relative path -> bytes for every regular file under `root`.
std::map<std::string, std::string> snapshot(fs::path const &root) {
  std::map<std::string, std::string> out;
  if (!fs::exists(root)) {
    return out;
  }
  for (auto const &e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) {
      out[fs::relative(e.path(), root).string()] = read_file(e.path());
    }
  }
  return out;
}

struct Fixture {
  TempDir tmp;
  fs::path prefix = tmp / "prefix";
  fs::path env_db = tmp / "envs.jsonl";
  fs::path payload = tmp / "payload";

  InstallRequest request(json const &meta, std::map<std::string, std::string> files = {},
                         std::string const &id = "test/pkg") {
    auto c = make_component(tmp / "src" / id, id, "1.0.0", "package", meta, files);
    InstallRequest r;
    r.recipe = InstallRecipe::from_component(c);
    r.source_dir = c.root;
    r.source_digest = c.digest;
    return r;
  }
};

json variant(json steps, json platforms = {"*"}) { return {{"platforms", platforms}, {"steps", steps}}; }

std::vector<ArchiveEntry> sample_tree() {
  return {{"data/a.txt", "alpha\n", false},
          {"data/nested/b.bin", std::string("\0\1\2\3", 4), false},
          {"bin/tool.sh", "#!/bin/sh\necho hi\n", true}};
}

} // namespace

TEST(PlanInstall, FirstMatchingVariantWins) {
  auto step = [](std::string const &p) { return json{{"verb", "write-file"}, {"path", p}, {"contents", ""}}; };
  auto recipe = InstallRecipe::from_meta(
      ComponentId::parse("t/p"), Version::parse("1.0.0"),
      {{"recipes",
        {variant({step("mac")}, {"darwin-arm64"}), variant({step("linux")}, {"linux-x86_64", "linux-aarch64"}),
         variant({step("any")}), variant({step("late-linux")}, {"linux-x86_64"})}}});
  EXPECT_EQ(plan_install(recipe, "linux-x86_64")[0].path, "linux");
  EXPECT_EQ(plan_install(recipe, "linux-aarch64")[0].path, "linux");
  EXPECT_EQ(plan_install(recipe, "darwin-arm64")[0].path, "mac");
  EXPECT_EQ(plan_install(recipe, "freebsd-x86_64")[0].path, "any");

  auto narrow = InstallRecipe::from_meta(ComponentId::parse("t/p"), Version::parse("1.0.0"),
                                         {{"recipes", {variant({step("mac")}, {"darwin-arm64"})}}});
  try {
    plan_install(narrow, "linux-x86_64");
    FAIL() << "expected NoVariantForPlatform";
  } catch (Error const &e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoVariantForPlatform);
    EXPECT_EQ(e.details().at("platform"), "linux-x86_64");
  }
}

TEST(Install, FetchAndExtractReproduceArchiveTree) {
  Fixture f;
  auto blob = write_tar_gz(sample_tree());
  write(f.tmp / "mirror/tree.tar.gz", blob);
  auto req = f.request({{"recipes",
                         {variant({{{"verb", "fetch"},
                                    {"url", "file://" + (f.tmp / "mirror/tree.tar.gz").string()},
                                    {"sha256", sha256_hex(blob)},
                                    {"dest", "dl/tree.tar.gz"}},
                                   {{"verb", "extract"}, {"archive", "dl/tree.tar.gz"}, {"format", "tar-gz"},
                                    {"dest", "out"}}})}}});
  auto out = install(req, f.prefix, f.env_db, kPlatform);
  EXPECT_FALSE(out.reused);
  EXPECT_EQ(out.steps_executed, 2u);
  auto dir = install_dir(f.prefix, ComponentId::parse("test/pkg"), Version::parse("1.0.0"));
  EXPECT_EQ(out.entry.location, dir);
  EXPECT_EQ(out.entry.source, EnvSource::Installed);

  std::map<std::string, std::string> expected;
  for (auto const &e : sample_tree()) {
    expected[e.path] = e.bytes;
  }
  EXPECT_EQ(snapshot(dir / "out"), expected);
  EXPECT_EQ(read_file(dir / "dl/tree.tar.gz"), blob);
  EXPECT_NE(fs::status(dir / "out/bin/tool.sh").permissions() & fs::perms::owner_exec, fs::perms::none);
  EXPECT_TRUE(fs::exists(dir / kStampFileName));

  auto envs = list_envs(f.env_db);
  ASSERT_EQ(envs.size(), 1u);
  EXPECT_EQ(envs[0].software, "pkg");
}

TEST(Install, SecondInstallRunsNothingAndLeavesTreeIntact) {
  Fixture f;
  write(f.tmp / "counter", "");
  auto req = f.request(
      {{"recipes", {variant({{{"verb", "run-script"}, {"script", "setup.sh"}},
                             {{"verb", "write-file"}, {"path", "v.txt"}, {"contents", "${name}@${version}"}}})}}},
      {{"setup.sh", "echo run >> '" + (f.tmp / "counter").string() + "'\necho made > made.txt\n"}});
  auto first = install(req, f.prefix, f.env_db, kPlatform);
  EXPECT_EQ(first.steps_executed, 2u);
  auto dir = first.entry.location;
  auto before = snapshot(dir);
  EXPECT_EQ(before.at("v.txt"), "pkg@1.0.0");
  EXPECT_EQ(before.at("made.txt"), "made\n");

  auto second = install(req, f.prefix, f.env_db, kPlatform);
  EXPECT_TRUE(second.reused);
  EXPECT_EQ(second.steps_executed, 0u);
  EXPECT_EQ(snapshot(dir), before);
  EXPECT_EQ(read_file(f.tmp / "counter"), "run\n");
  EXPECT_EQ(list_envs(f.env_db).size(), 1u);

  // different parameters are a different installation
  req.params = {{"count", 3}};
  auto third = install(req, f.prefix, f.env_db, kPlatform);
  EXPECT_FALSE(third.reused);
  EXPECT_EQ(third.steps_executed, 2u);
}

TEST(Install, FlippedByteFailsWithoutStampAndRetryRunsEverything) {
  Fixture f;
  auto blob = write_tar_gz(sample_tree());
  auto mirror = f.tmp / "mirror/tree.tar.gz";
  auto tampered = blob;
  tampered[tampered.size() / 2] ^= 0x01;
  write(mirror, tampered);
  auto req = f.request({{"recipes",
                         {variant({{{"verb", "write-file"}, {"path", "first.txt"}, {"contents", "x"}},
                                   {{"verb", "fetch"}, {"url", "file://" + mirror.string()},
                                    {"sha256", sha256_hex(blob)}}})}}});
  try {
    install(req, f.prefix, f.env_db, kPlatform);
    FAIL() << "expected FetchDigestMismatch";
  } catch (Error const &e) {
    EXPECT_EQ(e.kind(), ErrorKind::FetchDigestMismatch);
    EXPECT_EQ(e.details().at("step"), 1);
    EXPECT_EQ(e.details().at("expected"), sha256_hex(blob));
    EXPECT_EQ(e.details().at("actual"), sha256_hex(tampered));
  }
  auto dir = install_dir(f.prefix, ComponentId::parse("test/pkg"), Version::parse("1.0.0"));
  EXPECT_FALSE(fs::exists(dir));
  EXPECT_TRUE(list_envs(f.env_db).empty());
  auto staging = f.prefix / ".staging";
  EXPECT_TRUE(!fs::exists(staging) || fs::is_empty(staging));

  write(mirror, blob);
  auto out = install(req, f.prefix, f.env_db, kPlatform);
  EXPECT_FALSE(out.reused);
  EXPECT_EQ(out.steps_executed, 2u);
  EXPECT_TRUE(fs::exists(dir / kStampFileName));
}

TEST(Install, FailingScriptReportsStepStatusAndOutput) {
  Fixture f;
  auto req = f.request({{"recipes", {variant({{{"verb", "write-file"}, {"path", "a"}, {"contents", ""}},
                                              {{"verb", "run-script"}, {"script", "boom.sh"}}})}}},
                       {{"boom.sh", "echo about to fail\nexit 7\n"}});
  try {
    install(req, f.prefix, f.env_db, kPlatform);
    FAIL() << "expected StepFailed";
  } catch (Error const &e) {
    EXPECT_EQ(e.kind(), ErrorKind::StepFailed);
    EXPECT_EQ(e.details().at("step"), 1);
    EXPECT_EQ(e.details().at("exit_status"), 7);
    EXPECT_NE(e.details().at("output").get<std::string>().find("about to fail"), std::string::npos);
  }
  // nothing but lock files remains under the prefix
  for (auto const &[path, _] : snapshot(f.prefix)) {
    EXPECT_TRUE(path.starts_with(".locks/")) << path;
  }
  EXPECT_FALSE(fs::exists(install_dir(f.prefix, req.recipe.package, req.recipe.version)));
}

TEST(Install, PathsLeavingTheSandboxAreRejected) {
  // literal escapes never get past the component schema
  for (auto const *bad : {"../escape.txt", "/tmp/abs.txt", "a/../../b"}) {
    Fixture f;
    EXPECT_EQ(error_kind_of([&] {
                f.request({{"recipes", {variant({{{"verb", "write-file"}, {"path", bad}, {"contents", "x"}}})}}});
              }),
              ErrorKind::SchemaViolation)
        << bad;
  }
  // rendered paths and recipes built in memory are checked at install time
  for (auto const *bad : {"../escape.txt", "/tmp/abs.txt", "a/../../b"}) {
    Fixture f;
    auto req = f.request({{"recipes", {variant({{{"verb", "write-file"}, {"path", "${param:target}"}, {"contents", "x"}}})}}});
    req.params = {{"target", bad}};
    EXPECT_EQ(error_kind_of([&] { install(req, f.prefix, f.env_db, kPlatform); }), ErrorKind::SandboxEscape) << bad;
    req.params = json::object();
    req.recipe = InstallRecipe::from_meta(req.recipe.package, req.recipe.version,
                                          {{"recipes", {variant({{{"verb", "write-file"}, {"path", bad}, {"contents", "x"}}})}}});
    EXPECT_EQ(error_kind_of([&] { install(req, f.prefix, f.env_db, kPlatform); }), ErrorKind::SandboxEscape) << bad;
    EXPECT_FALSE(fs::exists(f.prefix / "escape.txt"));
    EXPECT_FALSE(fs::exists(f.tmp / "escape.txt"));
  }
}

TEST(Install, EnvDependenciesGateAndFeedTheInstall) {
  Fixture f;
  auto meta = json{{"recipes", {variant({{{"verb", "write-file"}, {"path", "cc.txt"}, {"contents", "${env:CC}"}}})}},
                   {"env_dependencies", {{{"software", "mock-cc"}, {"req", ">=9.0"}}}}};
  auto req = f.request(meta);
  try {
    install(req, f.prefix, f.env_db, kPlatform);
    FAIL() << "expected MissingEnvDependency";
  } catch (Error const &e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingEnvDependency);
    EXPECT_EQ(e.details().at("software"), "mock-cc");
  }
  EXPECT_FALSE(fs::exists(install_dir(f.prefix, req.recipe.package, req.recipe.version)));

  auto exe = f.tmp / "bin/mock-cc";
  write(exe, "#!/bin/sh\n", true);
  EnvironmentEntry old;
  old.software = "mock-cc";
  old.version = Version::parse("8.4.0");
  old.location = exe;
  old.exports = {{"CC", "old"}};
  register_env(old, f.env_db);
  EXPECT_EQ(error_kind_of([&] { install(req, f.prefix, f.env_db, kPlatform); }), ErrorKind::MissingEnvDependency);

  auto good = old;
  good.version = Version::parse("9.3.0");
  good.exports = {{"CC", exe.string()}};
  register_env(good, f.env_db);
  auto out = install(req, f.prefix, f.env_db, kPlatform);
  EXPECT_EQ(read_file(out.entry.location / "cc.txt"), exe.string());
}

TEST(Install, ParamsReachScriptsAndTemplates) {
  Fixture f;
  auto req = f.request({{"recipes", {variant({{{"verb", "run-script"}, {"script", "gen.sh"}},
                                              {{"verb", "write-file"}, {"path", "p.txt"}, {"contents", "${param:count}"}}})}},
                        {"exports", {{{"name", "PKG_ROOT"}, {"value", "${prefix}"}}}}},
                       {{"gen.sh", "echo \"$REEF_PARAM_IMAGE_COUNT\" > env.txt\n"}});
  req.params = {{"count", 4}, {"image-count", "12"}};
  auto out = install(req, f.prefix, f.env_db, kPlatform);
  EXPECT_EQ(read_file(out.entry.location / "p.txt"), "4");
  EXPECT_EQ(read_file(out.entry.location / "env.txt"), "12\n");
  EXPECT_EQ(out.entry.exports.at("PKG_ROOT"), out.entry.location.string());
}

TEST(Install, CorruptArchiveIsAStepFailure) {
  Fixture f;
  auto req = f.request({{"recipes", {variant({{{"verb", "extract"}, {"archive", "junk.tar.gz"}, {"format", "tar-gz"}}})}}},
                       {{"junk.tar.gz", "this is not gzip"}});
  EXPECT_EQ(error_kind_of([&] { install(req, f.prefix, f.env_db, kPlatform); }), ErrorKind::StepFailed);
}
