#include "support.hpp"

#include "reef/archive.hpp"

#include <gtest/gtest.h>

#include <thread>

using namespace reef;
using namespace reef::test;
using nlohmann::json;

namespace {

Component sample(fs::path const &dir, std::string const &version = "1.0.0", std::string const &payload = "data") {
  return make_component(dir, "a/x", version, "dataset", trivial_recipe(),
                        {{"payload.bin", payload}, {"nested/readme.txt", "hello\n"}, {"run.sh", "#!/bin/sh\n"}});
}

std::map<std::string, std::string> tree(fs::path const &root) {
  std::map<std::string, std::string> out;
  for (auto const &e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) {
      out[fs::relative(e.path(), root).generic_string()] = read_file(e.path());
    }
  }
  return out;
}

} // namespace

TEST(LocalRegistry, PublishThenPullIsByteIdentical) {
  TempDir tmp;
  LocalRegistry reg(tmp / "registry");
  auto c = sample(tmp / "src");
  auto rec = reg.publish(c);
  EXPECT_EQ(rec.digest, c.digest);
  EXPECT_EQ(rec.index_digest, reg.index().digest());

  auto pulled = reg.pull(c.id, c.version, tmp / "out");
  EXPECT_EQ(pulled.digest, c.digest);
  auto a = tree(tmp / "src");
  auto b = tree(tmp / "out");
  a.erase("meta.json");
  b.erase("meta.json");
  EXPECT_EQ(a, b);
  EXPECT_TRUE((fs::status(tmp / "out/run.sh").permissions() & fs::perms::owner_exec) != fs::perms::none);
}

TEST(LocalRegistry, RepublishIsDuplicateVersionWhateverTheContent) {
  TempDir tmp;
  LocalRegistry reg(tmp / "registry");
  reg.publish(sample(tmp / "v1"));
  auto before = read_file(tmp / "registry/index.json");
  EXPECT_EQ(error_kind_of([&] { reg.publish(sample(tmp / "same")); }), ErrorKind::DuplicateVersion);
  EXPECT_EQ(error_kind_of([&] { reg.publish(sample(tmp / "changed", "1.0.0", "other")); }),
            ErrorKind::DuplicateVersion);
  EXPECT_EQ(read_file(tmp / "registry/index.json"), before);
}

TEST(LocalRegistry, VersionsListAscending) {
  TempDir tmp;
  LocalRegistry reg(tmp / "registry");
  reg.publish(sample(tmp / "b", "1.0.1"));
  reg.publish(sample(tmp / "a", "1.0.0"));
  reg.publish(sample(tmp / "c", "0.9.0"));
  auto vs = reg.index().versions({"a", "x"});
  ASSERT_EQ(vs.size(), 3u);
  EXPECT_EQ(vs[0].str(), "0.9.0");
  EXPECT_EQ(vs[2].str(), "1.0.1");
}

TEST(LocalRegistry, TamperedBlobIsDigestMismatch) {
  TempDir tmp;
  LocalRegistry reg(tmp / "registry");
  auto c = sample(tmp / "src");
  reg.publish(c);
  auto blob_path = tmp / "registry/blobs" / c.digest;
  auto entries = read_tar_gz(read_file(blob_path));
  for (auto &e : entries) {
    if (e.path == "payload.bin") {
      e.bytes[0] ^= 0x01;
    }
  }
  write_file_atomic(blob_path, write_tar_gz(entries));
  EXPECT_EQ(error_kind_of([&] { reg.pull(c.id, c.version, tmp / "out"); }), ErrorKind::DigestMismatch);
  EXPECT_FALSE(fs::exists(tmp / "out"));

  write_file_atomic(blob_path, "not an archive");
  EXPECT_EQ(error_kind_of([&] { reg.pull(c.id, c.version, tmp / "out"); }), ErrorKind::DigestMismatch);
}

TEST(LocalRegistry, UnknownComponentOrVersion) {
  TempDir tmp;
  LocalRegistry reg(tmp / "registry");
  reg.publish(sample(tmp / "src"));
  EXPECT_EQ(error_kind_of([&] { reg.pull({"a", "x"}, Version::parse("2.0.0"), tmp / "o"); }),
            ErrorKind::UnknownComponent);
  EXPECT_EQ(error_kind_of([&] { reg.pull({"a", "y"}, Version::parse("1.0.0"), tmp / "o"); }),
            ErrorKind::UnknownComponent);
}

TEST(LocalRegistry, EarlierPullsUnaffectedByLaterPublishes) {
  TempDir tmp;
  LocalRegistry reg(tmp / "registry");
  auto c = sample(tmp / "src");
  reg.publish(c);
  auto blob = reg.fetch_blob(c.id, c.version);
  for (int i = 1; i <= 5; ++i) {
    reg.publish(sample(tmp / ("v" + std::to_string(i)), "1.0." + std::to_string(i), "p" + std::to_string(i)));
  }
  EXPECT_EQ(reg.fetch_blob(c.id, c.version), blob);
  EXPECT_EQ(reg.pull(c.id, c.version, tmp / "again").digest, c.digest);
}

TEST(LocalRegistry, ConcurrentPublishersSerialise) {
  TempDir tmp;
  std::vector<Component> comps;
  for (int i = 0; i < 8; ++i) {
    comps.push_back(sample(tmp / ("c" + std::to_string(i)), "1." + std::to_string(i) + ".0"));
  }
  std::vector<std::thread> threads;
  std::atomic<int> failures{0};
  for (auto const &c : comps) {
    threads.emplace_back([&, c] {
      try {
        LocalRegistry(tmp / "registry").publish(c);
      } catch (...) {
        ++failures;
      }
    });
  }
  for (auto &t : threads) {
    t.join();
  }
  EXPECT_EQ(failures, 0);
  EXPECT_EQ(LocalRegistry(tmp / "registry").index().versions({"a", "x"}).size(), 8u);
}

TEST(RegistryIndex, JsonRoundTripAndDigestStability) {
  TempDir tmp;
  LocalRegistry reg(tmp / "registry");
  reg.publish(sample(tmp / "a", "1.0.0"));
  reg.publish(sample(tmp / "b", "2.0.0"));
  auto idx = reg.index();
  auto again = RegistryIndex::from_json(idx.to_json());
  EXPECT_EQ(again.digest(), idx.digest());
  EXPECT_EQ(canonical_json(again.to_json()), canonical_json(idx.to_json()));
}

TEST(PackComponent, Deterministic) {
  TempDir tmp;
  auto c = sample(tmp / "src");
  EXPECT_EQ(pack_component(c), pack_component(load_component(tmp / "src")));
}
