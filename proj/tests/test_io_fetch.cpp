#include <gtest/gtest.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>

#include "polu/error.hpp"
#include "polu/fetch.hpp"
#include "polu/io.hpp"
#include "polu/json_io.hpp"
#include "test_util.hpp"

using namespace polu;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> bytes(const std::string& s) { return {s.begin(), s.end()}; }

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::IoError;
}

// Minimal ustar writer for the extractor tests.
void tar_add(std::vector<std::uint8_t>& out, const std::string& name, const std::string& body,
             char type = '0') {
  std::uint8_t h[512] = {0};
  std::memcpy(h, name.data(), std::min<std::size_t>(name.size(), 100));
  std::snprintf(reinterpret_cast<char*>(h + 100), 8, "%07o", 0644);
  std::snprintf(reinterpret_cast<char*>(h + 124), 12, "%011o", static_cast<unsigned>(body.size()));
  h[156] = static_cast<std::uint8_t>(type);
  std::memcpy(h + 257, "ustar", 6);
  std::memcpy(h + 263, "00", 2);
  std::memset(h + 148, ' ', 8);
  unsigned sum = 0;
  for (auto b : h) sum += b;
  std::snprintf(reinterpret_cast<char*>(h + 148), 8, "%06o", sum);
  out.insert(out.end(), h, h + 512);
  out.insert(out.end(), body.begin(), body.end());
  out.resize((out.size() + 511) / 512 * 512, 0);
}

}  // namespace

TEST(Digest, KnownVectors) {
  EXPECT_EQ(io::digest_hex(bytes("abc"), "sha256"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(io::digest_hex(bytes(""), "md5"), "d41d8cd98f00b204e9800998ecf8427e");
  EXPECT_THROW(io::digest_hex(bytes("abc"), "crc32"), Error);
}

TEST(Gzip, RoundTripAndCorruption) {
  testutil::TempDir dir;
  std::vector<std::uint8_t> raw(100000);
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<std::uint8_t>(i * 7 % 251);
  testutil::write_gzip(dir.path / "x.gz", raw);
  const auto packed = io::read_file(dir.path / "x.gz");
  EXPECT_EQ(io::gunzip(packed), raw);
  EXPECT_EQ(io::read_file(dir.path / "x"), raw);  // transparent .gz fallback
  auto broken = packed;
  broken.resize(broken.size() / 2);
  EXPECT_EQ(kind_of([&] { io::gunzip(broken); }), ErrorKind::FormatError);
  EXPECT_EQ(kind_of([&] { io::read_file(dir.path / "absent"); }), ErrorKind::NotFound);
}

TEST(Tar, ExtractsAndRejectsEscapes) {
  testutil::TempDir dir;
  std::vector<std::uint8_t> tar;
  tar_add(tar, "d/", "", '5');
  tar_add(tar, "d/a.bin", "hello");
  tar_add(tar, "d/b.bin", std::string(700, 'z'));
  tar.resize(tar.size() + 1024, 0);
  const auto files = fetch::extract_tar(tar, dir.path);
  EXPECT_EQ(files.size(), 2u);
  EXPECT_EQ(io::read_file(dir.path / "d/a.bin"), bytes("hello"));
  EXPECT_EQ(io::read_file(dir.path / "d/b.bin").size(), 700u);

  std::vector<std::uint8_t> evil;
  tar_add(evil, "../evil", "x");
  EXPECT_THROW(fetch::extract_tar(evil, dir.path), Error);

  auto bad = tar;
  bad[0] ^= 1;  // checksum no longer matches
  EXPECT_EQ(kind_of([&] { fetch::extract_tar(bad, dir.path); }), ErrorKind::FormatError);
}

TEST(Manifest, DefaultHasDatasets) {
  const auto m = fetch::default_manifest();
  const auto& mnist = m.find("mnist");
  EXPECT_EQ(mnist.files.size(), 4u);
  for (const auto& f : mnist.files) {
    EXPECT_EQ(f.algorithm, "sha256");
    EXPECT_EQ(f.digest.size(), 64u);
    EXPECT_FALSE(f.urls.empty());
  }
  EXPECT_NO_THROW(m.find("cifar10"));
  EXPECT_NO_THROW(m.find("cifar100"));
  EXPECT_EQ(kind_of([&] { m.find("svhn"); }), ErrorKind::NotFound);
  EXPECT_EQ(kind_of([] { fetch::parse_manifest(json{{"datasets", 3}}); }), ErrorKind::ParseError);
}

TEST(Fetch, FileUrlsVerifyAndSkipPresent) {
  testutil::TempDir src, root;
  const auto payload = bytes("some dataset bytes");
  io::write_file(src.path / "blob.bin", payload);
  testutil::write_gzip(src.path / "packed.gz", payload);
  const json j = {
      {"datasets",
       {{"toy",
         {{"dir", "toy"},
          {"files",
           {{{"name", "blob.bin"},
             {"urls", {"file:///nonexistent/blob.bin", "file://" + (src.path / "blob.bin").string()}},
             {"sha256", io::digest_hex(payload, "sha256")}},
            {{"name", "content.bin"},
             {"urls", {"file://" + (src.path / "packed.gz").string()}},
             {"unpack", "gzip"},
             {"digest_of", "content"},
             {"sha256", io::digest_hex(payload, "sha256")}}}}}}}}};
  const auto m = fetch::parse_manifest(j);
  const auto r1 = fetch::fetch_dataset(m, "toy", root.path);
  EXPECT_EQ(r1.downloaded.size(), 2u);
  EXPECT_EQ(io::read_file(root.path / "toy/blob.bin"), payload);
  EXPECT_EQ(io::read_file(root.path / "toy/content.bin"), payload);
  const auto r2 = fetch::fetch_dataset(m, "toy", root.path);
  EXPECT_TRUE(r2.downloaded.empty());
  EXPECT_EQ(r2.already_present.size(), 2u);

  json wrong = j;
  wrong["datasets"]["toy"]["files"][0]["sha256"] = std::string(64, '0');
  wrong["datasets"]["toy"]["dir"] = "toy2";
  EXPECT_EQ(kind_of([&] { fetch::fetch_dataset(fetch::parse_manifest(wrong), "toy", root.path); }),
            ErrorKind::FormatError);
  EXPECT_FALSE(fs::exists(root.path / "toy2/blob.bin"));
}

TEST(Fetch, DataRootHonorsEnvironment) {
  const char* old = std::getenv("POLU_DATA_DIR");
  const std::string saved = old ? old : "";
  setenv("POLU_DATA_DIR", "/tmp/polu_elsewhere", 1);
  EXPECT_EQ(fetch::data_root(), fs::path("/tmp/polu_elsewhere"));
  if (old) setenv("POLU_DATA_DIR", saved.c_str(), 1);
  else unsetenv("POLU_DATA_DIR");
}

TEST(Json, SignificantDigitsAndNonFinite) {
  const json j = {{"a", 0.1}, {"b", 1.0 / 3.0}, {"c", std::nan("")}, {"d", 5}};
  const std::string s17 = dump_json(j, 17, -1);
  EXPECT_NE(s17.find("0.10000000000000001"), std::string::npos);
  EXPECT_NE(s17.find("null"), std::string::npos);
  const std::string s9 = dump_json(j, 9, -1);
  EXPECT_NE(s9.find("0.333333333"), std::string::npos);
  EXPECT_EQ(s9.find("0.3333333333"), std::string::npos);
  EXPECT_EQ(format_real(2816.0, 9), "2816");

  testutil::TempDir dir;
  write_json_file(dir.path / "x.json", j);
  EXPECT_EQ(read_json_file(dir.path / "x.json").at("d"), 5);
  io::write_file(dir.path / "bad.json", bytes("{oops"));
  EXPECT_EQ(kind_of([&] { read_json_file(dir.path / "bad.json"); }), ErrorKind::ParseError);
  EXPECT_EQ(kind_of([&] { read_json_file(dir.path / "none.json"); }), ErrorKind::IoError);
}
