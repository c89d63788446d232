#include <atomic>
#include <cstring>
#include <set>

#include "doctest.h"
#include "test_util.hpp"
#include "wafertopo/error.hpp"
#include "wafertopo/io.hpp"
#include "wafertopo/manifest.hpp"
#include "wafertopo/parallel.hpp"
#include "wafertopo/rng.hpp"

using namespace wafertopo;

TEST_CASE("rng streams are reproducible and distinct") {
  Rng a(42, 1), b(42, 1), c(42, 2), d(43, 1);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    CHECK(x != c.next_u64());
    CHECK(x != d.next_u64());
  }
}

TEST_CASE("rng output is pinned") {
  // mix64(key + golden) computed by hand from the documented formula
  const std::uint64_t key = mix64(42ULL ^ mix64(1ULL + 0xd1b54a32d192ed03ULL));
  Rng r(42, 1);
  CHECK(r.next_u64() == mix64(key + 0x9e3779b97f4a7c15ULL));
  CHECK(r.next_u64() == mix64(key + 2 * 0x9e3779b97f4a7c15ULL));
  // SplitMix64 reference value for input 0 after the golden increment
  CHECK(mix64(0x9e3779b97f4a7c15ULL) == 0xe220a8397b1dcdafULL);
}

TEST_CASE("rng ranges") {
  Rng r(7, 0);
  std::set<std::int64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const auto k = r.uniform_int(-2, 3);
    CHECK(k >= -2);
    CHECK(k <= 3);
    seen.insert(k);
  }
  CHECK(seen.size() == 6);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("byte writer/reader round trip and truncation") {
  ByteWriter w;
  w.magic("ABCD");
  w.u8(7);
  w.u32(0xdeadbeef);
  w.u64(1234567890123ULL);
  w.f32(1.5f);
  w.f64(-2.25);
  w.str("héllo");
  const auto bytes = w.take();
  CHECK(bytes[5] == 0xef);  // little endian
  ByteReader r(bytes);
  r.expect_magic("ABCD");
  CHECK(r.u8() == 7);
  CHECK(r.u32() == 0xdeadbeef);
  CHECK(r.u64() == 1234567890123ULL);
  CHECK(r.f32() == 1.5f);
  CHECK(r.f64() == -2.25);
  CHECK(r.str() == "héllo");
  CHECK(r.at_end());
  CHECK_THROWS_AS(r.u8(), FormatError);

  std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 10);
  ByteReader r2(cut);
  r2.expect_magic("ABCD");
  r2.u8();
  CHECK_THROWS_AS(r2.u64(), FormatError);
  ByteReader r3(bytes);
  CHECK_THROWS_AS(r3.expect_magic("WXYZ"), FormatError);
}

TEST_CASE("fnv1a reference values") {
  CHECK(hash_bytes({}) == 0xcbf29ce484222325ULL);
  const std::string a = "a";
  CHECK(hash_bytes({reinterpret_cast<const std::uint8_t*>(a.data()), 1}) == 0xaf63dc4c8601ec8cULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("csv quoting round trip") {
  const CsvRow row{"plain", "with,comma", "with \"quote\"", "", "line\nbreak"};
  const std::string text = format_csv_row(row) + format_csv_row({"x", "y", "z", "w", "v"});
  const auto rows = parse_csv(text);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == row);
  CHECK(rows[1][4] == "v");
}

TEST_CASE("png round trip and errors") {
  const auto dir = testutil::scratch_dir("png");
  RgbImage img(5, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 17);
  write_png(dir / "a.png", img);
  CHECK(read_png(dir / "a.png") == img);
  CHECK(encode_png(img) == read_file(dir / "a.png"));
  write_text_atomic(dir / "bad.png", "not a png");
  CHECK_THROWS_AS(read_png(dir / "bad.png"), Error);
  CHECK_THROWS_AS(read_png(dir / "missing.png"), IoError);
}

TEST_CASE("manifest validation") {
  const auto dir = testutil::scratch_dir("manifest");
  DatasetManifest m;
  m.entries = {{"a", "images/a.png", "good", "train"}, {"b", "images/b.png", "faulty", "test"}};
  write_manifest(dir / "m.csv", m);
  const auto back = read_manifest(dir / "m.csv");
  CHECK(back.entries == m.entries);
  CHECK(back.base_dir == dir);

  write_text_atomic(dir / "dup.csv", "id,path,label,split\na,x.png,l,all\na,y.png,l,all\n");
  CHECK_THROWS_AS(read_manifest(dir / "dup.csv"), ValidationError);
  write_text_atomic(dir / "hdr.csv", "id,file,label,split\n");
  CHECK_THROWS_AS(read_manifest(dir / "hdr.csv"), ValidationError);
  write_text_atomic(dir / "split.csv", "id,path,label,split\na,x.png,l,validation\n");
  CHECK_THROWS_AS(read_manifest(dir / "split.csv"), ValidationError);
}

TEST_CASE("parallel_for visits each index once and propagates errors") {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; }, 4);
  for (auto& h : hits) CHECK(h.load() == 1);
  CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) { if (i == 3) throw IoError("boom"); }, 3), IoError);
}
