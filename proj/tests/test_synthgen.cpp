#include <cmath>
#include <map>
#include <cstring>
#include <set>

#include "doctest.h"
#include "test_util.hpp"
#include "wafertopo/error.hpp"
#include "wafertopo/io.hpp"
#include "wafertopo/persist.hpp"
#include "wafertopo/synthgen.hpp"

using namespace wafertopo;
using namespace wafertopo::synth;

namespace {

SpvdConfig small_spvd(int count) {
  SpvdConfig c;
  c.image_count = count;
  return c;
}

std::size_t strong_h1(const WaferGrid& g) {
  const auto sig = persist::signature_distance(g);
  std::size_t n = 0;
  for (const auto& iv : sig.diagrams.h1.intervals)
    if (iv.persistence() >= 0.5 * sig.max_value) ++n;
  return n;
}

}  // namespace

TEST_CASE("gaussian kernel follows the derived sigma rule") {
  const auto k = gaussian_kernel(3);
  // k=3: sigma = 0.8, taps proportional to exp(-1/1.28), 1, exp(-1/1.28)
  const double e = std::exp(-1.0 / 1.28);
  CHECK(k[0] == doctest::Approx(e / (1 + 2 * e)));
  CHECK(k[1] == doctest::Approx(1 / (1 + 2 * e)));
  double sum = 0;
  for (double t : gaussian_kernel(65)) sum += t;
  CHECK(sum == doctest::Approx(1.0));
  CHECK_THROWS_AS(gaussian_kernel(4), ValidationError);
}

TEST_CASE("blur keeps constants and reflects borders") {
  std::vector<float> p(30, 0.25f);
  gaussian_blur(p, 6, 5, 5);
  for (float v : p) CHECK(v == doctest::Approx(0.25f));
}

TEST_CASE("jet colormap endpoints") {
  CHECK(jet_color(0) == std::array<std::uint8_t, 3>{0, 0, 128});
  CHECK(jet_color(255) == std::array<std::uint8_t, 3>{128, 0, 0});
  const auto mid = jet_color(128);
  CHECK(mid[1] == 255);
}

TEST_CASE("spvd exterior is black and generation is deterministic") {
  const SpvdConfig cfg;
  for (bool faulty : {false, true}) {
    const auto a = gen_spvd_image(42, faulty, cfg);
    const auto b = gen_spvd_image(42, faulty, cfg);
    CHECK(a == b);
    CHECK(a.width == 400);
    std::size_t nonblack_inside = 0;
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        const auto* p = a.px(x, y);
        if (std::hypot(x - 200.0, y - 200.0) > 200.0) {
          CHECK((p[0] == 0 && p[1] == 0 && p[2] == 0));
        } else if (p[0] || p[1] || p[2]) {
          ++nonblack_inside;
        }
      }
    CHECK(nonblack_inside > 100000);
  }
}

TEST_CASE("spvd strokes only touch the defect annulus") {
  const SpvdConfig cfg;
  for (std::uint64_t seed : {42ULL, 1ULL, 99ULL}) {
    const auto good = gen_spvd_image(seed, false, cfg);
    const auto bad = gen_spvd_image(seed, true, cfg);
    std::size_t diffs = 0;
    for (int y = 0; y < 400; ++y)
      for (int x = 0; x < 400; ++x) {
        const bool differ = std::memcmp(good.px(x, y), bad.px(x, y), 3) != 0;
        if (!differ) continue;
        ++diffs;
        const double r = std::hypot(x - 200.0, y - 200.0);
        CHECK(r >= 140.0);
        CHECK(r <= 200.0);
      }
    CHECK(diffs > 0);
  }
}

TEST_CASE("spvd dataset counts, determinism and empty case") {
  const auto d1 = testutil::scratch_dir("spvd1");
  const auto d2 = testutil::scratch_dir("spvd2");
  auto cfg = small_spvd(6);
  const auto m1 = gen_spvd_dataset(cfg, d1);
  const auto m2 = gen_spvd_dataset(cfg, d2);
  REQUIRE(m1.entries.size() == 6);
  int faulty = 0;
  for (const auto& e : m1.entries) faulty += e.label == "faulty";
  CHECK(faulty == 3);
  CHECK(read_file(d1 / "manifest.csv") == read_file(d2 / "manifest.csv"));
  for (const auto& e : m1.entries) CHECK(hash_file(m1.resolve(e)) == hash_file(m2.resolve(e)));

  cfg.image_count = 7;
  cfg.faulty_fraction = 0.5;
  CHECK(cfg.faulty_count() == 3);

  const auto d3 = testutil::scratch_dir("spvd_empty");
  const auto m3 = gen_spvd_dataset(small_spvd(0), d3);
  CHECK(m3.entries.empty());
  CHECK(!std::filesystem::exists(d3 / "images"));
}

TEST_CASE("spvd config validation") {
  SpvdConfig c;
  c.canvas_px = 300;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.faulty_fraction = 1.5;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("swed grids stay in the value set and inside the wafer") {
  const SwedConfig cfg;
  const double R = cfg.wafer_radius();
  for (WaferClass c : kWaferClasses)
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto g = gen_swed_grid(c, seed, cfg);
      CHECK(g.width == 128);
      CHECK(g.class_label == c);
      for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) {
          const auto v = g.at(x, y);
          CHECK(v <= 2);
          if (std::hypot(x + 0.5 - 64, y + 0.5 - 64) > R) CHECK(v == 0);
        }
      CHECK(gen_swed_grid(c, seed, cfg) == g);
    }
}

TEST_CASE("swed class specific properties") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) CHECK(gen_swed_grid(WaferClass::None, seed).count(kFail) == 0);

  const auto nf = gen_swed_grid(WaferClass::NearFull, 7);
  const double frac = static_cast<double>(nf.count(kFail)) / static_cast<double>(nf.count(kFail) + nf.count(kPass));
  CHECK(frac >= 0.6);

  const auto donut = gen_swed_grid(WaferClass::Donut, 7);
  CHECK(strong_h1(donut) == 1);

  for (WaferClass c : {WaferClass::Center, WaferClass::Loc, WaferClass::Scratch, WaferClass::EdgeLoc}) {
    CAPTURE(to_string(c));
    CHECK(gen_swed_grid(c, 3).count(kFail) > 0);
  }
}

TEST_CASE("render_swed uses only the palette and scales blocks") {
  WaferGrid g(3, 2);
  g.at(1, 0) = kPass;
  g.at(2, 1) = kFail;
  const auto img = render_swed(g, 2);
  CHECK(img.width == 6);
  CHECK(img.height == 4);
  CHECK(std::memcmp(img.px(0, 0), kSwedPalette[0].data(), 3) == 0);
  CHECK(std::memcmp(img.px(3, 1), kSwedPalette[1].data(), 3) == 0);
  CHECK(std::memcmp(img.px(5, 3), kSwedPalette[2].data(), 3) == 0);

  const auto full = render_swed(gen_swed_grid(WaferClass::Scratch, 11));
  std::set<std::array<std::uint8_t, 3>> colours;
  for (int y = 0; y < full.height; ++y)
    for (int x = 0; x < full.width; ++x) colours.insert({full.px(x, y)[0], full.px(x, y)[1], full.px(x, y)[2]});
  for (const auto& c : colours)
    CHECK((c == kSwedPalette[0] || c == kSwedPalette[1] || c == kSwedPalette[2]));
}

TEST_CASE("swed dataset balance, determinism and label-free payloads") {
  SwedConfig cfg;
  cfg.per_class_count = 2;
  const auto d1 = testutil::scratch_dir("swed1");
  const auto d2 = testutil::scratch_dir("swed2");
  const auto m1 = gen_swed_dataset(cfg, d1);
  const auto m2 = gen_swed_dataset(cfg, d2);
  REQUIRE(m1.entries.size() == 18);
  std::map<std::string, int> hist;
  for (const auto& e : m1.entries) hist[e.label]++;
  CHECK(hist.size() == 9);
  for (const auto& [label, n] : hist) CHECK(n == 2);
  CHECK(read_file(d1 / "manifest.csv") == read_file(d2 / "manifest.csv"));

  // ids are assigned after a seeded shuffle, so label order is not class-major
  bool class_major = true;
  for (std::size_t i = 0; i + 1 < m1.entries.size(); i += 2)
    class_major = class_major && m1.entries[i].label == m1.entries[i + 1].label;
  CHECK(!class_major);

  for (const auto& e : m1.entries) {
    const auto bytes = read_file(m1.resolve(e));
    CHECK(hash_file(m2.resolve(e)) == hash_bytes(bytes));
    const std::string payload(bytes.begin(), bytes.end());
    CHECK(payload.find(e.label) == std::string::npos);
  }

  // Regenerating with a different shuffle seed moves items between ids but an
  // item's pixels depend only on its own seed.
  auto cfg2 = cfg;
  cfg2.seed = 43;
  const auto d3 = testutil::scratch_dir("swed3");
  const auto m3 = gen_swed_dataset(cfg2, d3);
  std::multiset<std::string> labels1, labels3;
  for (const auto& e : m1.entries) labels1.insert(e.label);
  for (const auto& e : m3.entries) labels3.insert(e.label);
  CHECK(labels1 == labels3);

  cfg.per_class_count = 1;
  CHECK(gen_swed_dataset(cfg, testutil::scratch_dir("swed_min")).entries.size() == 9);
}

TEST_CASE("variant dataset is half grids, half photo-like images, and deterministic") {
  const auto d1 = testutil::scratch_dir("var1");
  const auto d2 = testutil::scratch_dir("var2");
  const auto m1 = gen_variant_dataset(8, 5, d1);
  const auto m2 = gen_variant_dataset(8, 5, d2);
  REQUIRE(m1.entries.size() == 8);
  CHECK(read_file(d1 / "manifest.csv") == read_file(d2 / "manifest.csv"));
  std::set<int> widths;
  int swed = 0, spvd = 0;
  for (std::size_t i = 0; i < m1.entries.size(); ++i) {
    const auto& e = m1.entries[i];
    swed += e.label.rfind("swed:", 0) == 0;
    spvd += e.label.rfind("spvd:", 0) == 0;
    CHECK(hash_file(m1.resolve(e)) == hash_file(m2.resolve(m2.entries[i])));
    widths.insert(read_png(m1.resolve(e)).width);
  }
  CHECK(swed == 4);
  CHECK(spvd == 4);
  CHECK(widths.size() > 1);
  CHECK(gen_variant_dataset(0, 5, testutil::scratch_dir("var0")).entries.empty());
}
