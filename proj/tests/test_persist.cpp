#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "persist_oracle.hpp"
#include "wafertopo/error.hpp"
#include "wafertopo/ingest.hpp"
#include "wafertopo/persist.hpp"
#include "wafertopo/rng.hpp"
#include "wafertopo/synthgen.hpp"

using namespace wafertopo;
using namespace wafertopo::persist;

namespace {

GrayImage random_image(int w, int h, std::uint64_t seed, int levels = 0) {
  Rng r(seed, 0);
  GrayImage img(w, h);
  for (float& v : img.values)
    v = levels > 0 ? static_cast<float>(r.uniform_int(0, levels - 1)) / static_cast<float>(levels)
                   : static_cast<float>(r.uniform());
  return img;
}

std::size_t strong_h1(const TdaSignature& s) {
  return static_cast<std::size_t>(std::count_if(s.diagrams.h1.intervals.begin(), s.diagrams.h1.intervals.end(),
                                                [&](const Interval& iv) { return iv.persistence() >= 0.5 * s.max_value; }));
}

}  // namespace

TEST_CASE("filtration cell counts") {
  for (auto [w, h] : {std::pair{1, 1}, {2, 2}, {3, 5}, {7, 1}}) {
    const auto f = build_filtration(GrayImage(w, h));
    CHECK(f.vertex_count() == static_cast<std::size_t>(w * h));
    CHECK(f.edge_count() == static_cast<std::size_t>((w - 1) * h + w * (h - 1)));
    CHECK(f.square_count() == static_cast<std::size_t>((w - 1) * (h - 1)));
    CHECK(f.size() == static_cast<std::size_t>(w * h + (w - 1) * h + w * (h - 1) + (w - 1) * (h - 1)));
  }
  const auto one = build_filtration(GrayImage(1, 1));
  CHECK(one.size() == 1);
  CHECK_THROWS_AS(build_filtration(GrayImage()), ValidationError);
}

TEST_CASE("square values are the max of each 2x2 block") {
  GrayImage img(3, 3);
  for (int i = 0; i < 9; ++i) img.values[i] = static_cast<float>(i) / 8.0f;
  const auto f = build_filtration(img);
  CHECK(f.value(f.square_id(0, 0)) == doctest::Approx(4.0 / 8));
  CHECK(f.value(f.square_id(1, 0)) == doctest::Approx(5.0 / 8));
  CHECK(f.value(f.square_id(0, 1)) == doctest::Approx(7.0 / 8));
  CHECK(f.value(f.square_id(1, 1)) == doctest::Approx(8.0 / 8));
}

TEST_CASE("face values never exceed coface values") {
  const auto f = build_filtration(random_image(9, 6, 17));
  for (std::size_t c = 0; c < f.size(); ++c)
    for (std::size_t b : f.boundary(c)) {
      CHECK(f.dim(b) == f.dim(c) - 1);
      CHECK(f.value(b) <= f.value(c));
    }
}

TEST_CASE("constant and ring images") {
  const auto flat = compute_persistence(build_filtration(GrayImage(5, 4, 0.3f)));
  REQUIRE(flat.h0.size() == 1);
  CHECK(flat.h0.intervals[0].birth == doctest::Approx(0.3));
  CHECK(flat.h0.intervals[0].infinite());
  CHECK(flat.h1.empty());

  GrayImage ring(3, 3, 0.0f);
  ring.at(1, 1) = 1.0f;
  const auto d = compute_persistence(build_filtration(ring));
  CHECK(d.h0.intervals == std::vector<Interval>{{0.0, kInf}});
  CHECK(d.h1.intervals == std::vector<Interval>{{0.0, 1.0}});
}

TEST_CASE("optimized reduction equals the naive oracle") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    CAPTURE(s);
    // quantized values force plenty of ties
    const auto img = random_image(6, 6, 100 + s, s % 2 ? 0 : 5);
    const auto fast = compute_persistence(build_filtration(img));
    const auto slow = oracle::naive_persistence(img);
    CHECK(fast.h0.intervals == slow.h0.intervals);
    CHECK(fast.h1.intervals == slow.h1.intervals);
  }
}

TEST_CASE("intervals are well formed with one essential class") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto d = compute_persistence(build_filtration(random_image(8, 7, s)));
    CHECK(d.h0.infinite_count() == 1);
    CHECK(d.h1.infinite_count() == 0);
    for (const auto* diag : {&d.h0, &d.h1})
      for (const auto& iv : diag->intervals) CHECK(iv.birth < iv.death);
  }
}

TEST_CASE("euler characteristic and pair accounting") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto f = build_filtration(random_image(7, 9, 50 + s, 4));
    const auto d = compute_persistence(f, {true});
    // essential classes give the Betti numbers of the full grid
    const long chi = static_cast<long>(d.h0.infinite_count()) - static_cast<long>(d.h1.infinite_count());
    const long cells_chi = static_cast<long>(f.vertex_count()) - static_cast<long>(f.edge_count()) +
                           static_cast<long>(f.square_count());
    CHECK(chi == 1);
    CHECK(cells_chi == 1);
    // every cell is either half of a pair or essential
    const std::size_t finite = d.h0.size() + d.h1.size() - d.h0.infinite_count() - d.h1.infinite_count();
    CHECK(2 * finite + d.h0.infinite_count() + d.h1.infinite_count() == f.size());
  }
}

TEST_CASE("shifting the image shifts the diagram") {
  const double c = 0.25;
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto img = random_image(8, 8, 300 + s, 64);  // dyadic values keep the shift exact
    const auto a = compute_persistence(build_filtration(img));
    for (float& v : img.values) v += static_cast<float>(c);
    const auto b = compute_persistence(build_filtration(img));
    REQUIRE(a.h0.size() == b.h0.size());
    REQUIRE(a.h1.size() == b.h1.size());
    for (std::size_t i = 0; i < a.h0.size(); ++i) {
      CHECK(b.h0.intervals[i].birth == a.h0.intervals[i].birth + c);
      if (!a.h0.intervals[i].infinite()) CHECK(b.h0.intervals[i].death == a.h0.intervals[i].death + c);
    }
    for (std::size_t i = 0; i < a.h1.size(); ++i) {
      CHECK(b.h1.intervals[i].birth == a.h1.intervals[i].birth + c);
      CHECK(b.h1.intervals[i].death == a.h1.intervals[i].death + c);
    }
  }
}

TEST_CASE("bottleneck stability under small perturbations") {
  const double eps = 0.01;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto img = random_image(8, 8, 500 + s);
    auto noisy = img;
    Rng r(900 + s, 0);
    for (float& v : noisy.values) v += static_cast<float>(r.uniform(-eps, eps));
    const auto a = compute_persistence(build_filtration(img));
    const auto b = compute_persistence(build_filtration(noisy));
    CHECK(oracle::bottleneck(a.h0.intervals, b.h0.intervals) <= eps + 1e-6);
    CHECK(oracle::bottleneck(a.h1.intervals, b.h1.intervals) <= eps + 1e-6);
  }
  CHECK(oracle::bottleneck({{0, 2}}, {}) == doctest::Approx(1.0));
  CHECK(oracle::bottleneck({{0, kInf}}, {{0.5, kInf}}) == doctest::Approx(0.5));
}

TEST_CASE("distance filtration matches brute force") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    Rng r(s, 0);
    WaferGrid g(10, 10);
    for (auto& c : g.cells) c = r.bernoulli(0.1) ? kFail : kPass;
    g.at(static_cast<int>(s), 3) = kFail;
    const auto img = distance_filtration(g);
    const double diag = std::hypot(10.0, 10.0);
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 10; ++x) {
        double best = 1e9;
        for (int v = 0; v < 10; ++v)
          for (int u = 0; u < 10; ++u)
            if (g.at(u, v) == kFail) best = std::min(best, std::hypot(double(x - u), double(y - v)));
        CHECK(img.at(x, y) == doctest::Approx(best / diag).epsilon(1e-6));
      }
  }
}

TEST_CASE("distance filtration edge cases") {
  WaferGrid g(9, 9);
  for (auto& c : g.cells) c = kPass;
  g.at(4, 4) = kFail;
  const auto img = distance_filtration(g);
  CHECK(img.at(4, 4) == 0.0f);
  CHECK(img.at(5, 4) > 0.0f);
  CHECK(img.at(6, 4) > img.at(5, 4));

  WaferGrid none(6, 6);
  for (auto& c : none.cells) c = kPass;
  for (float v : distance_filtration(none).values) CHECK(v == 1.0f);

  WaferGrid all(6, 6);
  for (auto& c : all.cells) c = kFail;
  all.at(0, 0) = kBackground;
  for (float v : distance_filtration(all).values) CHECK(v == 0.0f);
}

TEST_CASE("ring classes carry a dominant loop, blob classes do not") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    CHECK(strong_h1(signature_distance(synth::gen_swed_grid(WaferClass::Donut, seed))) == 1);
    CHECK(strong_h1(signature_distance(synth::gen_swed_grid(WaferClass::EdgeRing, seed))) >= 1);
    CHECK(strong_h1(signature_distance(synth::gen_swed_grid(WaferClass::Center, seed))) == 0);
    CHECK(strong_h1(signature_distance(synth::gen_swed_grid(WaferClass::None, seed))) == 0);
  }
}

TEST_CASE("tda_signature dispatch") {
  ingest::CorpusItem item{"a", GrayImage(4, 4, 0.5f), std::nullopt, std::nullopt};
  const auto s = tda_signature(item, FiltrationMode::Sublevel);
  CHECK(s.diagrams.h0.size() == 1);
  CHECK(s.diagrams.h1.empty());
  CHECK_THROWS_AS(tda_signature(item, FiltrationMode::Distance), ValidationError);
  CHECK(filtration_mode_from_string("distance") == FiltrationMode::Distance);
  CHECK_THROWS_AS(filtration_mode_from_string("rips"), ValidationError);
}

TEST_CASE("diagram csv round trip") {
  DiagramPair d;
  d.h0.intervals = {{0.1, 0.5}, {0.0, kInf}};
  d.h1.intervals = {{0.2, 0.30000000000000004}};
  const auto text = format_diagram_csv(d);
  CHECK(text.rfind("dim,birth,death\n", 0) == 0);
  CHECK(text.find("0,0,inf") != std::string::npos);
  const auto back = parse_diagram_csv(text);
  CHECK(back.h0.intervals == d.h0.intervals);
  CHECK(back.h1.intervals == d.h1.intervals);
  CHECK_THROWS_AS(parse_diagram_csv("dim,birth,death\n2,0,1\n"), FormatError);
}
