#include <cmath>

#include "doctest.h"
#include "test_util.hpp"
#include "wafertopo/error.hpp"
#include "wafertopo/ingest.hpp"
#include "wafertopo/rng.hpp"
#include "wafertopo/synthgen.hpp"
#include "wafertopo/vectorize.hpp"

using namespace wafertopo;
using namespace wafertopo::vectorize;
using persist::Interval;
using persist::kInf;
using persist::PersistenceDiagram;

namespace {

PersistenceDiagram diag(std::vector<Interval> iv) { return {1, std::move(iv)}; }

PersistenceDiagram random_diagram(std::uint64_t seed, int n) {
  Rng r(seed, 0);
  PersistenceDiagram d{1, {}};
  for (int i = 0; i < n; ++i) {
    const double b = r.uniform(0.0, 0.8);
    d.intervals.push_back({b, b + r.uniform(0.0, 0.5)});
  }
  return d;
}

// Direct evaluation of lambda_k(t) as the k-th largest tent value.
double lambda(const PersistenceDiagram& d, int k, double t) {
  std::vector<double> v;
  for (const auto& iv : d.intervals) v.push_back(std::max(0.0, std::min(t - iv.birth, iv.death - t)));
  std::sort(v.rbegin(), v.rend());
  return k <= static_cast<int>(v.size()) ? v[static_cast<std::size_t>(k - 1)] : 0.0;
}

}  // namespace

TEST_CASE("landscape examples") {
  LandscapeParams p{3, 5, 0.0, 4.0};  // samples at 0,1,2,3,4
  const auto empty = landscape(diag({}), p);
  CHECK(empty.size() == 15);
  for (double v : empty) CHECK(v == 0.0);

  const auto one = landscape(diag({{1, 3}}), p);
  CHECK(one[2] == 1.0);
  CHECK(one[1] == 0.0);
  CHECK(one[3] == 0.0);
  for (std::size_t i = 5; i < 15; ++i) CHECK(one[i] == 0.0);

  LandscapeParams q{2, 3, 0.5, 2.5};  // samples at 0.5, 1.5, 2.5
  const auto two = landscape(diag({{0, 2}, {1, 3}}), q);
  CHECK(two[3 + 1] == doctest::Approx(0.5));
  CHECK(two[1] == doctest::Approx(0.5));
}

TEST_CASE("landscape matches direct evaluation and obeys ordering and Lipschitz bounds") {
  LandscapeParams p{4, 16, 0.0, 1.3};
  const double step = 1.3 / 15;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto d = random_diagram(s, 7);
    const auto v = landscape(d, p);
    for (int k = 1; k <= 4; ++k)
      for (int i = 0; i < 16; ++i) {
        const double got = v[static_cast<std::size_t>((k - 1) * 16 + i)];
        CHECK(got == doctest::Approx(lambda(d, k, step * i)).epsilon(1e-12));
        CHECK(got >= 0.0);
        if (k < 4) CHECK(got >= v[static_cast<std::size_t>(k * 16 + i)]);
        if (i < 15) CHECK(std::abs(v[static_cast<std::size_t>((k - 1) * 16 + i + 1)] - got) <= step + 1e-12);
      }
  }
}

TEST_CASE("infinite intervals are truncated at t_max") {
  LandscapeParams p{1, 3, 0.0, 2.0};
  const auto v = landscape(diag({{0.0, kInf}}), p);
  CHECK(v == landscape(diag({{0.0, 2.0}}), p));
  PersistenceImageParams q;
  q.t_max = 2.0;
  CHECK(persistence_image(diag({{0.0, kInf}}), q) == persistence_image(diag({{0.0, 2.0}}), q));
}

TEST_CASE("persistence image examples") {
  PersistenceImageParams p;
  p.t_max = 1.0;
  const auto empty = persistence_image(diag({}), p);
  CHECK(empty.size() == 64);
  for (double v : empty) CHECK(v == 0.0);

  // point at the centre of cell (row 3, col 2); cell width 1/8
  const double cw = 1.0 / 8;
  p.sigma = cw / 10;
  const double b = 2.5 * cw, pers = 3.5 * cw;
  const auto img = persistence_image(diag({{b, b + pers}}), p);
  double total = 0;
  for (double v : img) total += v;
  CHECK(img[3 * 8 + 2] >= 0.99 * pers);
  CHECK(total == doctest::Approx(pers).epsilon(1e-9));

  p.sigma = 0.0;
  const auto d = random_diagram(3, 5);
  auto twice = d;
  twice.intervals.insert(twice.intervals.end(), d.intervals.begin(), d.intervals.end());
  const auto a = persistence_image(d, p), c = persistence_image(twice, p);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] >= 0.0);
    CHECK(c[i] == doctest::Approx(2 * a[i]).epsilon(1e-14));
  }
}

TEST_CASE("persistence image cell integral matches numeric quadrature") {
  PersistenceImageParams p;
  p.rows = p.cols = 4;
  p.t_max = 1.0;
  p.sigma = 0.1;
  const Interval iv{0.3, 0.7};
  const auto img = persistence_image(diag({iv}), p);
  const double pers = 0.4;
  const int m = 200;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      double acc = 0;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
          const double x = (c + (j + 0.5) / m) * 0.25, y = (r + (i + 0.5) / m) * 0.25;
          const double dx = x - 0.3, dy = y - pers;
          acc += std::exp(-(dx * dx + dy * dy) / (2 * 0.01)) / (2 * M_PI * 0.01);
        }
      acc *= pers * (0.25 / m) * (0.25 / m);
      CHECK(img[static_cast<std::size_t>(r * 4 + c)] == doctest::Approx(acc).epsilon(1e-4));
    }
}

TEST_CASE("parameter validation and vector lengths") {
  CHECK_THROWS_AS(landscape(diag({}), {0, 4, 0, 1}), ValidationError);
  CHECK_THROWS_AS(landscape(diag({}), {1, 4, 1, 1}), ValidationError);
  FeatureParams fp;
  CHECK(fp.length() == 96);
  fp.scheme = Scheme::PImage;
  CHECK(fp.length() == 128);
  CHECK(scheme_from_string("pimage") == Scheme::PImage);
  CHECK_THROWS_AS(scheme_from_string("betti"), ValidationError);
}

TEST_CASE("featurize: identical items standardize to zero, empty corpus is empty") {
  ingest::Corpus c;
  c.target_size = {6, 6};
  for (int i = 0; i < 4; ++i) {
    GrayImage img(6, 6, 0.2f);
    img.at(2, 2) = 0.9f;
    img.at(3, 3) = 0.6f;
    c.items.push_back({"i" + std::to_string(i), img, std::nullopt, std::nullopt});
  }
  const auto fs = featurize_corpus(c, persist::FiltrationMode::Sublevel, {});
  CHECK(fs.matrix.rows() == 4);
  CHECK(fs.matrix.cols == 96);
  for (float v : fs.matrix.data) CHECK(v == 0.0f);
  CHECK(fs.params.landscape.t_max == doctest::Approx(0.9));

  ingest::Corpus empty;
  const auto e = featurize_corpus(empty, persist::FiltrationMode::Sublevel, {});
  CHECK(e.matrix.rows() == 0);
  CHECK(e.matrix.cols == 96);
}

TEST_CASE("standardized columns have zero mean and unit variance") {
  std::vector<double> rows{1, 5, 2, 5, 3, 5, 6, 5};
  auto [mean, scale] = standardize(rows, 4, 2);
  CHECK(mean[0] == doctest::Approx(3.0));
  CHECK(scale[1] == doctest::Approx(1e-4));
  double m = 0, v = 0;
  for (int i = 0; i < 4; ++i) m += rows[static_cast<std::size_t>(2 * i)];
  for (int i = 0; i < 4; ++i) v += rows[static_cast<std::size_t>(2 * i)] * rows[static_cast<std::size_t>(2 * i)];
  CHECK(m == doctest::Approx(0.0));
  CHECK(v / 4 == doctest::Approx(1.0));
  for (int i = 0; i < 4; ++i) CHECK(rows[static_cast<std::size_t>(2 * i + 1)] == 0.0);
}

TEST_CASE("SWED donut H1 block outweighs center H1 block") {
  ingest::Corpus c;
  c.target_size = {8, 8};
  std::vector<std::string> labels;
  for (WaferClass k : {WaferClass::Donut, WaferClass::Center})
    for (int s = 0; s < 10; ++s) {
      ingest::CorpusItem it;
      it.id = std::string(to_string(k)) + std::to_string(s);
      it.image = GrayImage(8, 8);
      it.grid = synth::gen_swed_grid(k, synth::swed_item_seed(1, k, s));
      c.items.push_back(it);
      labels.emplace_back(to_string(k));
    }
  const auto fs = featurize_corpus(c, persist::FiltrationMode::Distance, {});
  const std::size_t h0 = fs.h0_length();
  double donut = 0, center = 0;
  for (std::size_t i = 0; i < fs.matrix.rows(); ++i) {
    // norm of the raw (de-standardized) H1 block
    double n2 = 0;
    for (std::size_t j = h0; j < fs.matrix.cols; ++j) {
      const double raw = fs.matrix.row(i)[j] * fs.scale[j] + fs.mean[j];
      n2 += raw * raw;
    }
    (labels[i] == "Donut" ? donut : center) += std::sqrt(n2) / 10;
  }
  CHECK(donut > center);
}

TEST_CASE("feature dump round trip") {
  const auto dir = testutil::scratch_dir("features");
  ingest::Corpus c;
  c.target_size = {5, 5};
  for (int i = 0; i < 3; ++i) {
    GrayImage img(5, 5, 0.1f * i);
    img.at(i, i) = 0.8f;
    c.items.push_back({"x" + std::to_string(i), img, std::nullopt, std::nullopt});
  }
  FeatureParams fp;
  fp.scheme = Scheme::PImage;
  const auto fs = featurize_corpus(c, persist::FiltrationMode::Sublevel, fp);
  save_features(dir / "f.bin", fs);
  const auto back = load_features(dir / "f.bin");
  CHECK(back.matrix == fs.matrix);
  CHECK(back.params.scheme == Scheme::PImage);
  CHECK(back.params.pimage.t_max == fs.params.pimage.t_max);
  CHECK(back.mean == fs.mean);
  CHECK(back.mode == persist::FiltrationMode::Sublevel);
}

TEST_CASE("featurize_with reuses recorded parameters") {
  ingest::Corpus c;
  c.target_size = {6, 6};
  for (int i = 0; i < 4; ++i) {
    GrayImage img(6, 6, 0.05f * i);
    img.at(i, 5 - i) = 0.9f;
    img.at(5 - i, i) = 0.6f;
    c.items.push_back({"y" + std::to_string(i), img, std::nullopt, std::nullopt});
  }
  const auto ref = featurize_corpus(c, persist::FiltrationMode::Sublevel, FeatureParams{});
  const auto parsed = parse_features_json(features_json(ref));
  CHECK(parsed.mean == ref.mean);
  CHECK(parsed.scale == ref.scale);
  CHECK(parsed.params.landscape.t_max == ref.params.landscape.t_max);

  // same corpus, same parameters: identical rows
  CHECK(featurize_with(c, parsed).matrix == ref.matrix);

  // a subset keeps the reference standardization instead of refitting
  ingest::Corpus one = c;
  one.items.resize(1);
  const auto sub = featurize_with(one, parsed);
  REQUIRE(sub.matrix.rows() == 1);
  for (std::size_t j = 0; j < sub.matrix.cols; ++j) CHECK(sub.matrix.row(0)[j] == ref.matrix.row(0)[j]);

  CHECK_THROWS_AS(parse_features_json("{}"), FormatError);
  CHECK_THROWS_AS(parse_features_json("nope"), FormatError);
}
