#include "wafertopo/vectorize.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "json.hpp"
#include "wafertopo/error.hpp"
#include "wafertopo/ingest.hpp"
#include "wafertopo/io.hpp"
#include "wafertopo/parallel.hpp"

namespace wafertopo::vectorize {

using persist::Interval;
using persist::PersistenceDiagram;
using json = nlohmann::json;

std::string to_string(Scheme s) { return s == Scheme::Landscape ? "landscape" : "pimage"; }

Scheme scheme_from_string(const std::string& s) {
  if (s == "landscape") return Scheme::Landscape;
  if (s == "pimage") return Scheme::PImage;
  throw ValidationError("unknown vectorization scheme '" + s + "' (expected landscape|pimage)");
}

void LandscapeParams::validate() const {
  if (levels <= 0 || samples <= 0) throw ValidationError("landscape: levels and samples must be positive");
  if (!(t_min < t_max)) throw ValidationError("landscape: t_min must be < t_max");
}

void PersistenceImageParams::validate() const {
  if (rows <= 0 || cols <= 0) throw ValidationError("persistence image: grid must be positive");
  if (!(t_min < t_max)) throw ValidationError("persistence image: t_min must be < t_max");
  if (!(resolved_sigma() > 0.0)) throw ValidationError("persistence image: sigma must be positive");
}

std::vector<double> landscape(const PersistenceDiagram& d, const LandscapeParams& p) {
  p.validate();
  const auto k_max = static_cast<std::size_t>(p.levels);
  const auto n = static_cast<std::size_t>(p.samples);
  std::vector<double> out(k_max * n, 0.0);
  std::vector<double> tents;
  tents.reserve(d.size());
  const double step = n > 1 ? (p.t_max - p.t_min) / static_cast<double>(n - 1) : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = n > 1 ? p.t_min + step * static_cast<double>(i) : 0.5 * (p.t_min + p.t_max);
    tents.clear();
    for (const Interval& iv : d.intervals) {
      const double death = std::min(iv.death, p.t_max);
      const double v = std::min(t - iv.birth, death - t);
      if (v > 0.0) tents.push_back(v);
    }
    const std::size_t k = std::min(k_max, tents.size());
    std::partial_sort(tents.begin(), tents.begin() + static_cast<std::ptrdiff_t>(k), tents.end(), std::greater<>());
    for (std::size_t level = 0; level < k; ++level) out[level * n + i] = tents[level];
  }
  return out;
}

std::vector<double> persistence_image(const PersistenceDiagram& d, const PersistenceImageParams& p) {
  p.validate();
  const double sigma = p.resolved_sigma();
  const double range = p.t_max - p.t_min;
  const double cw = range / p.cols;  // birth axis
  const double ch = range / p.rows;  // persistence axis
  std::vector<double> out(p.length(), 0.0);
  std::vector<double> gx(static_cast<std::size_t>(p.cols)), gy(static_cast<std::size_t>(p.rows));
  const double inv = 1.0 / (sigma * std::sqrt(2.0));
  auto cdf = [inv](double z) { return 0.5 * std::erfc(-z * inv); };
  for (const Interval& iv : d.intervals) {
    const double death = std::min(iv.death, p.t_max);
    const double pers = death - iv.birth;
    if (pers <= 0.0) continue;  // weight vanishes
    for (int c = 0; c < p.cols; ++c) {
      const double x0 = p.t_min + c * cw;
      gx[static_cast<std::size_t>(c)] = cdf(x0 + cw - iv.birth) - cdf(x0 - iv.birth);
    }
    for (int r = 0; r < p.rows; ++r) {
      const double y0 = r * ch;
      gy[static_cast<std::size_t>(r)] = cdf(y0 + ch - pers) - cdf(y0 - pers);
    }
    for (int r = 0; r < p.rows; ++r)
      for (int c = 0; c < p.cols; ++c)
        out[static_cast<std::size_t>(r) * p.cols + c] += pers * gy[static_cast<std::size_t>(r)] * gx[static_cast<std::size_t>(c)];
  }
  return out;
}

void FeatureParams::set_range(double t_min, double t_max) {
  landscape.t_min = pimage.t_min = t_min;
  landscape.t_max = pimage.t_max = t_max;
}

std::size_t FeatureParams::block_length() const {
  return scheme == Scheme::Landscape ? landscape.length() : pimage.length();
}

std::vector<double> feature_vector(const persist::DiagramPair& d, const FeatureParams& p) {
  auto one = [&](const PersistenceDiagram& diag) {
    return p.scheme == Scheme::Landscape ? landscape(diag, p.landscape) : persistence_image(diag, p.pimage);
  };
  std::vector<double> v = one(d.h0);
  const std::vector<double> h1 = one(d.h1);
  v.insert(v.end(), h1.begin(), h1.end());
  return v;
}

std::pair<std::vector<double>, std::vector<double>> standardize(std::vector<double>& rows, std::size_t n, std::size_t d) {
  std::vector<double> mean(d, 0.0), scale(d, 1.0);
  if (n == 0) return {mean, scale};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += rows[i * d + j];
  for (double& m : mean) m /= static_cast<double>(n);
  std::vector<double> var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = rows[i * d + j] - mean[j];
      var[j] += c * c;
    }
  for (std::size_t j = 0; j < d; ++j) scale[j] = std::sqrt(std::max(var[j] / static_cast<double>(n), kVarianceFloor));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) rows[i * d + j] = (rows[i * d + j] - mean[j]) / scale[j];
  return {mean, scale};
}

FeatureSet featurize_signatures(const std::vector<std::string>& ids, const std::vector<persist::TdaSignature>& sigs,
                                persist::FiltrationMode mode, FeatureParams params) {
  if (ids.size() != sigs.size()) throw ValidationError("featurize: ids and signatures differ in length");
  double hi = 0.0;
  for (const auto& s : sigs) hi = std::max(hi, s.max_value);
  if (!(hi > 0.0)) hi = 1.0;
  params.set_range(0.0, hi);
  params.landscape.validate();
  params.pimage.validate();

  const std::size_t n = sigs.size(), d = params.length();
  std::vector<double> rows(n * d);
  parallel_for(n, [&](std::size_t i) {
    const auto v = feature_vector(sigs[i].diagrams, params);
    std::copy(v.begin(), v.end(), rows.begin() + static_cast<std::ptrdiff_t>(i * d));
  });
  FeatureSet fs;
  fs.params = params;
  fs.mode = mode;
  std::tie(fs.mean, fs.scale) = standardize(rows, n, d);
  fs.matrix = LabeledMatrix(ids, d);
  for (std::size_t k = 0; k < rows.size(); ++k) fs.matrix.data[k] = static_cast<float>(rows[k]);
  return fs;
}

FeatureSet featurize_corpus(const ingest::Corpus& corpus, persist::FiltrationMode mode, FeatureParams params) {
  std::vector<persist::TdaSignature> sigs(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) { sigs[i] = persist::tda_signature(corpus.items[i], mode); });
  return featurize_signatures(corpus.ids(), sigs, mode, params);
}

std::string features_json(const FeatureSet& f) {
  json j;
  j["scheme"] = to_string(f.params.scheme);
  j["mode"] = persist::to_string(f.mode);
  j["t_min"] = f.params.landscape.t_min;
  j["t_max"] = f.params.landscape.t_max;
  j["landscape"] = {{"levels", f.params.landscape.levels}, {"samples", f.params.landscape.samples}};
  j["pimage"] = {{"rows", f.params.pimage.rows},
                 {"cols", f.params.pimage.cols},
                 {"sigma", f.params.pimage.sigma},
                 {"sigma_fraction", f.params.pimage.sigma_fraction}};
  j["length"] = f.params.length();
  j["h0_length"] = f.h0_length();
  j["variance_floor"] = kVarianceFloor;
  j["mean"] = f.mean;
  j["scale"] = f.scale;
  return j.dump(2);
}

void save_features(const std::filesystem::path& path, const FeatureSet& f) {
  save_matrix(path, f.matrix);
  std::filesystem::path side = path;
  side += ".json";
  write_text_atomic(side, features_json(f) + "\n");
}

FeatureSet parse_features_json(const std::string& text) {
  FeatureSet f;
  try {
    const json j = json::parse(text);
    f.params.scheme = scheme_from_string(j.at("scheme").get<std::string>());
    f.mode = persist::filtration_mode_from_string(j.at("mode").get<std::string>());
    f.params.landscape.levels = j.at("landscape").at("levels").get<int>();
    f.params.landscape.samples = j.at("landscape").at("samples").get<int>();
    f.params.pimage.rows = j.at("pimage").at("rows").get<int>();
    f.params.pimage.cols = j.at("pimage").at("cols").get<int>();
    f.params.pimage.sigma = j.at("pimage").at("sigma").get<double>();
    f.params.pimage.sigma_fraction = j.at("pimage").at("sigma_fraction").get<double>();
    f.params.set_range(j.at("t_min").get<double>(), j.at("t_max").get<double>());
    f.mean = j.at("mean").get<std::vector<double>>();
    f.scale = j.at("scale").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("feature parameters: ") + e.what());
  } catch (const ValidationError& e) {
    throw FormatError(std::string("feature parameters: ") + e.what());
  }
  if (f.mean.size() != f.params.length() || f.scale.size() != f.params.length())
    throw FormatError("feature parameters: mean/scale length does not match the scheme");
  for (double v : f.scale)
    if (!(v > 0.0) || !std::isfinite(v)) throw FormatError("feature parameters: scale must be positive");
  return f;
}

FeatureSet load_features(const std::filesystem::path& path) {
  std::filesystem::path side = path;
  side += ".json";
  const auto bytes = read_file(side);
  FeatureSet f;
  try {
    f = parse_features_json(std::string(bytes.begin(), bytes.end()));
  } catch (const FormatError& e) {
    throw FormatError(side.string() + ": " + e.what());
  }
  f.matrix = load_matrix(path);
  if (f.params.length() != f.matrix.cols) throw FormatError("feature sidecar does not match matrix width");
  return f;
}

FeatureSet featurize_with(const ingest::Corpus& corpus, const FeatureSet& reference) {
  const std::size_t d = reference.params.length();
  if (reference.mean.size() != d || reference.scale.size() != d)
    throw ValidationError("featurize: reference has no standardization parameters");
  std::vector<persist::TdaSignature> sigs(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) { sigs[i] = persist::tda_signature(corpus.items[i], reference.mode); });
  FeatureSet fs;
  fs.params = reference.params;
  fs.mode = reference.mode;
  fs.mean = reference.mean;
  fs.scale = reference.scale;
  fs.matrix = LabeledMatrix(corpus.ids(), d);
  parallel_for(corpus.size(), [&](std::size_t i) {
    const auto v = feature_vector(sigs[i].diagrams, fs.params);
    for (std::size_t k = 0; k < d; ++k) fs.matrix.row(i)[k] = static_cast<float>((v[k] - fs.mean[k]) / fs.scale[k]);
  });
  return fs;
}

}  // namespace wafertopo::vectorize
