#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "wafertopo/matrix.hpp"
#include "wafertopo/persist.hpp"

namespace wafertopo {
namespace ingest {
struct Corpus;
}

namespace vectorize {

enum class Scheme { Landscape, PImage };
std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

struct LandscapeParams {
  int levels = 3;
  int samples = 16;
  double t_min = 0.0;
  double t_max = 1.0;

  void validate() const;
  std::size_t length() const { return static_cast<std::size_t>(levels) * samples; }
};

/// Grid over the (birth, persistence) plane: columns follow birth over
/// [t_min, t_max], rows follow persistence over [0, t_max - t_min].
struct PersistenceImageParams {
  int rows = 8;
  int cols = 8;
  double sigma = 0.0;           // 0 means sigma_fraction * (t_max - t_min)
  double sigma_fraction = 0.05;
  double t_min = 0.0;
  double t_max = 1.0;

  void validate() const;
  double resolved_sigma() const { return sigma > 0.0 ? sigma : sigma_fraction * (t_max - t_min); }
  std::size_t length() const { return static_cast<std::size_t>(rows) * cols; }
};

/// lambda_k(t) sampled on samples evenly spaced points of [t_min, t_max]
/// (both ends included), level-major. Infinite deaths are cut at t_max.
std::vector<double> landscape(const persist::PersistenceDiagram& d, const LandscapeParams& p);

/// Gaussian mass of each point, weighted by its persistence, integrated
/// exactly over every grid cell; row-major.
std::vector<double> persistence_image(const persist::PersistenceDiagram& d, const PersistenceImageParams& p);

struct FeatureParams {
  Scheme scheme = Scheme::Landscape;
  LandscapeParams landscape;
  PersistenceImageParams pimage;

  /// Sets [t_min, t_max] on both sub-parameter sets.
  void set_range(double t_min, double t_max);
  std::size_t block_length() const;
  std::size_t length() const { return 2 * block_length(); }
};

/// Unstandardized concat(vec(H0), vec(H1)).
std::vector<double> feature_vector(const persist::DiagramPair& d, const FeatureParams& p);

struct FeatureSet {
  LabeledMatrix matrix;  // standardized rows
  FeatureParams params;  // with the resolved corpus range
  persist::FiltrationMode mode = persist::FiltrationMode::Sublevel;
  std::vector<double> mean;
  std::vector<double> scale;  // sqrt(max(var, 1e-8))

  std::size_t h0_length() const { return params.block_length(); }
};

constexpr double kVarianceFloor = 1e-8;

/// Vectorizes precomputed signatures. The range is [0, largest max_value]
/// unless the signatures are empty or flat, then [0, 1].
FeatureSet featurize_signatures(const std::vector<std::string>& ids, const std::vector<persist::TdaSignature>& sigs,
                                persist::FiltrationMode mode, FeatureParams params);

/// Signatures are computed in parallel; the result does not depend on the
/// thread count.
FeatureSet featurize_corpus(const ingest::Corpus& corpus, persist::FiltrationMode mode, FeatureParams params);

/// Column-wise (x - mean) / sqrt(max(var, floor)) in place; returns (mean, scale).
std::pair<std::vector<double>, std::vector<double>> standardize(std::vector<double>& rows, std::size_t n, std::size_t d);

/// Vectorizes a new corpus with the range, mode and standardization of an
/// existing feature set, so the rows are comparable with the reference rows.
FeatureSet featurize_with(const ingest::Corpus& corpus, const FeatureSet& reference);

/// WTE1 matrix at `path` plus a JSON sidecar at path + ".json".
void save_features(const std::filesystem::path& path, const FeatureSet& f);
FeatureSet load_features(const std::filesystem::path& path);
std::string features_json(const FeatureSet& f);
/// Inverse of features_json; the matrix is left empty.
FeatureSet parse_features_json(const std::string& text);

}  // namespace vectorize
}  // namespace wafertopo
