#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wafertopo/matrix.hpp"

namespace wafertopo::tdamap {

enum class Metric { Euclidean, Cosine };
std::string to_string(Metric m);
Metric metric_from_string(const std::string& s);

constexpr int kNoise = -1;

/// Exact pairwise distances over the rows of an embedding matrix. Cosine rows
/// are normalized once up front, so rescaling a row never changes a distance.
class Distance {
 public:
  Distance(const LabeledMatrix& e, Metric metric);
  std::size_t size() const { return n_; }
  std::size_t dim() const { return d_; }
  Metric metric() const { return metric_; }
  double operator()(std::size_t i, std::size_t j) const;
  const double* row(std::size_t i) const { return rows_.data() + i * d_; }

 private:
  Metric metric_;
  std::size_t n_ = 0, d_ = 0;
  std::vector<double> rows_;
};

/// Full symmetric N x N matrix (row-major); zero diagonal.
std::vector<double> pairwise_distance(const LabeledMatrix& e, Metric metric);

/// Classical MDS onto two axes (landmark MDS with 256 maxmin landmarks when
/// N > 2000). Each axis is flipped so that its first nonzero coordinate is
/// positive. Rows are processed in a canonical order so the output does not
/// depend on the input order.
std::vector<std::array<double, 2>> lens_project(const LabeledMatrix& e, Metric metric);

struct MapConfig {
  double beta = 3.5;
  Metric metric = Metric::Euclidean;
  int lens_bins = 10;
  double overlap = 0.3;
  int min_node_size = 3;
  double min_cluster_fraction = 0.005;

  void validate() const;
};

struct Node {
  std::vector<std::size_t> members;  // row indices, ascending
  std::array<double, 2> centroid{};  // lens centroid
};

struct Edge {
  std::size_t a = 0, b = 0;  // a < b
  std::size_t shared = 0;
};

struct TdaMap {
  std::vector<std::string> ids;
  MapConfig config;
  double epsilon0 = 0.0;  // median nearest-neighbour distance
  std::vector<std::array<double, 2>> lens;
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  std::vector<int> assignments;  // per row: cluster id or kNoise (empty until clustered)

  std::size_t n_clusters() const;
};

/// Mapper graph: lens_bins^2 square cells of side (largest lens range)/bins
/// anchored at the lens minimum, each cell widened by
/// overlap * width on every side, single linkage inside each cell cut at
/// beta * epsilon0.
TdaMap build_map(const LabeledMatrix& e, const MapConfig& config);

/// Connected components of the nodes with at least min_node_size members.
/// Items outside them, and components below min_cluster_fraction * N, are
/// noise. Clusters are numbered by decreasing size.
std::vector<int> cluster_map(const TdaMap& map, const MapConfig& config);

/// Davies-Bouldin index over the non-noise clusters; +inf with fewer than two.
double davies_bouldin(const LabeledMatrix& e, const std::vector<int>& assignments, Metric metric);
/// davies_bouldin plus the noise fraction.
double score_map(const LabeledMatrix& e, const std::vector<int>& assignments, Metric metric);

struct GridEntry {
  double beta = 0.0;
  Metric metric = Metric::Euclidean;
  double score = 0.0;  // db + noise_fraction
  double db = 0.0;
  std::size_t n_clusters = 0;
  double noise_fraction = 0.0;
};

struct GridResult {
  TdaMap best;  // with assignments
  std::size_t best_index = 0;
  std::vector<GridEntry> table;  // beta-major
};

/// Throws Error("no valid clustering") when every combination scores +inf.
GridResult grid_search(const LabeledMatrix& e, const std::vector<double>& betas, const std::vector<Metric>& metrics,
                       const MapConfig& base);

/// GraphML with node size, member ids (elided above 100), lens centroid and,
/// when labels are given, the dominant label and its share; edges carry shared_count.
std::string to_graphml(const TdaMap& map, const std::map<std::string, std::string>* labels = nullptr);
std::string assignments_csv(const std::vector<std::string>& ids, const std::vector<int>& assignments);
/// Parses `id,cluster` rows (cluster is an integer or NOISE).
std::pair<std::vector<std::string>, std::vector<int>> parse_assignments_csv(const std::string& text);

}  // namespace wafertopo::tdamap
