#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "wafertopo/image.hpp"

namespace wafertopo {
namespace ingest {
struct CorpusItem;
}

namespace persist {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class FiltrationMode { Sublevel, Distance };
std::string to_string(FiltrationMode m);
FiltrationMode filtration_mode_from_string(const std::string& s);

/// V-construction cubical complex over a W x H pixel grid.
///
/// Cell ids: vertices [0, V), horizontal edges, vertical edges, squares, in
/// that order. Within each block cells are row-major by their lower-left pixel.
class CubicalFiltration {
 public:
  CubicalFiltration() = default;
  CubicalFiltration(int width, int height);

  int width() const { return w_; }
  int height() const { return h_; }
  std::size_t size() const { return values_.size(); }
  std::size_t vertex_count() const { return nv_; }
  std::size_t edge_count() const { return nh_ + nve_; }
  std::size_t square_count() const { return ns_; }

  int dim(std::size_t cell) const;
  double value(std::size_t cell) const { return values_[cell]; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& mutable_values() { return values_; }

  std::size_t vertex_id(int x, int y) const { return static_cast<std::size_t>(y) * w_ + x; }
  std::size_t hedge_id(int x, int y) const { return nv_ + static_cast<std::size_t>(y) * (w_ - 1) + x; }
  std::size_t vedge_id(int x, int y) const { return nv_ + nh_ + static_cast<std::size_t>(y) * w_ + x; }
  std::size_t square_id(int x, int y) const { return nv_ + nh_ + nve_ + static_cast<std::size_t>(y) * (w_ - 1) + x; }

  /// Facets of a cell (2 vertices of an edge, 4 edges of a square), ascending id.
  std::vector<std::size_t> boundary(std::size_t cell) const;

  /// Cell ids sorted by (value, dim, id), the total order used for pairing.
  std::vector<std::uint32_t> order() const;

 private:
  int w_ = 0, h_ = 0;
  std::size_t nv_ = 0, nh_ = 0, nve_ = 0, ns_ = 0;
  std::vector<double> values_;
};

struct Interval {
  double birth = 0.0;
  double death = kInf;
  bool infinite() const { return death == kInf; }
  double persistence() const { return death - birth; }
  bool operator==(const Interval&) const = default;
  auto operator<=>(const Interval&) const = default;
};

struct PersistenceDiagram {
  int dim = 0;
  std::vector<Interval> intervals;  // sorted by (birth, death)

  std::size_t size() const { return intervals.size(); }
  bool empty() const { return intervals.empty(); }
  std::size_t infinite_count() const;
  bool operator==(const PersistenceDiagram&) const = default;
};

struct DiagramPair {
  PersistenceDiagram h0{0, {}};
  PersistenceDiagram h1{1, {}};
};

/// Diagrams plus the value range of the filtration they came from.
struct TdaSignature {
  DiagramPair diagrams;
  double min_value = 0.0;
  double max_value = 0.0;
};

struct PersistenceOptions {
  bool keep_zero_persistence = false;  // for pair-accounting checks only
};

/// Throws ValidationError on an empty image.
CubicalFiltration build_filtration(const GrayImage& image);

/// Exact Euclidean distance from each cell centre to the nearest defect cell,
/// divided by the grid diagonal. Off-wafer cells take the maximum on-wafer
/// value so the outside never forms a hole. No defects gives all ones.
GrayImage distance_filtration(const WaferGrid& grid);

/// H0 by union-find with the elder rule; H1 by column reduction of the square
/// boundaries, compressed by dropping H0-negative edges.
DiagramPair compute_persistence(const CubicalFiltration& f, const PersistenceOptions& opt = {});

TdaSignature signature_sublevel(const GrayImage& image);
TdaSignature signature_distance(const WaferGrid& grid);
/// Sublevel uses the item's grayscale image; distance needs the item's grid.
TdaSignature tda_signature(const ingest::CorpusItem& item, FiltrationMode mode);

/// "dim,birth,death" with "inf" for infinite deaths.
std::string format_diagram_csv(const DiagramPair& d);
DiagramPair parse_diagram_csv(const std::string& text);

}  // namespace persist
}  // namespace wafertopo
