#include "wafertopo/tdamap.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "wafertopo/error.hpp"
#include "wafertopo/io.hpp"
#include "wafertopo/parallel.hpp"
#include "wafertopo/simd.hpp"

namespace wafertopo::tdamap {

namespace {

constexpr std::size_t kFullMatrixLimit = 2000;
constexpr std::size_t kLandmarks = 256;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent[b] = a;  // smallest index is the root
  }
};

LabeledMatrix permuted(const LabeledMatrix& e, const std::vector<std::size_t>& perm) {
  LabeledMatrix out;
  out.cols = e.cols;
  out.ids.reserve(perm.size());
  out.data.reserve(e.data.size());
  for (std::size_t p : perm) {
    out.ids.push_back(e.ids[p]);
    out.data.insert(out.data.end(), e.row(p), e.row(p) + e.cols);
  }
  return out;
}

// Rows sorted lexicographically (ties by index), so results do not depend on
// the order the items arrive in.
std::vector<std::size_t> canonical_order(const Distance& d) {
  std::vector<std::size_t> perm(d.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(d.row(a), d.row(a) + d.dim(), d.row(b), d.row(b) + d.dim());
  });
  return perm;
}

// Everything that depends on the embedding and metric but not on beta.
struct Geometry {
  std::vector<std::size_t> perm;  // canonical position -> original row
  Distance dist;                  // over canonical rows
  std::vector<double> full;       // canonical distance matrix when N is small
  std::vector<std::array<double, 2>> lens;  // canonical order
  double eps0 = 0.0;

  double at(std::size_t i, std::size_t j) const { return full.empty() ? dist(i, j) : full[i * dist.size() + j]; }
};

std::vector<double> full_matrix(const Distance& d) {
  const std::size_t n = d.size();
  std::vector<double> m(n * n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j) m[i * n + j] = i == j ? 0.0 : d(std::min(i, j), std::max(i, j));
  });
  return m;
}

std::vector<std::array<double, 2>> classical_mds(const Eigen::MatrixXd& d2, Eigen::MatrixXd* basis = nullptr,
                                                 Eigen::Vector2d* values = nullptr) {
  const Eigen::Index m = d2.rows();
  const Eigen::VectorXd rmean = d2.rowwise().mean();
  const double gmean = rmean.mean();
  Eigen::MatrixXd b(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) b(i, j) = -0.5 * (d2(i, j) - rmean(i) - rmean(j) + gmean);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b);
  if (es.info() != Eigen::Success) throw Error("lens: eigen decomposition failed");
  std::vector<std::array<double, 2>> out(static_cast<std::size_t>(m), {0.0, 0.0});
  for (int k = 0; k < 2 && k < m; ++k) {
    const Eigen::Index col = m - 1 - k;
    const double lam = std::max(0.0, es.eigenvalues()(col));
    const double s = std::sqrt(lam);
    for (Eigen::Index i = 0; i < m; ++i) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = es.eigenvectors()(i, col) * s;
    if (basis) basis->col(k) = es.eigenvectors().col(col);
    if (values) (*values)(k) = lam;
  }
  return out;
}

void fix_signs(std::vector<std::array<double, 2>>& lens) {
  for (int k = 0; k < 2; ++k) {
    double mx = 0;
    for (const auto& p : lens) mx = std::max(mx, std::abs(p[static_cast<std::size_t>(k)]));
    if (mx == 0.0) continue;
    for (const auto& p : lens) {
      const double v = p[static_cast<std::size_t>(k)];
      if (std::abs(v) > 1e-12 * mx) {
        if (v < 0)
          for (auto& q : lens) q[static_cast<std::size_t>(k)] = -q[static_cast<std::size_t>(k)];
        break;
      }
    }
  }
}

std::vector<std::array<double, 2>> canonical_lens(const Geometry& g) {
  const std::size_t n = g.dist.size();
  if (n < 2) throw ValidationError("lens: need at least 2 items");
  std::vector<std::array<double, 2>> lens;
  if (n <= kFullMatrixLimit) {
    Eigen::MatrixXd d2(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double v = g.at(i, j);
        d2(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v * v;
      }
    lens = classical_mds(d2);
  } else {
    // maxmin landmarks starting from the first canonical row
    std::vector<std::size_t> marks{0};
    std::vector<double> near(n, kInf);
    while (marks.size() < kLandmarks) {
      const std::size_t last = marks.back();
      parallel_for(n, [&](std::size_t i) { near[i] = std::min(near[i], g.dist(i, last)); });
      std::size_t best = 0;
      for (std::size_t i = 1; i < n; ++i)
        if (near[i] > near[best]) best = i;
      if (near[best] == 0.0) break;
      marks.push_back(best);
    }
    const auto m = static_cast<Eigen::Index>(marks.size());
    Eigen::MatrixXd d2(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) {
        const double v = g.dist(marks[static_cast<std::size_t>(i)], marks[static_cast<std::size_t>(j)]);
        d2(i, j) = v * v;
      }
    Eigen::MatrixXd basis(m, 2);
    basis.setZero();
    Eigen::Vector2d lam(0, 0);
    classical_mds(d2, &basis, &lam);
    const Eigen::VectorXd col_mean = d2.colwise().mean().transpose();
    lens.assign(n, {0.0, 0.0});
    parallel_for(n, [&](std::size_t i) {
      Eigen::VectorXd delta(m);
      for (Eigen::Index j = 0; j < m; ++j) {
        const double v = g.dist(i, marks[static_cast<std::size_t>(j)]);
        delta(j) = v * v;
      }
      for (int k = 0; k < 2; ++k)
        if (lam(k) > 0) lens[i][static_cast<std::size_t>(k)] = -0.5 * basis.col(k).dot(delta - col_mean) / std::sqrt(lam(k));
    });
  }
  // identical rows are adjacent in canonical order; give them one lens point
  for (std::size_t i = 1; i < n; ++i)
    if (std::equal(g.dist.row(i), g.dist.row(i) + g.dist.dim(), g.dist.row(i - 1))) lens[i] = lens[i - 1];
  fix_signs(lens);
  return lens;
}

double median_nn(const Geometry& g) {
  const std::size_t n = g.dist.size();
  if (n < 2) return 0.0;
  std::vector<double> nn(n, kInf);
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) nn[i] = std::min(nn[i], g.at(i, j));
  });
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
  };
  double eps = median(nn);
  if (eps > 0.0) return eps;
  // more than half the rows are duplicates: use the scale of the distinct ones
  std::vector<double> pos;
  for (double v : nn)
    if (v > 0.0) pos.push_back(v);
  return pos.empty() ? 1.0 : median(pos);
}

Geometry make_geometry(const LabeledMatrix& e, Metric metric, bool need_lens = true) {
  if (e.rows() == 0) throw ValidationError("map: embedding matrix is empty");
  const Distance raw(e, metric);
  auto perm = canonical_order(raw);
  Geometry g{perm, Distance(permuted(e, perm), metric), {}, {}, 0.0};
  if (g.dist.size() <= kFullMatrixLimit) g.full = full_matrix(g.dist);
  g.eps0 = median_nn(g);
  if (need_lens && g.dist.size() >= 2) g.lens = canonical_lens(g);
  if (g.dist.size() == 1) g.lens = {{0.0, 0.0}};
  return g;
}

TdaMap build_from(const LabeledMatrix& e, const Geometry& g, const MapConfig& cfg) {
  cfg.validate();
  const std::size_t n = g.dist.size();
  const int bins = cfg.lens_bins;
  std::array<double, 2> lo{kInf, kInf}, hi{-kInf, -kInf};
  for (const auto& p : g.lens)
    for (int k = 0; k < 2; ++k) {
      lo[static_cast<std::size_t>(k)] = std::min(lo[static_cast<std::size_t>(k)], p[static_cast<std::size_t>(k)]);
      hi[static_cast<std::size_t>(k)] = std::max(hi[static_cast<std::size_t>(k)], p[static_cast<std::size_t>(k)]);
    }
  // square cells: side = larger lens range / bins, anchored at each axis minimum
  const double side = std::max(hi[0] - lo[0], hi[1] - lo[1]) / bins;
  auto axis_bins = [&](double v, int k) {
    std::vector<int> out;
    if (!(side > 0.0)) return std::vector<int>{0};
    const double o = lo[static_cast<std::size_t>(k)];
    const int c = std::clamp(static_cast<int>(std::floor((v - o) / side)), 0, bins - 1);
    for (int b = std::max(0, c - 1); b <= std::min(bins - 1, c + 1); ++b) {
      const double a = o + b * side - cfg.overlap * side;
      const double z = o + (b + 1) * side + cfg.overlap * side;
      if (v >= a && v <= z) out.push_back(b);
    }
    return out;
  };
  std::vector<std::vector<std::size_t>> cell(static_cast<std::size_t>(bins * bins));
  for (std::size_t i = 0; i < n; ++i) {
    const auto bx = axis_bins(g.lens[i][0], 0), by = axis_bins(g.lens[i][1], 1);
    for (int y : by)
      for (int x : bx) cell[static_cast<std::size_t>(y * bins + x)].push_back(i);
  }

  const double thr = cfg.beta * g.eps0;
  std::vector<std::vector<std::vector<std::size_t>>> local(cell.size());
  parallel_for(cell.size(), [&](std::size_t c) {
    const auto& m = cell[c];
    if (m.empty()) return;
    UnionFind uf(m.size());
    for (std::size_t a = 0; a < m.size(); ++a)
      for (std::size_t b = a + 1; b < m.size(); ++b)
        if (uf.find(a) != uf.find(b) && g.at(m[a], m[b]) <= thr) uf.unite(a, b);
    std::vector<std::size_t> slot(m.size(), SIZE_MAX);
    for (std::size_t a = 0; a < m.size(); ++a) {
      const std::size_t r = uf.find(a);
      if (slot[r] == SIZE_MAX) {
        slot[r] = local[c].size();
        local[c].emplace_back();
      }
      local[c][slot[r]].push_back(m[a]);
    }
  });

  TdaMap map;
  map.ids = e.ids;
  map.config = cfg;
  map.epsilon0 = g.eps0;
  map.lens.assign(n, {0.0, 0.0});
  for (std::size_t i = 0; i < n; ++i) map.lens[g.perm[i]] = g.lens[i];
  std::vector<std::vector<std::size_t>> item_nodes(n);
  for (const auto& groups : local)
    for (const auto& grp : groups) {
      Node node;
      for (std::size_t ci : grp) {
        node.members.push_back(g.perm[ci]);
        node.centroid[0] += g.lens[ci][0];
        node.centroid[1] += g.lens[ci][1];
        item_nodes[ci].push_back(map.nodes.size());
      }
      node.centroid[0] /= static_cast<double>(grp.size());
      node.centroid[1] /= static_cast<double>(grp.size());
      std::sort(node.members.begin(), node.members.end());
      map.nodes.push_back(std::move(node));
    }
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> shared;
  for (const auto& ns : item_nodes)
    for (std::size_t a = 0; a < ns.size(); ++a)
      for (std::size_t b = a + 1; b < ns.size(); ++b) ++shared[{std::min(ns[a], ns[b]), std::max(ns[a], ns[b])}];
  for (const auto& [k, v] : shared) map.edges.push_back({k.first, k.second, v});
  return map;
}

}  // namespace

std::string to_string(Metric m) { return m == Metric::Euclidean ? "euclidean" : "cosine"; }

Metric metric_from_string(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (l == "euclidean") return Metric::Euclidean;
  if (l == "cosine") return Metric::Cosine;
  throw ValidationError("unknown metric '" + s + "' (expected euclidean|cosine)");
}

Distance::Distance(const LabeledMatrix& e, Metric metric) : metric_(metric), n_(e.rows()), d_(e.cols) {
  rows_.resize(n_ * d_);
  for (std::size_t i = 0; i < n_; ++i) {
    double mx = 0;
    for (std::size_t k = 0; k < d_; ++k) {
      const double v = e.row(i)[k];
      if (!std::isfinite(v)) throw ValidationError("distance: non-finite value in row " + e.ids[i]);
      rows_[i * d_ + k] = v;
      mx = std::max(mx, std::abs(v));
    }
    if (metric == Metric::Cosine) {
      if (mx == 0.0) throw ValidationError("distance: zero-norm row " + e.ids[i] + " under the cosine metric");
      // dividing by the largest entry first makes exact multiples of a row
      // produce bit-identical unit rows
      double s = 0;
      for (std::size_t k = 0; k < d_; ++k) {
        double& v = rows_[i * d_ + k];
        v /= mx;
        s += v * v;
      }
      const double inv = 1.0 / std::sqrt(s);
      for (std::size_t k = 0; k < d_; ++k) rows_[i * d_ + k] *= inv;
    }
  }
}

double Distance::operator()(std::size_t i, std::size_t j) const {
  if (i == j) return 0.0;
  if (metric_ == Metric::Euclidean) return std::sqrt(simd::sqdist(d_, row(i), row(j)));
  return std::max(0.0, 1.0 - simd::dot(d_, row(i), row(j)));
}

std::vector<double> pairwise_distance(const LabeledMatrix& e, Metric metric) {
  if (e.rows() == 0) throw ValidationError("distance: empty matrix");
  return full_matrix(Distance(e, metric));
}

std::vector<std::array<double, 2>> lens_project(const LabeledMatrix& e, Metric metric) {
  if (e.rows() < 2) throw ValidationError("lens: need at least 2 items");
  const Geometry g = make_geometry(e, metric);
  std::vector<std::array<double, 2>> out(e.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[g.perm[i]] = g.lens[i];
  return out;
}

void MapConfig::validate() const {
  if (!(beta > 0.0)) throw ValidationError("map: beta must be positive");
  if (lens_bins <= 0) throw ValidationError("map: lens_bins must be positive");
  if (!(overlap > 0.0 && overlap < 0.5)) throw ValidationError("map: overlap must be in (0, 0.5)");
  if (min_node_size <= 0) throw ValidationError("map: min_node_size must be positive");
  if (!(min_cluster_fraction >= 0.0 && min_cluster_fraction <= 1.0))
    throw ValidationError("map: min_cluster_fraction must be in [0, 1]");
}

std::size_t TdaMap::n_clusters() const {
  int mx = -1;
  for (int a : assignments) mx = std::max(mx, a);
  return static_cast<std::size_t>(mx + 1);
}

TdaMap build_map(const LabeledMatrix& e, const MapConfig& config) {
  config.validate();
  return build_from(e, make_geometry(e, config.metric), config);
}

std::vector<int> cluster_map(const TdaMap& map, const MapConfig& config) {
  config.validate();
  const std::size_t n = map.ids.size();
  const std::size_t nn = map.nodes.size();
  std::vector<bool> keep(nn);
  for (std::size_t k = 0; k < nn; ++k) keep[k] = map.nodes[k].members.size() >= static_cast<std::size_t>(config.min_node_size);
  UnionFind uf(nn);
  for (const Edge& e : map.edges)
    if (keep[e.a] && keep[e.b]) uf.unite(e.a, e.b);
  std::vector<std::size_t> comp(n, SIZE_MAX);
  for (std::size_t k = 0; k < nn; ++k)
    if (keep[k])
      for (std::size_t i : map.nodes[k].members) comp[i] = uf.find(k);
  // component -> (size, first item)
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> stats;
  for (std::size_t i = 0; i < n; ++i)
    if (comp[i] != SIZE_MAX) {
      auto [it, fresh] = stats.try_emplace(comp[i], 0, i);
      ++it->second.first;
    }
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> order;  // (-size, first, comp)
  const double min_size = config.min_cluster_fraction * static_cast<double>(n);
  for (const auto& [c, s] : stats)
    if (static_cast<double>(s.first) >= min_size) order.emplace_back(SIZE_MAX - s.first, s.second, c);
  std::sort(order.begin(), order.end());
  std::map<std::size_t, int> label;
  for (std::size_t r = 0; r < order.size(); ++r) label[std::get<2>(order[r])] = static_cast<int>(r);
  std::vector<int> out(n, kNoise);
  for (std::size_t i = 0; i < n; ++i)
    if (comp[i] != SIZE_MAX)
      if (auto it = label.find(comp[i]); it != label.end()) out[i] = it->second;
  return out;
}

double davies_bouldin(const LabeledMatrix& e, const std::vector<int>& assignments, Metric metric) {
  if (assignments.size() != e.rows()) throw ValidationError("score: assignments do not match the embedding rows");
  if (e.rows() == 0) throw ValidationError("score: empty input");
  const Distance dist(e, metric);
  const std::size_t d = e.cols;
  int k = 0;
  std::size_t noise = 0;
  for (int a : assignments) {
    if (a == kNoise)
      ++noise;
    else if (a < 0)
      throw ValidationError("score: negative cluster id");
    else
      k = std::max(k, a + 1);
  }
  std::vector<std::vector<double>> cent(static_cast<std::size_t>(k), std::vector<double>(d, 0.0));
  std::vector<std::size_t> size(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < e.rows(); ++i) {
    if (assignments[i] == kNoise) continue;
    const auto c = static_cast<std::size_t>(assignments[i]);
    ++size[c];
    for (std::size_t j = 0; j < d; ++j) cent[c][j] += dist.row(i)[j];
  }
  std::vector<std::size_t> live;
  for (std::size_t c = 0; c < cent.size(); ++c)
    if (size[c] > 0) live.push_back(c);
  if (live.size() < 2) return kInf;
  for (std::size_t c : live) {
    double s = 0;
    for (double& v : cent[c]) {
      v /= static_cast<double>(size[c]);
      s += v * v;
    }
    if (metric == Metric::Cosine) {
      if (s == 0.0) return kInf;
      for (double& v : cent[c]) v /= std::sqrt(s);
    }
  }
  auto between = [&](const double* a, const double* b) {
    if (metric == Metric::Euclidean) return std::sqrt(simd::sqdist(d, a, b));
    return std::max(0.0, 1.0 - simd::dot(d, a, b));
  };
  std::vector<double> scatter(cent.size(), 0.0);
  for (std::size_t i = 0; i < e.rows(); ++i) {
    if (assignments[i] == kNoise) continue;
    const auto c = static_cast<std::size_t>(assignments[i]);
    scatter[c] += between(dist.row(i), cent[c].data());
  }
  for (std::size_t c : live) scatter[c] /= static_cast<double>(size[c]);
  double db = 0;
  for (std::size_t a : live) {
    double worst = 0;
    for (std::size_t b : live) {
      if (a == b) continue;
      const double m = between(cent[a].data(), cent[b].data());
      const double s = scatter[a] + scatter[b];
      worst = std::max(worst, m > 0.0 ? s / m : (s > 0.0 ? kInf : 0.0));
    }
    db += worst;
  }
  return db / static_cast<double>(live.size());
}

double score_map(const LabeledMatrix& e, const std::vector<int>& assignments, Metric metric) {
  const double db = davies_bouldin(e, assignments, metric);
  const auto noise = static_cast<std::size_t>(std::count(assignments.begin(), assignments.end(), kNoise));
  return db + static_cast<double>(noise) / static_cast<double>(e.rows());
}

GridResult grid_search(const LabeledMatrix& e, const std::vector<double>& betas, const std::vector<Metric>& metrics,
                       const MapConfig& base) {
  if (betas.empty() || metrics.empty()) throw ValidationError("grid search: beta and metric lists must be non-empty");
  std::vector<Geometry> geo;
  for (Metric m : metrics) geo.push_back(make_geometry(e, m));
  GridResult out;
  double best = kInf;
  for (double beta : betas)
    for (std::size_t mi = 0; mi < metrics.size(); ++mi) {
      MapConfig cfg = base;
      cfg.beta = beta;
      cfg.metric = metrics[mi];
      TdaMap map = build_from(e, geo[mi], cfg);
      map.assignments = cluster_map(map, cfg);
      GridEntry row{beta, metrics[mi], 0.0, 0.0, map.n_clusters(), 0.0};
      row.noise_fraction = static_cast<double>(std::count(map.assignments.begin(), map.assignments.end(), kNoise)) /
                           static_cast<double>(e.rows());
      row.db = davies_bouldin(e, map.assignments, metrics[mi]);
      row.score = row.db + row.noise_fraction;
      if (row.score < best) {
        best = row.score;
        out.best = std::move(map);
        out.best_index = out.table.size();
      }
      out.table.push_back(row);
    }
  if (!std::isfinite(best)) throw Error("no valid clustering");
  return out;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      case '\'': o += "&apos;"; break;
      default: o += c;
    }
  }
  return o;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string to_graphml(const TdaMap& map, const std::map<std::string, std::string>* labels) {
  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n"
    << "  <key id=\"size\" for=\"node\" attr.name=\"size\" attr.type=\"int\"/>\n"
    << "  <key id=\"members\" for=\"node\" attr.name=\"members\" attr.type=\"string\"/>\n"
    << "  <key id=\"lens_x\" for=\"node\" attr.name=\"lens_x\" attr.type=\"double\"/>\n"
    << "  <key id=\"lens_y\" for=\"node\" attr.name=\"lens_y\" attr.type=\"double\"/>\n"
    << "  <key id=\"cluster\" for=\"node\" attr.name=\"cluster\" attr.type=\"int\"/>\n";
  if (labels)
    o << "  <key id=\"label\" for=\"node\" attr.name=\"dominant_label\" attr.type=\"string\"/>\n"
      << "  <key id=\"share\" for=\"node\" attr.name=\"dominant_share\" attr.type=\"double\"/>\n";
  o << "  <key id=\"shared\" for=\"edge\" attr.name=\"shared_count\" attr.type=\"int\"/>\n"
    << "  <graph id=\"tdamap\" edgedefault=\"undirected\">\n";
  for (std::size_t k = 0; k < map.nodes.size(); ++k) {
    const Node& n = map.nodes[k];
    o << "    <node id=\"n" << k << "\">\n"
      << "      <data key=\"size\">" << n.members.size() << "</data>\n";
    std::string members;
    if (n.members.size() <= 100) {
      for (std::size_t i = 0; i < n.members.size(); ++i) members += (i ? ";" : "") + map.ids[n.members[i]];
    } else {
      members = "(" + std::to_string(n.members.size()) + " members elided)";
    }
    o << "      <data key=\"members\">" << xml_escape(members) << "</data>\n"
      << "      <data key=\"lens_x\">" << num(n.centroid[0]) << "</data>\n"
      << "      <data key=\"lens_y\">" << num(n.centroid[1]) << "</data>\n";
    if (!map.assignments.empty()) {
      // all members of a kept node share a cluster; dropped nodes report -1
      int c = map.assignments[n.members.front()];
      for (std::size_t i : n.members)
        if (map.assignments[i] != c) c = kNoise;
      o << "      <data key=\"cluster\">" << c << "</data>\n";
    }
    if (labels) {
      std::map<std::string, std::size_t> h;
      for (std::size_t i : n.members)
        if (auto it = labels->find(map.ids[i]); it != labels->end()) ++h[it->second];
      std::string top;
      std::size_t cnt = 0;
      for (const auto& [l, c] : h)
        if (c > cnt) {
          top = l;
          cnt = c;
        }
      if (!top.empty())
        o << "      <data key=\"label\">" << xml_escape(top) << "</data>\n"
          << "      <data key=\"share\">" << num(static_cast<double>(cnt) / static_cast<double>(n.members.size()))
          << "</data>\n";
    }
    o << "    </node>\n";
  }
  for (const Edge& e : map.edges)
    o << "    <edge source=\"n" << e.a << "\" target=\"n" << e.b << "\"><data key=\"shared\">" << e.shared
      << "</data></edge>\n";
  o << "  </graph>\n</graphml>\n";
  return o.str();
}

std::string assignments_csv(const std::vector<std::string>& ids, const std::vector<int>& assignments) {
  if (ids.size() != assignments.size()) throw ValidationError("assignments: ids and clusters differ in length");
  std::string out = format_csv_row({"id", "cluster"});
  for (std::size_t i = 0; i < ids.size(); ++i)
    out += format_csv_row({ids[i], assignments[i] == kNoise ? std::string("NOISE") : std::to_string(assignments[i])});
  return out;
}

std::pair<std::vector<std::string>, std::vector<int>> parse_assignments_csv(const std::string& text) {
  const auto rows = parse_csv(text);
  if (rows.empty() || rows[0] != CsvRow{"id", "cluster"}) throw FormatError("assignments: expected header id,cluster");
  std::pair<std::vector<std::string>, std::vector<int>> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 2) throw FormatError("assignments: row " + std::to_string(r + 1) + " needs 2 fields");
    out.first.push_back(rows[r][0]);
    if (rows[r][1] == "NOISE") {
      out.second.push_back(kNoise);
    } else {
      try {
        std::size_t pos = 0;
        const int v = std::stoi(rows[r][1], &pos);
        if (pos != rows[r][1].size() || v < 0) throw std::invalid_argument("x");
        out.second.push_back(v);
      } catch (const std::exception&) {
        throw FormatError("assignments: bad cluster '" + rows[r][1] + "' on row " + std::to_string(r + 1));
      }
    }
  }
  return out;
}

}  // namespace wafertopo::tdamap
