#pragma once
// Structural invariants of a Mapper graph and its clustering, shared by the
// unit tests and the acceptance runner. Each check returns an empty string on
// success, otherwise a description of the first violation.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "wafertopo/evalrep.hpp"
#include "wafertopo/rng.hpp"
#include "wafertopo/tdamap.hpp"

namespace props {

using namespace wafertopo;

inline LabeledMatrix random_embedding(std::uint64_t seed) {
  Rng r(seed, 77);
  const auto n = static_cast<std::size_t>(r.uniform_int(2, 200));
  const auto d = static_cast<std::size_t>(r.uniform_int(1, 16));
  const int blobs = static_cast<int>(r.uniform_int(1, 5));
  std::vector<std::vector<double>> centers(static_cast<std::size_t>(blobs), std::vector<double>(d));
  for (auto& c : centers)
    for (double& v : c) v = r.uniform(-5, 5);
  const double spread = r.uniform(0.05, 2.0);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("p" + std::to_string(i));
  LabeledMatrix m(ids, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = centers[static_cast<std::size_t>(r.uniform_int(0, blobs - 1))];
    // on a 2^-12 grid so that the scalings below are exact in float
    for (std::size_t k = 0; k < d; ++k)
      m.row(i)[k] = static_cast<float>(std::round((c[k] + spread * r.normal()) * 4096.0) / 4096.0);
    // keep cosine well-defined
    bool zero = true;
    for (std::size_t k = 0; k < d; ++k) zero = zero && m.row(i)[k] == 0.0f;
    if (zero) m.row(i)[0] = 1.0f;
  }
  return m;
}

inline std::string check_coverage(const tdamap::TdaMap& map) {
  std::vector<int> count(map.ids.size(), 0);
  for (const auto& n : map.nodes)
    for (std::size_t i : n.members) ++count[i];
  for (std::size_t i = 0; i < count.size(); ++i) {
    if (count[i] == 0) return "item " + map.ids[i] + " is in no node";
    if (count[i] > 4) return "item " + map.ids[i] + " is in " + std::to_string(count[i]) + " nodes";
  }
  return {};
}

inline std::string check_edges(const tdamap::TdaMap& map) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> want;
  for (std::size_t a = 0; a < map.nodes.size(); ++a)
    for (std::size_t b = a + 1; b < map.nodes.size(); ++b) {
      std::vector<std::size_t> both;
      std::set_intersection(map.nodes[a].members.begin(), map.nodes[a].members.end(), map.nodes[b].members.begin(),
                            map.nodes[b].members.end(), std::back_inserter(both));
      if (!both.empty()) want[{a, b}] = both.size();
    }
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> have;
  for (const auto& e : map.edges) {
    if (e.a >= e.b) return "edge endpoints not ordered";
    if (e.shared == 0) return "edge with zero shared items";
    if (!have.emplace(std::make_pair(e.a, e.b), e.shared).second) return "duplicate edge";
  }
  if (have != want) return "edge set differs from node intersections";
  return {};
}

inline std::string check_partition(const tdamap::TdaMap& map, const std::vector<int>& a) {
  if (a.size() != map.ids.size()) return "assignment count differs from item count";
  std::set<int> used;
  for (int v : a) {
    if (v < tdamap::kNoise) return "invalid cluster id";
    if (v != tdamap::kNoise) used.insert(v);
  }
  int expect = 0;
  for (int v : used)
    if (v != expect++) return "cluster ids are not contiguous";
  return {};
}

inline bool same_structure(const tdamap::TdaMap& x, const tdamap::TdaMap& y) {
  if (x.nodes.size() != y.nodes.size() || x.edges.size() != y.edges.size()) return false;
  for (std::size_t k = 0; k < x.nodes.size(); ++k)
    if (x.nodes[k].members != y.nodes[k].members) return false;
  for (std::size_t k = 0; k < x.edges.size(); ++k)
    if (x.edges[k].a != y.edges[k].a || x.edges[k].b != y.edges[k].b || x.edges[k].shared != y.edges[k].shared)
      return false;
  return x.assignments == y.assignments;
}

/// Runs every invariant on one random instance.
inline std::string check_instance(std::uint64_t seed) {
  const LabeledMatrix e = random_embedding(seed);
  Rng r(seed, 78);
  tdamap::MapConfig cfg;
  cfg.beta = r.uniform(0.5, 20.0);
  cfg.lens_bins = static_cast<int>(r.uniform_int(1, 10));
  cfg.overlap = r.uniform(0.05, 0.45);
  cfg.min_node_size = static_cast<int>(r.uniform_int(1, 4));
  for (tdamap::Metric metric : {tdamap::Metric::Euclidean, tdamap::Metric::Cosine}) {
    cfg.metric = metric;
    tdamap::TdaMap map = tdamap::build_map(e, cfg);
    map.assignments = tdamap::cluster_map(map, cfg);
    const std::string tag = " (seed " + std::to_string(seed) + ", " + tdamap::to_string(metric) + ")";
    if (auto s = check_coverage(map); !s.empty()) return s + tag;
    if (auto s = check_edges(map); !s.empty()) return s + tag;
    if (auto s = check_partition(map, map.assignments); !s.empty()) return s + tag;

    if (metric == tdamap::Metric::Cosine) {
      for (float c : {2.0f, 0.375f, 3.0f, 13.5f}) {
        LabeledMatrix scaled = e;
        for (float& v : scaled.data) v *= c;
        tdamap::TdaMap m2 = tdamap::build_map(scaled, cfg);
        m2.assignments = tdamap::cluster_map(m2, cfg);
        if (!same_structure(map, m2)) return "cosine map changed under scaling by " + std::to_string(c) + tag;
      }
    }

    // permutation: reversed order plus a rotation
    std::vector<std::size_t> perm(e.rows());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = (perm.size() - 1 - i + seed) % perm.size();
    LabeledMatrix p;
    p.cols = e.cols;
    for (std::size_t i : perm) {
      p.ids.push_back(e.ids[i]);
      p.data.insert(p.data.end(), e.row(i), e.row(i) + e.cols);
    }
    tdamap::TdaMap mp = tdamap::build_map(p, cfg);
    const auto ap = tdamap::cluster_map(mp, cfg);
    std::vector<int> back(e.rows());
    for (std::size_t i = 0; i < perm.size(); ++i) back[perm[i]] = ap[i];
    // noise must match exactly; the rest must agree as partitions
    for (std::size_t i = 0; i < back.size(); ++i)
      if ((back[i] == tdamap::kNoise) != (map.assignments[i] == tdamap::kNoise)) return "noise set changed under permutation" + tag;
    if (evalrep::n_clusters(back) > 0 && evalrep::ari_excluding_noise(map.assignments, back) != 1.0)
      return "clustering changed under permutation" + tag;
  }
  return {};
}

}  // namespace props
