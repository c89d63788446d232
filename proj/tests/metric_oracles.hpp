#pragma once
// Independent pair-counting and hand-count references for the clustering metrics.

#include <map>
#include <vector>

#include "wafertopo/rng.hpp"

namespace oracle {

// ARI from the four pair-agreement counts: a (same/same), b (same/diff),
// c (diff/same), d (diff/diff).
inline double ari_pairs(const std::vector<int>& x, const std::vector<int>& y) {
  double a = 0, b = 0, c = 0, d = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const bool sx = x[i] == x[j], sy = y[i] == y[j];
      if (sx && sy) ++a;
      else if (sx) ++b;
      else if (sy) ++c;
      else ++d;
    }
  const double n = a + b + c + d;
  if (n == 0) return 1.0;
  const double expected = (a + b) * (a + c) / n;
  const double maxi = ((a + b) + (a + c)) / 2;
  if (maxi == expected) return 1.0;
  return (a - expected) / (maxi - expected);
}

// For each cluster the count of its most common label, summed, over N.
inline double purity_count(const std::vector<int>& clusters, const std::vector<int>& labels) {
  std::map<int, std::map<int, int>> t;
  for (std::size_t i = 0; i < clusters.size(); ++i) ++t[clusters[i]][labels[i]];
  int hit = 0;
  for (const auto& [c, h] : t) {
    int best = 0;
    for (const auto& [l, n] : h) best = std::max(best, n);
    hit += best;
  }
  return static_cast<double>(hit) / static_cast<double>(clusters.size());
}

inline std::vector<int> random_partition(wafertopo::Rng& r, std::size_t n) {
  const int k = static_cast<int>(r.uniform_int(1, static_cast<std::int64_t>(n)));
  std::vector<int> p(n);
  for (int& v : p) v = static_cast<int>(r.uniform_int(0, k - 1));
  return p;
}

}  // namespace oracle
