#include <algorithm>
#include <cmath>
#include <numeric>

#include "wafertopo/error.hpp"
#include "wafertopo/persist.hpp"

namespace wafertopo::persist {

CubicalFiltration::CubicalFiltration(int width, int height) : w_(width), h_(height) {
  if (width <= 0 || height <= 0) throw ValidationError("filtration: image must be non-empty");
  nv_ = static_cast<std::size_t>(w_) * h_;
  nh_ = static_cast<std::size_t>(w_ - 1) * h_;
  nve_ = static_cast<std::size_t>(w_) * (h_ - 1);
  ns_ = static_cast<std::size_t>(w_ - 1) * (h_ - 1);
  values_.assign(nv_ + nh_ + nve_ + ns_, 0.0);
}

int CubicalFiltration::dim(std::size_t cell) const {
  if (cell < nv_) return 0;
  if (cell < nv_ + nh_ + nve_) return 1;
  return 2;
}

std::vector<std::size_t> CubicalFiltration::boundary(std::size_t cell) const {
  if (cell < nv_) return {};
  if (cell < nv_ + nh_) {
    const std::size_t k = cell - nv_;
    const int x = static_cast<int>(k % (w_ - 1)), y = static_cast<int>(k / (w_ - 1));
    return {vertex_id(x, y), vertex_id(x + 1, y)};
  }
  if (cell < nv_ + nh_ + nve_) {
    const std::size_t k = cell - nv_ - nh_;
    const int x = static_cast<int>(k % w_), y = static_cast<int>(k / w_);
    return {vertex_id(x, y), vertex_id(x, y + 1)};
  }
  const std::size_t k = cell - nv_ - nh_ - nve_;
  const int x = static_cast<int>(k % (w_ - 1)), y = static_cast<int>(k / (w_ - 1));
  return {hedge_id(x, y), hedge_id(x, y + 1), vedge_id(x, y), vedge_id(x + 1, y)};
}

std::vector<std::uint32_t> CubicalFiltration::order() const {
  std::vector<std::uint32_t> ids(values_.size());
  std::iota(ids.begin(), ids.end(), 0u);
  std::sort(ids.begin(), ids.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (values_[a] != values_[b]) return values_[a] < values_[b];
    const int da = dim(a), db = dim(b);
    if (da != db) return da < db;
    return a < b;
  });
  return ids;
}

CubicalFiltration build_filtration(const GrayImage& image) {
  if (image.empty()) throw ValidationError("build_filtration: empty image");
  const int w = image.width, h = image.height;
  CubicalFiltration f(w, h);
  auto& v = f.mutable_values();
  auto px = [&](int x, int y) { return static_cast<double>(image.at(x, y)); };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) v[f.vertex_id(x, y)] = px(x, y);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x + 1 < w; ++x) v[f.hedge_id(x, y)] = std::max(px(x, y), px(x + 1, y));
  for (int y = 0; y + 1 < h; ++y)
    for (int x = 0; x < w; ++x) v[f.vedge_id(x, y)] = std::max(px(x, y), px(x, y + 1));
  for (int y = 0; y + 1 < h; ++y)
    for (int x = 0; x + 1 < w; ++x)
      v[f.square_id(x, y)] = std::max(std::max(px(x, y), px(x + 1, y)), std::max(px(x, y + 1), px(x + 1, y + 1)));
  return f;
}

namespace {

// 1-D squared distance transform (Felzenszwalb & Huttenlocher), in place.
// Non-sites carry kFar, which behaves like +inf against any real site.
constexpr double kFar = 1e20;

void edt_1d(std::vector<double>& f, int n, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = 0;
  v[0] = 0;
  z[0] = -inf;
  z[1] = inf;
  for (int q = 1; q < n; ++q) {
    double s;
    for (;;) {
      const int p = v[k];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
      if (s <= z[k] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
  for (int q = 0; q < n; ++q) f[q] = d[q];
}

}  // namespace

GrayImage distance_filtration(const WaferGrid& grid) {
  const int w = grid.width, h = grid.height;
  if (w <= 0 || h <= 0) throw ValidationError("distance_filtration: empty grid");
  GrayImage out(w, h);
  if (grid.count(kFail) == 0) {
    std::fill(out.values.begin(), out.values.end(), 1.0f);
    return out;
  }
  std::vector<double> sq(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = grid.cells[i] == kFail ? 0.0 : kFar;

  const std::size_t n = static_cast<std::size_t>(std::max(w, h));
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int> v(n);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = sq[static_cast<std::size_t>(y) * w + x];
    edt_1d(f, h, d, v, z);
    for (int y = 0; y < h; ++y) sq[static_cast<std::size_t>(y) * w + x] = f[y];
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[x] = sq[static_cast<std::size_t>(y) * w + x];
    edt_1d(f, w, d, v, z);
    for (int x = 0; x < w; ++x) sq[static_cast<std::size_t>(y) * w + x] = f[x];
  }

  const double diag = std::hypot(static_cast<double>(w), static_cast<double>(h));
  double interior_max = 0.0;
  for (std::size_t i = 0; i < sq.size(); ++i) {
    if (grid.cells[i] == kBackground) continue;
    interior_max = std::max(interior_max, std::sqrt(sq[i]) / diag);
  }
  for (std::size_t i = 0; i < sq.size(); ++i)
    out.values[i] = static_cast<float>(grid.cells[i] == kBackground ? interior_max : std::sqrt(sq[i]) / diag);
  return out;
}

}  // namespace wafertopo::persist
