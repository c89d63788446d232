#include <algorithm>
#include <cmath>
#include <numbers>

#include "wafertopo/error.hpp"
#include "wafertopo/rng.hpp"
#include "wafertopo/synthgen.hpp"

namespace wafertopo::synth {

namespace {

constexpr double kPi = std::numbers::pi;

class GridPainter {
 public:
  GridPainter(WaferGrid& g, double radius) : g_(g), cx_(g.width / 2.0), cy_(g.height / 2.0), radius_(radius) {}

  double cx() const { return cx_; }
  double cy() const { return cy_; }
  double radius() const { return radius_; }
  std::size_t cell_count() const { return g_.cells.size(); }

  bool on_wafer(int x, int y) const {
    return x >= 0 && y >= 0 && x < g_.width && y < g_.height && g_.at(x, y) != kBackground;
  }

  void fail(int x, int y) {
    if (on_wafer(x, y)) g_.at(x, y) = kFail;
  }

  // Cells whose centre lies within `pred` of the bounding box, each failed with
  // probability `density` (one draw per candidate cell, scan order).
  template <typename Pred>
  void fill(double x0, double y0, double x1, double y1, double density, Rng& rng, Pred pred) {
    const int ix0 = std::max(0, static_cast<int>(std::floor(x0)));
    const int iy0 = std::max(0, static_cast<int>(std::floor(y0)));
    const int ix1 = std::min(g_.width - 1, static_cast<int>(std::ceil(x1)));
    const int iy1 = std::min(g_.height - 1, static_cast<int>(std::ceil(y1)));
    for (int y = iy0; y <= iy1; ++y)
      for (int x = ix0; x <= ix1; ++x)
        if (on_wafer(x, y) && pred(x + 0.5, y + 0.5) && rng.bernoulli(density)) g_.at(x, y) = kFail;
  }

  void disk(double px, double py, double r, double density, Rng& rng) {
    fill(px - r, py - r, px + r, py + r, density, rng,
         [&](double x, double y) { return std::hypot(x - px, y - py) <= r; });
  }

  void annulus(double px, double py, double r_in, double r_out, double density, Rng& rng) {
    fill(px - r_out, py - r_out, px + r_out, py + r_out, density, rng, [&](double x, double y) {
      const double d = std::hypot(x - px, y - py);
      return d >= r_in && d <= r_out;
    });
  }

  void sector(double r_in, double r_out, double start, double width, double density, Rng& rng) {
    fill(cx_ - r_out, cy_ - r_out, cx_ + r_out, cy_ + r_out, density, rng, [&](double x, double y) {
      const double d = std::hypot(x - cx_, y - cy_);
      if (d < r_in || d > r_out) return false;
      double a = std::atan2(y - cy_, x - cx_) - start;
      a = std::fmod(a, 2.0 * kPi);
      if (a < 0) a += 2.0 * kPi;
      return a <= width;
    });
  }

  // Fails exactly ceil(fraction * n) of the n currently passing wafer cells.
  void scatter_fraction(double fraction, Rng& rng) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < g_.cells.size(); ++i)
      if (g_.cells[i] == kPass) pool.push_back(i);
    const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(pool.size())));
    scatter(pool, std::min(k, pool.size()), rng);
  }

  void scatter_count(std::size_t k, Rng& rng) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < g_.cells.size(); ++i)
      if (g_.cells[i] != kBackground) pool.push_back(i);
    scatter(pool, std::min(k, pool.size()), rng);
  }

  // Xiaolin Wu anti-aliased line; every cell with non-zero coverage is marked.
  void wu_line(double x0, double y0, double x1, double y1, std::vector<std::uint8_t>& mark) const {
    auto plot = [&](int x, int y) {
      if (x >= 0 && y >= 0 && x < g_.width && y < g_.height) mark[static_cast<std::size_t>(y) * g_.width + x] = 1;
    };
    const bool steep = std::abs(y1 - y0) > std::abs(x1 - x0);
    if (steep) {
      std::swap(x0, y0);
      std::swap(x1, y1);
    }
    if (x0 > x1) {
      std::swap(x0, x1);
      std::swap(y0, y1);
    }
    const double gradient = (x1 - x0) == 0.0 ? 1.0 : (y1 - y0) / (x1 - x0);
    const int xs = static_cast<int>(std::lround(x0));
    const int xe = static_cast<int>(std::lround(x1));
    double y = y0 + gradient * (xs - x0);
    for (int x = xs; x <= xe; ++x, y += gradient) {
      const int yi = static_cast<int>(std::floor(y));
      const double frac = y - yi;
      if (steep) {
        plot(yi, x);
        if (frac > 0.0) plot(yi + 1, x);
      } else {
        plot(x, yi);
        if (frac > 0.0) plot(x, yi + 1);
      }
    }
  }

  // Marks dilated by the 4-connected cross (radius 1), then failed on-wafer.
  void apply_dilated(const std::vector<std::uint8_t>& mark) {
    for (int y = 0; y < g_.height; ++y)
      for (int x = 0; x < g_.width; ++x) {
        if (!mark[static_cast<std::size_t>(y) * g_.width + x]) continue;
        fail(x, y);
        fail(x - 1, y);
        fail(x + 1, y);
        fail(x, y - 1);
        fail(x, y + 1);
      }
  }

 private:
  void scatter(std::vector<std::size_t>& pool, std::size_t k, Rng& rng) {
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pool.size() - i - 1)));
      std::swap(pool[i], pool[j]);
      g_.cells[pool[i]] = kFail;
    }
  }

  WaferGrid& g_;
  double cx_, cy_, radius_;
};

void paint_class(GridPainter& p, WaferClass label, Rng& rng) {
  const double R = p.radius();
  switch (label) {
    case WaferClass::None:
      break;
    case WaferClass::Center: {
      const double r = rng.uniform(8.0, 18.0);
      const double jx = rng.uniform(-3.0, 3.0), jy = rng.uniform(-3.0, 3.0);
      p.disk(p.cx() + jx, p.cy() + jy, r, rng.uniform(0.7, 1.0), rng);
      break;
    }
    case WaferClass::Donut: {
      const double r_in = rng.uniform(22.0, 30.0);
      const double width = rng.uniform(6.0, 12.0);
      const double jx = rng.uniform(-2.0, 2.0), jy = rng.uniform(-2.0, 2.0);
      p.annulus(p.cx() + jx, p.cy() + jy, r_in, r_in + width, rng.uniform(0.85, 1.0), rng);
      break;
    }
    case WaferClass::EdgeLoc: {
      const double width = rng.uniform(20.0, 70.0) * kPi / 180.0;
      const double start = rng.uniform(0.0, 2.0 * kPi);
      p.sector(0.85 * R, R, start, width, rng.uniform(0.7, 1.0), rng);
      break;
    }
    case WaferClass::EdgeRing: {
      const double width = rng.uniform(3.0, 6.0);
      const double r_out = rng.uniform(0.9 * R + width, R);
      p.annulus(p.cx(), p.cy(), r_out - width, r_out, rng.uniform(0.8, 1.0), rng);
      break;
    }
    case WaferClass::Loc: {
      const double r = rng.uniform(5.0, 12.0);
      const double dist = rng.uniform(0.2 * R, 0.7 * R);
      const double angle = rng.uniform(0.0, 2.0 * kPi);
      p.disk(p.cx() + dist * std::cos(angle), p.cy() + dist * std::sin(angle), r, rng.uniform(0.7, 1.0), rng);
      break;
    }
    case WaferClass::Random:
      p.scatter_fraction(rng.uniform(0.05, 0.15), rng);
      break;
    case WaferClass::Scratch: {
      const int chords = static_cast<int>(rng.uniform_int(1, 2));
      std::vector<std::uint8_t> mark;
      for (int i = 0; i < chords; ++i) {
        const double length = rng.uniform(40.0, 100.0);
        const double md = 0.6 * R * std::sqrt(rng.uniform());
        const double ma = rng.uniform(0.0, 2.0 * kPi);
        const double dir = rng.uniform(0.0, kPi);
        const double mx = p.cx() + md * std::cos(ma), my = p.cy() + md * std::sin(ma);
        const double hx = 0.5 * length * std::cos(dir), hy = 0.5 * length * std::sin(dir);
        // wu_line works in cell-index coordinates; cell centres sit at +0.5.
        mark.assign(p.cell_count(), 0);
        p.wu_line(mx - hx - 0.5, my - hy - 0.5, mx + hx - 0.5, my + hy - 0.5, mark);
        p.apply_dilated(mark);
      }
      break;
    }
    case WaferClass::NearFull:
      p.scatter_fraction(rng.uniform(0.6, 0.9), rng);
      break;
  }
}

// Sparse noise is added to most defect classes. Donut (would break the ring
// topology it is defined by) and Near-Full (already saturated) are skipped.
bool takes_noise(WaferClass c) {
  return c != WaferClass::None && c != WaferClass::Donut && c != WaferClass::NearFull;
}

}  // namespace

void SwedConfig::validate() const {
  if (per_class_count < 0) throw ValidationError("swed: per_class_count must be non-negative");
  if (grid_px <= 0) throw ValidationError("swed: grid_px must be positive");
  if (!(wafer_radius_fraction > 0.0 && wafer_radius_fraction <= 1.0))
    throw ValidationError("swed: wafer_radius_fraction must be in (0,1]");
}

WaferGrid gen_swed_grid(WaferClass label, std::uint64_t seed, const SwedConfig& cfg) {
  cfg.validate();
  WaferGrid g(cfg.grid_px, cfg.grid_px);
  g.class_label = label;
  const double R = cfg.wafer_radius();
  const double c = cfg.grid_px / 2.0;
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x)
      if (std::hypot(x + 0.5 - c, y + 0.5 - c) <= R) g.at(x, y) = kPass;

  GridPainter painter(g, R);
  Rng prim(seed, kSwedPrimitive);
  paint_class(painter, label, prim);
  if (takes_noise(label)) {
    Rng noise(seed, kSwedNoise);
    painter.scatter_count(static_cast<std::size_t>(noise.uniform_int(0, 15)), noise);
  }
  return g;
}

RgbImage render_swed(const WaferGrid& grid, int scale) {
  if (scale <= 0) throw ValidationError("render_swed: scale must be positive");
  RgbImage img(grid.width * scale, grid.height * scale);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const std::uint8_t v = grid.at(x / scale, y / scale);
      if (v > kFail) throw ValidationError("render_swed: cell value out of range");
      const auto& c = kSwedPalette[v];
      std::uint8_t* px = img.px(x, y);
      px[0] = c[0];
      px[1] = c[1];
      px[2] = c[2];
    }
  return img;
}

}  // namespace wafertopo::synth
