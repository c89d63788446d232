#pragma once

// Central finite differences against the analytic backward passes of every
// encoder block and the contrastive loss.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "wafertopo/nn.hpp"
#include "wafertopo/rng.hpp"
#include "wafertopo/sslnet.hpp"

namespace gradcheck {

using wafertopo::Rng;

inline std::vector<double> random_vec(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng r(seed, 1);
  std::vector<double> v(n);
  for (double& x : v) x = r.uniform(lo, hi);
  return v;
}

// Five-point central differences of f at x, compared against the analytic
// gradient g. Relative to max(|num|, |g|, 1e-6).
inline double max_rel_error(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                            const std::vector<double>& g, double h = 1e-5) {
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    auto at = [&](double d) {
      x[i] = keep + d;
      return f(x);
    };
    const double num = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
    x[i] = keep;
    const double den = std::max({std::abs(num), std::abs(g[i]), 1e-6});
    worst = std::max(worst, std::abs(num - g[i]) / den);
  }
  return worst;
}

// Distance of a forward pass from the nearest non-differentiable point: the
// smallest |ReLU input| and the smallest gap between a positive max-pool
// winner and the runner-up in its window.
inline double kink_margin(const wafertopo::sslnet::ForwardCache<double>& c, const wafertopo::sslnet::EncoderArch& a) {
  double m = 1e300;
  for (const auto& pre : c.pre)
    for (double v : pre) m = std::min(m, std::abs(v));
  for (double v : c.h_pre) m = std::min(m, std::abs(v));
  int h = a.height, w = a.width;
  for (int st = 0; st < 2; ++st) {
    const int ch = a.filters[static_cast<std::size_t>(st)];
    const auto& act = c.act[static_cast<std::size_t>(st)];
    for (int k = 0; k < ch; ++k)
      for (int y = 0; y + 1 < h; y += 2)
        for (int x = 0; x + 1 < w; x += 2) {
          std::array<double, 4> v{};
          int n = 0;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) v[static_cast<std::size_t>(n++)] = act[static_cast<std::size_t>((k * h + y + dy) * w + x + dx)];
          std::sort(v.begin(), v.end());
          if (v[3] > 0) m = std::min(m, v[3] - v[2]);
        }
    h /= 2;
    w /= 2;
  }
  return m;
}

inline double weighted(const std::vector<double>& out, const std::vector<double>& r) {
  return std::inner_product(out.begin(), out.end(), r.begin(), 0.0);
}

inline std::vector<double> unit_rows(std::size_t m, std::size_t d, std::uint64_t seed) {
  Rng r(seed, 2);
  std::vector<double> v(m * d);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0;
    for (std::size_t k = 0; k < d; ++k) {
      v[i * d + k] = r.normal();
      s += v[i * d + k] * v[i * d + k];
    }
    for (std::size_t k = 0; k < d; ++k) v[i * d + k] /= std::sqrt(s);
  }
  return v;
}

// Plain evaluation of the NT-Xent formula, one anchor at a time.
inline double ntxent_reference(const std::vector<double>& z, std::size_t d, double tau) {
  const std::size_t m = z.size() / d;
  auto sim = [&](std::size_t a, std::size_t b) {
    double s = 0;
    for (std::size_t k = 0; k < d; ++k) s += z[a * d + k] * z[b * d + k];
    return s;
  };
  double total = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = (i % 2 == 0) ? i + 1 : i - 1;
    double den = 0;
    for (std::size_t k = 0; k < m; ++k)
      if (k != i) den += std::exp(sim(i, k) / tau);
    total += -std::log(std::exp(sim(i, j) / tau) / den);
  }
  return total / static_cast<double>(m);
}

// Max relative error per block on one random instance. ReLU inputs are moved
// at least 0.1 away from zero. Encoder instances closer than 1e-3 to a kink
// are redrawn; *redrawn counts them.
inline std::vector<std::pair<std::string, double>> block_errors(std::uint64_t seed, int* redrawn = nullptr) {
  using namespace wafertopo;
  std::vector<std::pair<std::string, double>> out;
  const std::uint64_t s = seed * 100;
  {
    const int C = 2, H = 5, W = 6, F = 3;
    const auto x = random_vec(static_cast<std::size_t>(C * H * W), s + 1);
    const auto w = random_vec(static_cast<std::size_t>(F * C * 9), s + 2);
    const auto b = random_vec(F, s + 3);
    const auto r = random_vec(static_cast<std::size_t>(F * H * W), s + 4);
    auto run = [&](const std::vector<double>& xi, const std::vector<double>& wi, const std::vector<double>& bi) {
      std::vector<double> cols(static_cast<std::size_t>(C * 9 * H * W)), o(static_cast<std::size_t>(F * H * W));
      nn::im2col3x3(xi.data(), C, H, W, cols.data());
      nn::conv3x3_forward(cols.data(), C, H, W, wi.data(), bi.data(), F, o.data());
      return weighted(o, r);
    };
    std::vector<double> cols(static_cast<std::size_t>(C * 9 * H * W)), dcols(cols.size());
    nn::im2col3x3(x.data(), C, H, W, cols.data());
    std::vector<double> dw(w.size(), 0.0), db(b.size(), 0.0), dx(x.size(), 0.0);
    nn::conv3x3_backward(cols.data(), C, H, W, w.data(), F, r.data(), dw.data(), db.data(), dcols.data());
    nn::col2im3x3(dcols.data(), C, H, W, dx.data());
    out.emplace_back("conv3x3", std::max({max_rel_error([&](const auto& v) { return run(v, w, b); }, x, dx),
                                          max_rel_error([&](const auto& v) { return run(x, v, b); }, w, dw),
                                          max_rel_error([&](const auto& v) { return run(x, w, v); }, b, db)}));
  }
  {
    auto x = random_vec(40, s + 8);
    for (double& v : x) v = v >= 0 ? v + 0.1 : v - 0.1;
    const auto r = random_vec(40, s + 9);
    auto f = [&](const std::vector<double>& v) {
      std::vector<double> o(v.size());
      nn::relu_forward(v.data(), v.size(), o.data());
      return weighted(o, r);
    };
    std::vector<double> dx(40);
    nn::relu_backward(x.data(), 40, r.data(), dx.data());
    out.emplace_back("relu", max_rel_error(f, x, dx));
  }
  {
    const int C = 2, H = 5, W = 7;
    const auto x = random_vec(static_cast<std::size_t>(C * H * W), s + 10);
    const auto r = random_vec(static_cast<std::size_t>(C * 2 * 3), s + 11);
    std::vector<std::uint32_t> am(r.size());
    auto f = [&](const std::vector<double>& v) {
      std::vector<double> o(r.size());
      nn::maxpool2_forward(v.data(), C, H, W, o.data(), am.data());
      return weighted(o, r);
    };
    f(x);
    std::vector<double> dx(x.size());
    nn::maxpool2_backward(am.data(), C, H, W, r.data(), dx.data());
    out.emplace_back("maxpool", max_rel_error(f, x, dx));
  }
  {
    const int C = 3, H = 3, W = 2;
    const auto x = random_vec(18, s + 12);
    const auto r = random_vec(3, s + 13);
    auto f = [&](const std::vector<double>& v) {
      std::vector<double> o(3);
      nn::gap_forward(v.data(), C, H, W, o.data());
      return weighted(o, r);
    };
    std::vector<double> dx(18);
    nn::gap_backward(C, H, W, r.data(), dx.data());
    out.emplace_back("global average pool", max_rel_error(f, x, dx));
  }
  {
    const int in = 6, o = 4;
    const auto x = random_vec(in, s + 14), w = random_vec(in * o, s + 15), b = random_vec(o, s + 16),
               r = random_vec(o, s + 17);
    auto run = [&](const std::vector<double>& xi, const std::vector<double>& wi, const std::vector<double>& bi) {
      std::vector<double> y(o);
      nn::affine_forward(xi.data(), in, wi.data(), bi.data(), o, y.data());
      return weighted(y, r);
    };
    std::vector<double> dw(w.size()), db(b.size()), dx(x.size());
    nn::affine_backward(x.data(), in, w.data(), o, r.data(), dw.data(), db.data(), dx.data());
    out.emplace_back("affine", std::max({max_rel_error([&](const auto& v) { return run(v, w, b); }, x, dx),
                                         max_rel_error([&](const auto& v) { return run(x, v, b); }, w, dw),
                                         max_rel_error([&](const auto& v) { return run(x, w, v); }, b, db)}));
  }
  {
    const auto y = random_vec(7, s + 18), r = random_vec(7, s + 19);
    auto f = [&](const std::vector<double>& v) {
      std::vector<double> z(7);
      nn::l2_normalize_forward(v.data(), 7, z.data());
      return weighted(z, r);
    };
    std::vector<double> z(7), dy(7);
    const double norm = nn::l2_normalize_forward(y.data(), 7, z.data());
    nn::l2_normalize_backward(z.data(), norm, 7, r.data(), dy.data());
    out.emplace_back("l2 normalization", max_rel_error(f, y, dy));
  }
  {
    sslnet::EncoderArch a;
    a.width = 8;
    a.height = 8;
    a.filters = {2, 3, 4};
    a.tda_dim = 3;
    a.hidden = 5;
    a.out_dim = 4;
    sslnet::Encoder<double> enc(a);
    std::vector<double> img, tda, r;
    sslnet::ForwardCache<double> c;
    for (std::uint64_t k = 0;; ++k) {
      const std::uint64_t t = s + 1000 * k;
      enc.init_he(t + 7);
      img = random_vec(64, t + 20, 0.0, 1.0);
      tda = random_vec(3, t + 21);
      r = random_vec(4, t + 22);
      c = {};
      enc.forward(img.data(), tda.data(), c);
      if (kink_margin(c, a) >= 1e-3) break;
      if (redrawn) ++*redrawn;
    }
    std::vector<double> grad(enc.size(), 0.0);
    enc.backward(c, r.data(), grad.data());
    auto f = [&](const std::vector<double>& p) {
      sslnet::Encoder<double> e = enc;
      e.params() = p;
      sslnet::ForwardCache<double> cc;
      e.forward(img.data(), tda.data(), cc);
      return weighted(cc.z, r);
    };
    out.emplace_back("encoder end to end", max_rel_error(f, enc.params(), grad));
  }
  for (double tau : {0.1, 0.5, 1.0}) {
    const auto z = unit_rows(8, 8, s + static_cast<std::uint64_t>(tau * 100));
    const auto res = sslnet::ntxent<double>(z, 8, tau);
    double e = max_rel_error([&](const auto& v) { return ntxent_reference(v, 8, tau); }, z, res.grad);
    const double ref = ntxent_reference(z, 8, tau);
    e = std::max(e, std::abs(res.loss - ref) / std::max(1e-12, std::abs(ref)));
    out.emplace_back("nt-xent tau " + std::to_string(tau).substr(0, 3), e);
  }
  return out;
}

}  // namespace gradcheck
