#include <algorithm>
#include <cmath>
#include <limits>

#include "wafertopo/error.hpp"
#include "wafertopo/sslnet.hpp"

namespace wafertopo::sslnet {

template <typename T>
LossResult<T> ntxent(const std::vector<T>& rows, std::size_t dim, double tau) {
  if (!(tau > 0.0)) throw ValidationError("ntxent: temperature must be positive");
  if (dim == 0 || rows.size() % dim != 0) throw ValidationError("ntxent: rows do not match dim");
  const std::size_t m = rows.size() / dim;
  if (m < 2 || m % 2 != 0) throw ValidationError("ntxent: need 2N rows with N >= 1");
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0;
    for (std::size_t k = 0; k < dim; ++k) s += static_cast<double>(rows[i * dim + k]) * rows[i * dim + k];
    if (std::abs(std::sqrt(s) - 1.0) > 1e-4) throw ValidationError("ntxent: row " + std::to_string(i) + " is not unit norm");
  }

  // logits S = Z Z^T / tau
  std::vector<double> s(m * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i; j < m; ++j) {
      double d = 0;
      for (std::size_t k = 0; k < dim; ++k) d += static_cast<double>(rows[i * dim + k]) * rows[j * dim + k];
      s[i * m + j] = s[j * m + i] = d / tau;
    }

  // G = (P - Y) / m, P the row softmax over k != i
  std::vector<double> g(m * m, 0.0);
  double loss = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t pos = i ^ 1U;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m; ++k)
      if (k != i) mx = std::max(mx, s[i * m + k]);
    double z = 0;
    for (std::size_t k = 0; k < m; ++k)
      if (k != i) z += std::exp(s[i * m + k] - mx);
    const double lse = mx + std::log(z);
    loss += lse - s[i * m + pos];
    for (std::size_t k = 0; k < m; ++k)
      if (k != i) g[i * m + k] = std::exp(s[i * m + k] - lse) / static_cast<double>(m);
    g[i * m + pos] -= 1.0 / static_cast<double>(m);
  }

  LossResult<T> out;
  out.loss = static_cast<T>(loss / static_cast<double>(m));
  out.grad.assign(rows.size(), T(0));
  // dL/dZ = (G + G^T) Z / tau
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < dim; ++k) {
      double acc = 0;
      for (std::size_t j = 0; j < m; ++j) acc += (g[i * m + j] + g[j * m + i]) * rows[j * dim + k];
      out.grad[i * dim + k] = static_cast<T>(acc / tau);
    }
  return out;
}

template LossResult<float> ntxent<float>(const std::vector<float>&, std::size_t, double);
template LossResult<double> ntxent<double>(const std::vector<double>&, std::size_t, double);

}  // namespace wafertopo::sslnet
