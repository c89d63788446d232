#include <algorithm>
#include <cmath>

#include "wafertopo/error.hpp"
#include "wafertopo/synthgen.hpp"

namespace wafertopo::synth {

std::vector<double> gaussian_kernel(int k) {
  if (k <= 0 || k % 2 == 0) throw ValidationError("gaussian kernel size must be odd and positive");
  const double sigma = 0.3 * ((k - 1) * 0.5 - 1.0) + 0.8;
  const int r = k / 2;
  std::vector<double> taps(static_cast<std::size_t>(k));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    const double v = std::exp(-(i * i) / (2.0 * sigma * sigma));
    taps[static_cast<std::size_t>(i + r)] = v;
    sum += v;
  }
  for (double& t : taps) t /= sum;
  return taps;
}

namespace {

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

}  // namespace

void gaussian_blur(std::vector<float>& plane, int width, int height, int k) {
  const auto taps = gaussian_kernel(k);
  const int r = k / 2;
  std::vector<float> tmp(plane.size());
  for (int y = 0; y < height; ++y) {
    const float* row = &plane[static_cast<std::size_t>(y) * width];
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += taps[static_cast<std::size_t>(i + r)] * row[reflect101(x + i, width)];
      tmp[static_cast<std::size_t>(y) * width + x] = static_cast<float>(acc);
    }
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i)
        acc += taps[static_cast<std::size_t>(i + r)] * tmp[static_cast<std::size_t>(reflect101(y + i, height)) * width + x];
      plane[static_cast<std::size_t>(y) * width + x] = static_cast<float>(acc);
    }
  }
}

std::array<std::uint8_t, 3> jet_color(std::uint8_t v) {
  const double t = v / 255.0;
  auto channel = [t](double centre) {
    const double c = std::clamp(1.5 - std::abs(4.0 * t - centre), 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(255.0 * c));
  };
  return {channel(3.0), channel(2.0), channel(1.0)};
}

}  // namespace wafertopo::synth
