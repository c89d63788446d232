#include <cmath>
#include <numbers>

#include "wafertopo/error.hpp"
#include "wafertopo/ingest.hpp"
#include "wafertopo/sslnet.hpp"

namespace wafertopo::sslnet {

void AugmentationSpec::validate() const {
  if (rotation_lo > rotation_hi) throw ValidationError("augmentation: rotation lo must be <= hi");
  if (crop && !(crop->min_area_fraction > 0.0 && crop->min_area_fraction <= 1.0))
    throw ValidationError("augmentation: crop min_area_fraction must be in (0, 1]");
}

GrayImage rotate_nearest(const GrayImage& image, double degrees, float fill) {
  const double th = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  const double cx = (image.width - 1) / 2.0, cy = (image.height - 1) / 2.0;
  GrayImage out(image.width, image.height, fill);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const double dx = x - cx, dy = y - cy;
      const long sx = std::lround(cx + c * dx + s * dy);
      const long sy = std::lround(cy - s * dx + c * dy);
      if (sx >= 0 && sy >= 0 && sx < image.width && sy < image.height)
        out.at(x, y) = image.at(static_cast<int>(sx), static_cast<int>(sy));
    }
  return out;
}

GrayImage augment(const GrayImage& image, const AugmentationSpec& spec, Rng& rng) {
  spec.validate();
  GrayImage img = image;
  const int W = img.width, H = img.height;
  if (spec.h_flip && rng.bernoulli(0.5))
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W / 2; ++x) std::swap(img.at(x, y), img.at(W - 1 - x, y));
  if (spec.v_flip && rng.bernoulli(0.5))
    for (int y = 0; y < H / 2; ++y)
      for (int x = 0; x < W; ++x) std::swap(img.at(x, y), img.at(x, H - 1 - y));
  if (spec.rotation_lo != 0.0 || spec.rotation_hi != 0.0) {
    const double angle = rng.uniform(spec.rotation_lo, spec.rotation_hi);
    const float fill = std::isnan(spec.fill_value) ? image.at(0, 0) : static_cast<float>(spec.fill_value);
    img = rotate_nearest(img, angle, fill);
  }
  if (spec.crop) {
    const double area = rng.uniform(spec.crop->min_area_fraction, 1.0);
    const double ratio = std::exp(rng.uniform(std::log(3.0 / 4.0), std::log(4.0 / 3.0)));
    const int cw = std::clamp(static_cast<int>(std::lround(W * std::sqrt(area * ratio))), 1, W);
    const int ch = std::clamp(static_cast<int>(std::lround(H * std::sqrt(area / ratio))), 1, H);
    const int x0 = static_cast<int>(rng.uniform_int(0, W - cw));
    const int y0 = static_cast<int>(rng.uniform_int(0, H - ch));
    GrayImage sub(cw, ch);
    for (int y = 0; y < ch; ++y)
      for (int x = 0; x < cw; ++x) sub.at(x, y) = img.at(x0 + x, y0 + y);
    img = ingest::resize(sub, {W, H}, ingest::ResizeMode::Bilinear);
  }
  return img;
}

}  // namespace wafertopo::sslnet
