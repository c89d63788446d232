#include <algorithm>
#include <cmath>
#include <numbers>

#include "wafertopo/error.hpp"
#include "wafertopo/rng.hpp"
#include "wafertopo/synthgen.hpp"

namespace wafertopo::synth {

namespace {

constexpr float kGrey = 128.0f;
constexpr double kRingWeight = 0.7;
constexpr double kTextureWeight = 0.3;
constexpr int kTextureBlur = 65;
constexpr int kFinalBlur = 25;
constexpr int kStrokeBlur = 3;
constexpr double kStrokeThickness = 2.0;
constexpr double kRadialLineThickness = 2.0;

struct Plane {
  int w, h;
  std::vector<float> v;
  Plane(int width, int height, float fill) : w(width), h(height), v(static_cast<std::size_t>(width) * height, fill) {}
  float& at(int x, int y) { return v[static_cast<std::size_t>(y) * w + x]; }
};

// Annulus |d - radius| <= thickness / 2 around (cx, cy).
void draw_ring(Plane& p, double cx, double cy, double radius, double thickness, float value) {
  const double half = thickness / 2.0;
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius - half)));
  const int x1 = std::min(p.w - 1, static_cast<int>(std::ceil(cx + radius + half)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius - half)));
  const int y1 = std::min(p.h - 1, static_cast<int>(std::ceil(cy + radius + half)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (std::abs(std::hypot(x - cx, y - cy) - radius) <= half) p.at(x, y) = value;
}

// Pixels within thickness / 2 of the segment (ax, ay)-(bx, by).
void draw_segment(Plane& p, double ax, double ay, double bx, double by, double thickness, float value) {
  const double half = thickness / 2.0;
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - half)));
  const int x1 = std::min(p.w - 1, static_cast<int>(std::ceil(std::max(ax, bx) + half)));
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - half)));
  const int y1 = std::min(p.h - 1, static_cast<int>(std::ceil(std::max(ay, by) + half)));
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      double t = len2 > 0 ? ((x - ax) * dx + (y - ay) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      if (std::hypot(x - (ax + t * dx), y - (ay + t * dy)) <= half) p.at(x, y) = value;
    }
  }
}

// Stage 1: grey canvas with 0-4 concentric black/white rings, each followed by
// two slightly offset grey circles that break up its edges.
Plane base_pattern(Rng& rng, const SpvdConfig& cfg) {
  Plane p(cfg.canvas_px, cfg.canvas_px, kGrey);
  const double c = cfg.canvas_px / 2.0;
  const double scale = cfg.mask_radius_px / 200.0;
  const int rings = static_cast<int>(rng.uniform_int(0, 4));
  for (int i = 0; i < rings; ++i) {
    const double radius = static_cast<double>(rng.uniform_int(30, 200)) * scale;
    const double thickness = static_cast<double>(rng.uniform_int(4, 10));
    const float colour = rng.bernoulli(0.5) ? 255.0f : 0.0f;
    draw_ring(p, c, c, radius, thickness, colour);
    for (int k = 0; k < 2; ++k) {
      const double ox = static_cast<double>(rng.uniform_int(-3, 3));
      const double oy = static_cast<double>(rng.uniform_int(-3, 3));
      draw_ring(p, c + ox, c + oy, radius, thickness, kGrey);
    }
  }
  return p;
}

// Stage 2: 0-5 rings and 0-8 radial lines on a black mask, blurred 65x65.
Plane texture_mask(Rng& rng, const SpvdConfig& cfg) {
  Plane p(cfg.canvas_px, cfg.canvas_px, 0.0f);
  const double c = cfg.canvas_px / 2.0;
  const double scale = cfg.mask_radius_px / 200.0;
  const int rings = static_cast<int>(rng.uniform_int(0, 5));
  for (int i = 0; i < rings; ++i) {
    const double cx = c + rng.uniform(-40.0, 40.0) * scale;
    const double cy = c + rng.uniform(-40.0, 40.0) * scale;
    const double radius = rng.uniform(10.0, 200.0) * scale;
    const double thickness = static_cast<double>(rng.uniform_int(5, 20));
    const auto value = static_cast<float>(rng.uniform(128.0, 255.0));
    draw_ring(p, cx, cy, radius, thickness, value);
  }
  const int lines = static_cast<int>(rng.uniform_int(0, 8));
  for (int i = 0; i < lines; ++i) {
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const auto value = static_cast<float>(rng.uniform(128.0, 255.0));
    const double r = cfg.mask_radius_px;
    draw_segment(p, c, c, c + r * std::cos(angle), c + r * std::sin(angle), kRadialLineThickness, value);
  }
  gaussian_blur(p.v, p.w, p.h, kTextureBlur);
  return p;
}

// 1-5 short radial black strokes starting 160-180 px from the centre,
// softened with a 3x3 blur and composited onto the image.
void add_strokes(Plane& img, Rng& rng, const SpvdConfig& cfg) {
  Plane mask(img.w, img.h, 0.0f);
  const double c = cfg.canvas_px / 2.0;
  const double scale = cfg.mask_radius_px / 200.0;
  const int strokes = static_cast<int>(rng.uniform_int(1, 5));
  for (int i = 0; i < strokes; ++i) {
    const double r0 = rng.uniform(160.0, 180.0) * scale;
    const double length = rng.uniform(5.0, 20.0) * scale;
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double ux = std::cos(angle), uy = std::sin(angle);
    draw_segment(mask, c + r0 * ux, c + r0 * uy, c + (r0 + length) * ux, c + (r0 + length) * uy, kStrokeThickness,
                 1.0f);
  }
  gaussian_blur(mask.v, mask.w, mask.h, kStrokeBlur);
  for (std::size_t i = 0; i < img.v.size(); ++i) img.v[i] *= 1.0f - mask.v[i];
}

}  // namespace

void SpvdConfig::validate() const {
  if (image_count < 0) throw ValidationError("spvd: image_count must be non-negative");
  if (!(faulty_fraction >= 0.0 && faulty_fraction <= 1.0)) throw ValidationError("spvd: faulty_fraction must be in [0,1]");
  if (canvas_px <= 0 || mask_radius_px <= 0) throw ValidationError("spvd: canvas and mask radius must be positive");
  if (canvas_px < 2 * mask_radius_px) throw ValidationError("spvd: canvas_px must be >= 2 * mask_radius_px");
}

int SpvdConfig::faulty_count() const { return static_cast<int>(std::floor(image_count * faulty_fraction)); }

RgbImage gen_spvd_image(std::uint64_t seed, bool is_faulty, const SpvdConfig& cfg) {
  cfg.validate();
  Rng base_rng(seed, kSpvdBase);
  Rng texture_rng(seed, kSpvdTexture);
  Rng defect_rng(seed, kSpvdDefects);

  Plane img = base_pattern(base_rng, cfg);
  const Plane texture = texture_mask(texture_rng, cfg);
  for (std::size_t i = 0; i < img.v.size(); ++i)
    img.v[i] = static_cast<float>(kRingWeight * img.v[i] + kTextureWeight * texture.v[i]);

  if (is_faulty) add_strokes(img, defect_rng, cfg);

  for (float& v : img.v) v = 255.0f - v;
  gaussian_blur(img.v, img.w, img.h, kFinalBlur);

  RgbImage out(cfg.canvas_px, cfg.canvas_px);
  const double c = cfg.canvas_px / 2.0;
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      std::uint8_t* px = out.px(x, y);
      if (std::hypot(x - c, y - c) > cfg.mask_radius_px) continue;  // stays black
      const auto q = static_cast<std::uint8_t>(std::clamp(std::lround(img.at(x, y)), 0L, 255L));
      const auto rgb = jet_color(q);
      px[0] = rgb[0];
      px[1] = rgb[1];
      px[2] = rgb[2];
    }
  }
  return out;
}

}  // namespace wafertopo::synth
