#pragma once

// Procedural generators for the two synthetic wafer-map datasets:
//   SPVD - 400x400 JET-coloured process-variation images, "good" or "faulty" (strokes).
//   SWED - 128x128 three-state wafer grids in nine WM-811K-like classes.
// Every generator is a pure function of (config, seed).

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "wafertopo/image.hpp"
#include "wafertopo/manifest.hpp"

namespace wafertopo::synth {

struct SpvdConfig {
  int image_count = 200;
  double faulty_fraction = 0.5;
  int canvas_px = 400;
  int mask_radius_px = 200;
  std::uint64_t seed = 42;

  void validate() const;
  // floor(image_count * faulty_fraction)
  int faulty_count() const;
};

struct SwedConfig {
  int per_class_count = 200;
  int grid_px = 128;
  double wafer_radius_fraction = 0.94;
  std::uint64_t seed = 42;

  void validate() const;
  double wafer_radius() const { return wafer_radius_fraction * grid_px / 2.0; }
};

// RNG stream ids. Each generation stage draws from its own stream so that
// enabling one stage never shifts the draws of another.
enum Stream : std::uint32_t {
  kSpvdBase = 1,
  kSpvdTexture = 2,
  kSpvdDefects = 3,
  kSwedPrimitive = 11,
  kSwedNoise = 12,
  kDatasetOrder = 21,
};

inline constexpr std::array<std::array<std::uint8_t, 3>, 3> kSwedPalette = {{
    {0x44, 0x01, 0x54},  // 0 background
    {0x21, 0x91, 0x8c},  // 1 pass
    {0xfd, 0xe7, 0x25},  // 2 fail
}};

RgbImage gen_spvd_image(std::uint64_t seed, bool is_faulty, const SpvdConfig& config = {});

/// Writes `images/<id>.png` plus `manifest.csv` under out_dir. Exactly
/// faulty_count() entries are labelled "faulty", the rest "good". Ids are
/// assigned in a seeded shuffled order so they carry no label information.
/// On I/O failure every file written so far is removed and IoError is thrown.
DatasetManifest gen_spvd_dataset(const SpvdConfig& config, const std::filesystem::path& out_dir);

WaferGrid gen_swed_grid(WaferClass label, std::uint64_t seed, const SwedConfig& config = {});

/// One scale x scale pixel block per cell, coloured with kSwedPalette.
RgbImage render_swed(const WaferGrid& grid, int scale = 1);

DatasetManifest gen_swed_dataset(const SwedConfig& config, const std::filesystem::path& out_dir);

/// Randomized-parameter variants for foundational pre-training. Even positions
/// are SWED-like grids (random class, grid size in {64, 96, 128, 160}, wafer
/// radius fraction in [0.85, 0.97]); odd positions are SPVD-like images (mask
/// radius in [160, 200], faulty with probability 0.5). Labels are
/// "swed:<class>" and "spvd:<good|faulty>".
DatasetManifest gen_variant_dataset(int count, std::uint64_t seed, const std::filesystem::path& out_dir);

// Per-item seeds used by the dataset writers.
std::uint64_t spvd_item_seed(std::uint64_t master, int index);
std::uint64_t swed_item_seed(std::uint64_t master, WaferClass c, int index);

// Building blocks, exposed for tests.
//
// Normalised Gaussian taps for an odd kernel size k with
// sigma = 0.3 * ((k - 1) * 0.5 - 1) + 0.8.
std::vector<double> gaussian_kernel(int k);
// Separable blur with reflect-101 borders on a row-major plane.
void gaussian_blur(std::vector<float>& plane, int width, int height, int k);
// Piecewise-linear jet colormap over [0, 255].
std::array<std::uint8_t, 3> jet_color(std::uint8_t v);

}  // namespace wafertopo::synth
