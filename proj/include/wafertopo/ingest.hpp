#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wafertopo/image.hpp"
#include "wafertopo/manifest.hpp"

namespace wafertopo::ingest {

enum class ResizeMode { Nearest, Bilinear };

struct Size {
  int width = 0;
  int height = 0;
  bool operator==(const Size&) const = default;
};

// Parses "WxH" (e.g. "35x35").
Size parse_size(const std::string& text);

struct CorpusItem {
  std::string id;
  GrayImage image;                  // at the corpus target size
  std::optional<WaferGrid> grid;    // native-resolution grid when the PNG is palette-rendered
  std::optional<std::string> label;
};

struct Corpus {
  Size target_size;
  std::vector<CorpusItem> items;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
  std::vector<std::string> ids() const;
};

struct ItemError {
  std::string id;
  std::string message;
};

struct LoadResult {
  Corpus corpus;
  std::vector<ItemError> errors;
};

using Palette = std::array<std::array<std::uint8_t, 3>, 3>;

/// Rec.601 luminance, scaled to [0, 1].
GrayImage to_gray(const RgbImage& img);

/// Nearest keeps the input value set; bilinear samples at pixel centres with
/// edge clamping. Both are exact identities when the size does not change.
GrayImage resize(const GrayImage& img, Size target, ResizeMode mode);

/// Inverse of the palette renderer. Each pixel must lie within `tolerance`
/// per channel of one palette colour, otherwise ValidationError names the
/// offending pixel.
WaferGrid grid_from_colors(const RgbImage& img, const Palette& palette, int tolerance = 8);

/// Decodes every manifest entry in manifest order. Unreadable items are skipped
/// and reported in LoadResult::errors; the rest of the batch continues.
LoadResult load_corpus(const DatasetManifest& manifest, Size target, ResizeMode mode = ResizeMode::Bilinear);

/// Concatenates corpora that share a target size. Ids must stay unique.
Corpus concat(std::vector<Corpus> parts);

// Versioned little-endian cache, magic "WTC1".
std::vector<std::uint8_t> encode_corpus(const Corpus& corpus);
Corpus decode_corpus(std::span<const std::uint8_t> bytes);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);
Corpus read_corpus(const std::filesystem::path& path);

}  // namespace wafertopo::ingest
