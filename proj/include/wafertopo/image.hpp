#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace wafertopo {

/// Row-major grayscale image. Values are expected in [0, 1].
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  GrayImage() = default;
  GrayImage(int w, int h, float fill = 0.0f) : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }
  bool operator==(const GrayImage&) const = default;
};

/// Row-major 8-bit RGB triples.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t* px(int x, int y) { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* px(int x, int y) const { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
  bool operator==(const RgbImage&) const = default;
};

enum class WaferClass : std::uint8_t { None, Center, Donut, EdgeLoc, EdgeRing, Loc, Random, Scratch, NearFull };

inline constexpr std::array<WaferClass, 9> kWaferClasses = {
    WaferClass::None, WaferClass::Center, WaferClass::Donut,  WaferClass::EdgeLoc, WaferClass::EdgeRing,
    WaferClass::Loc,  WaferClass::Random, WaferClass::Scratch, WaferClass::NearFull};

std::string_view to_string(WaferClass c);
std::optional<WaferClass> wafer_class_from_string(std::string_view s);

/// Cell states of a wafer map.
enum CellState : std::uint8_t { kBackground = 0, kPass = 1, kFail = 2 };

/// Discrete wafer map. Cells take values in {0 background, 1 pass, 2 fail}.
struct WaferGrid {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> cells;
  std::optional<WaferClass> class_label;

  WaferGrid() = default;
  WaferGrid(int w, int h) : width(w), height(h), cells(static_cast<std::size_t>(w) * h, kBackground) {}

  std::uint8_t& at(int x, int y) { return cells[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return cells[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count(std::uint8_t v) const;
  bool operator==(const WaferGrid&) const = default;
};

}  // namespace wafertopo
