#include "wafertopo/image.hpp"

#include <algorithm>

namespace wafertopo {

std::string_view to_string(WaferClass c) {
  switch (c) {
    case WaferClass::None: return "None";
    case WaferClass::Center: return "Center";
    case WaferClass::Donut: return "Donut";
    case WaferClass::EdgeLoc: return "Edge-Loc";
    case WaferClass::EdgeRing: return "Edge-Ring";
    case WaferClass::Loc: return "Loc";
    case WaferClass::Random: return "Random";
    case WaferClass::Scratch: return "Scratch";
    case WaferClass::NearFull: return "Near-Full";
  }
  return "None";
}

std::optional<WaferClass> wafer_class_from_string(std::string_view s) {
  for (WaferClass c : kWaferClasses)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

std::size_t WaferGrid::count(std::uint8_t v) const {
  return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), v));
}

}  // namespace wafertopo
