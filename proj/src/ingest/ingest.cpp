#include "wafertopo/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <unordered_set>

#include "wafertopo/error.hpp"
#include "wafertopo/io.hpp"
#include "wafertopo/parallel.hpp"
#include "wafertopo/synthgen.hpp"

namespace wafertopo::ingest {

namespace {
constexpr std::uint32_t kCorpusVersion = 1;
constexpr std::uint8_t kNoClass = 0xff;
}  // namespace

Size parse_size(const std::string& text) {
  const auto x = text.find_first_of("xX");
  if (x == std::string::npos) throw ValidationError("size must look like WxH, got '" + text + "'");
  char* end = nullptr;
  const long w = std::strtol(text.c_str(), &end, 10);
  if (end != text.c_str() + x) throw ValidationError("bad width in size '" + text + "'");
  const long h = std::strtol(text.c_str() + x + 1, &end, 10);
  if (*end != '\0') throw ValidationError("bad height in size '" + text + "'");
  if (w <= 0 || h <= 0 || w > 1 << 15 || h > 1 << 15) throw ValidationError("size must be positive: '" + text + "'");
  return {static_cast<int>(w), static_cast<int>(h)};
}

std::vector<std::string> Corpus::ids() const {
  std::vector<std::string> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(it.id);
  return out;
}

GrayImage to_gray(const RgbImage& img) {
  GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const std::uint8_t* p = img.px(x, y);
      const double l = (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) / 255.0;
      out.at(x, y) = static_cast<float>(std::clamp(l, 0.0, 1.0));
    }
  return out;
}

GrayImage resize(const GrayImage& img, Size target, ResizeMode mode) {
  if (target.width <= 0 || target.height <= 0) throw ValidationError("resize: target size must be positive");
  if (img.empty()) throw ValidationError("resize: empty image");
  if (target.width == img.width && target.height == img.height) return img;

  GrayImage out(target.width, target.height);
  const double sx = static_cast<double>(img.width) / target.width;
  const double sy = static_cast<double>(img.height) / target.height;
  if (mode == ResizeMode::Nearest) {
    for (int y = 0; y < target.height; ++y) {
      const int yy = std::min(img.height - 1, static_cast<int>(std::floor((y + 0.5) * sy)));
      for (int x = 0; x < target.width; ++x) {
        const int xx = std::min(img.width - 1, static_cast<int>(std::floor((x + 0.5) * sx)));
        out.at(x, y) = img.at(xx, yy);
      }
    }
    return out;
  }
  for (int y = 0; y < target.height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < target.width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      const double top = img.at(x0, y0) * (1.0 - wx) + img.at(x1, y0) * wx;
      const double bot = img.at(x0, y1) * (1.0 - wx) + img.at(x1, y1) * wx;
      out.at(x, y) = static_cast<float>(top * (1.0 - wy) + bot * wy);
    }
  }
  return out;
}

WaferGrid grid_from_colors(const RgbImage& img, const Palette& palette, int tolerance) {
  WaferGrid g(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const std::uint8_t* p = img.px(x, y);
      int match = -1;
      for (int k = 0; k < 3 && match < 0; ++k) {
        const auto& c = palette[static_cast<std::size_t>(k)];
        if (std::abs(p[0] - c[0]) <= tolerance && std::abs(p[1] - c[1]) <= tolerance &&
            std::abs(p[2] - c[2]) <= tolerance)
          match = k;
      }
      if (match < 0)
        throw ValidationError("off-palette pixel at (" + std::to_string(x) + ", " + std::to_string(y) + ")");
      g.at(x, y) = static_cast<std::uint8_t>(match);
    }
  return g;
}

LoadResult load_corpus(const DatasetManifest& manifest, Size target, ResizeMode mode) {
  if (target.width <= 0 || target.height <= 0) throw ValidationError("load_corpus: target size must be positive");
  const std::size_t n = manifest.entries.size();
  std::vector<std::optional<CorpusItem>> slots(n);
  std::vector<std::string> failures(n);
  parallel_for(n, [&](std::size_t i) {
    const auto& e = manifest.entries[i];
    try {
      const RgbImage rgb = read_png(manifest.resolve(e));
      CorpusItem item;
      item.id = e.id;
      item.image = resize(to_gray(rgb), target, mode);
      try {
        item.grid = grid_from_colors(rgb, synth::kSwedPalette);
      } catch (const ValidationError&) {
        // not a palette-rendered wafer map; image-only item
      }
      if (!e.label.empty()) item.label = e.label;
      slots[i] = std::move(item);
    } catch (const Error& err) {
      failures[i] = err.what();
    }
  });

  LoadResult result;
  result.corpus.target_size = target;
  for (std::size_t i = 0; i < n; ++i) {
    if (slots[i]) {
      result.corpus.items.push_back(std::move(*slots[i]));
    } else {
      result.errors.push_back({manifest.entries[i].id, failures[i]});
    }
  }
  return result;
}

Corpus concat(std::vector<Corpus> parts) {
  Corpus out;
  if (parts.empty()) return out;
  out.target_size = parts.front().target_size;
  std::unordered_set<std::string> seen;
  for (auto& p : parts) {
    if (!p.empty() && !(p.target_size == out.target_size))
      throw ValidationError("concat: corpora have different target sizes");
    for (auto& it : p.items) {
      if (!seen.insert(it.id).second) throw ValidationError("concat: duplicate id '" + it.id + "'");
      out.items.push_back(std::move(it));
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_corpus(const Corpus& corpus) {
  ByteWriter w;
  w.magic("WTC1");
  w.u32(kCorpusVersion);
  w.u32(static_cast<std::uint32_t>(corpus.target_size.width));
  w.u32(static_cast<std::uint32_t>(corpus.target_size.height));
  w.u64(corpus.items.size());
  for (const auto& it : corpus.items) {
    w.str(it.id);
    w.u8(it.label ? 1 : 0);
    if (it.label) w.str(*it.label);
    for (float v : it.image.values) w.f32(v);
    w.u8(it.grid ? 1 : 0);
    if (it.grid) {
      w.u32(static_cast<std::uint32_t>(it.grid->width));
      w.u32(static_cast<std::uint32_t>(it.grid->height));
      w.u8(it.grid->class_label ? static_cast<std::uint8_t>(*it.grid->class_label) : kNoClass);
      w.bytes(it.grid->cells.data(), it.grid->cells.size());
    }
  }
  return w.take();
}

Corpus decode_corpus(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("WTC1");
  if (const auto v = r.u32(); v != kCorpusVersion) throw FormatError("unsupported corpus version " + std::to_string(v));
  Corpus c;
  c.target_size.width = static_cast<int>(r.u32());
  c.target_size.height = static_cast<int>(r.u32());
  const std::uint64_t n = r.u64();
  const std::size_t pixels = static_cast<std::size_t>(c.target_size.width) * c.target_size.height;
  if (pixels == 0 && n > 0) throw FormatError("corpus: zero target size");
  if (n > r.remaining() / (pixels * 4 + 6)) throw FormatError("corpus: item count exceeds payload");
  c.items.reserve(static_cast<std::size_t>(n));
  for (std::uint64_t i = 0; i < n; ++i) {
    CorpusItem it;
    it.id = r.str();
    if (r.u8()) it.label = r.str();
    it.image = GrayImage(c.target_size.width, c.target_size.height);
    for (float& v : it.image.values) v = r.f32();
    if (r.u8()) {
      const int gw = static_cast<int>(r.u32());
      const int gh = static_cast<int>(r.u32());
      const std::uint8_t cls = r.u8();
      if (static_cast<std::uint64_t>(gw) * static_cast<std::uint64_t>(gh) > r.remaining())
        throw FormatError("corpus: grid exceeds payload");
      WaferGrid g(gw, gh);
      if (cls != kNoClass) {
        if (cls >= kWaferClasses.size()) throw FormatError("corpus: bad class id");
        g.class_label = static_cast<WaferClass>(cls);
      }
      r.bytes(g.cells.data(), g.cells.size());
      it.grid = std::move(g);
    }
    c.items.push_back(std::move(it));
  }
  if (!r.at_end()) throw FormatError("corpus: trailing bytes");
  return c;
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  write_file_atomic(path, encode_corpus(corpus));
}

Corpus read_corpus(const std::filesystem::path& path) { return decode_corpus(read_file(path)); }

}  // namespace wafertopo::ingest
