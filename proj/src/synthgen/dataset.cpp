#include <algorithm>
#include <cstdio>
#include <functional>
#include <mutex>
#include <numeric>

#include "wafertopo/error.hpp"
#include "wafertopo/io.hpp"
#include "wafertopo/parallel.hpp"
#include "wafertopo/rng.hpp"
#include "wafertopo/synthgen.hpp"

namespace wafertopo::synth {

namespace fs = std::filesystem;

std::uint64_t spvd_item_seed(std::uint64_t master, int index) {
  return derive_seed(master, {0x5350u, static_cast<std::uint64_t>(index)});
}

std::uint64_t swed_item_seed(std::uint64_t master, WaferClass c, int index) {
  return derive_seed(master, {0x5357u, static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(index)});
}

namespace {

struct PendingItem {
  std::string label;
  std::function<RgbImage()> render;
};

std::string make_id(std::string_view prefix, std::size_t pos, std::size_t total) {
  const int width = std::max<int>(4, static_cast<int>(std::to_string(total).size()));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, pos);
  return std::string(prefix) + "_" + buf;
}

// Shuffles items into a seeded order, renders them in parallel and writes the
// manifest last. Any failure removes everything written so far.
DatasetManifest write_dataset(std::vector<PendingItem> items, std::string_view prefix, std::uint64_t seed,
                              const fs::path& out_dir) {
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, kDatasetOrder);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);

  DatasetManifest m;
  m.base_dir = out_dir;
  m.entries.resize(items.size());
  for (std::size_t pos = 0; pos < items.size(); ++pos) {
    auto& e = m.entries[pos];
    e.id = make_id(prefix, pos, items.size());
    e.path = "images/" + e.id + ".png";
    e.label = items[order[pos]].label;
    e.split = "all";
  }

  std::vector<char> written(items.size(), 0);
  auto cleanup = [&] {
    std::error_code ec;
    for (std::size_t i = 0; i < written.size(); ++i)
      if (written[i]) fs::remove(m.resolve(m.entries[i]), ec);
    fs::remove(out_dir / "manifest.csv", ec);
  };
  try {
    fs::create_directories(out_dir);
    if (!items.empty()) fs::create_directories(out_dir / "images");
    parallel_for(items.size(), [&](std::size_t pos) {
      write_png(m.resolve(m.entries[pos]), items[order[pos]].render());
      written[pos] = 1;
    });
    write_manifest(out_dir / "manifest.csv", m);
  } catch (const fs::filesystem_error& e) {
    cleanup();
    throw IoError(std::string("dataset generation failed: ") + e.what());
  } catch (const IoError&) {
    cleanup();
    throw;
  }
  return m;
}

}  // namespace

DatasetManifest gen_spvd_dataset(const SpvdConfig& config, const fs::path& out_dir) {
  config.validate();
  const int faulty = config.faulty_count();
  std::vector<PendingItem> items;
  items.reserve(static_cast<std::size_t>(config.image_count));
  for (int i = 0; i < config.image_count; ++i) {
    const bool is_faulty = i < faulty;
    const std::uint64_t s = spvd_item_seed(config.seed, i);
    items.push_back({is_faulty ? "faulty" : "good", [s, is_faulty, config] { return gen_spvd_image(s, is_faulty, config); }});
  }
  return write_dataset(std::move(items), "spvd", config.seed, out_dir);
}

DatasetManifest gen_swed_dataset(const SwedConfig& config, const fs::path& out_dir) {
  config.validate();
  std::vector<PendingItem> items;
  items.reserve(kWaferClasses.size() * static_cast<std::size_t>(config.per_class_count));
  for (WaferClass c : kWaferClasses)
    for (int k = 0; k < config.per_class_count; ++k) {
      const std::uint64_t s = swed_item_seed(config.seed, c, k);
      items.push_back({std::string(to_string(c)), [s, c, config] { return render_swed(gen_swed_grid(c, s, config)); }});
    }
  return write_dataset(std::move(items), "swed", config.seed, out_dir);
}

DatasetManifest gen_variant_dataset(int count, std::uint64_t seed, const fs::path& out_dir) {
  if (count < 0) throw ValidationError("variants: count must be non-negative");
  static constexpr int kGridSizes[] = {64, 96, 128, 160};
  std::vector<PendingItem> items;
  items.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = derive_seed(seed, {0x5641u, static_cast<std::uint64_t>(i)});
    Rng r(s, kSpvdBase + 100);
    if (i % 2 == 0) {
      SwedConfig cfg;
      cfg.grid_px = kGridSizes[r.uniform_int(0, 3)];
      cfg.wafer_radius_fraction = r.uniform(0.85, 0.97);
      const WaferClass c = kWaferClasses[static_cast<std::size_t>(r.uniform_int(0, 8))];
      items.push_back({"swed:" + std::string(to_string(c)), [s, c, cfg] { return render_swed(gen_swed_grid(c, s, cfg)); }});
    } else {
      SpvdConfig cfg;
      cfg.mask_radius_px = static_cast<int>(r.uniform_int(160, 200));
      const bool faulty = r.uniform() < 0.5;
      items.push_back({faulty ? "spvd:faulty" : "spvd:good", [s, faulty, cfg] { return gen_spvd_image(s, faulty, cfg); }});
    }
  }
  return write_dataset(std::move(items), "var", seed, out_dir);
}

}  // namespace wafertopo::synth
