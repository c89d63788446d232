#include <cmath>

#include "echo.hpp"
#include "wafertopo/error.hpp"
#include "wafertopo/io.hpp"

namespace wafertopo::sslnet {

namespace detail {

json arch_to_json(const EncoderArch& a) {
  return {{"width", a.width},   {"height", a.height}, {"filters", a.filters},
          {"tda_dim", a.tda_dim}, {"hidden", a.hidden}, {"out_dim", a.out_dim}};
}

EncoderArch arch_from_json(const json& j) {
  EncoderArch a;
  a.width = j.at("width").get<int>();
  a.height = j.at("height").get<int>();
  a.filters = j.at("filters").get<std::array<int, 3>>();
  a.tda_dim = j.at("tda_dim").get<int>();
  a.hidden = j.at("hidden").get<int>();
  a.out_dim = j.at("out_dim").get<int>();
  return a;
}

json config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"final_lr_fraction", c.final_lr_fraction},
          {"temperature", c.temperature},
          {"optimizer", c.optimizer == OptimizerKind::Sgd ? "sgd" : "adam"},
          {"momentum", c.momentum},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"weight_decay", c.weight_decay},
          {"tda_noise", c.tda_noise},
          {"seed", c.seed}};
}

json augmentation_to_json(const AugmentationSpec& s) {
  json j = {{"h_flip", s.h_flip}, {"v_flip", s.v_flip}, {"rotation_deg", {s.rotation_lo, s.rotation_hi}}};
  j["crop"] = s.crop ? json{{"min_area_fraction", s.crop->min_area_fraction}} : json(nullptr);
  j["fill_value"] = std::isnan(s.fill_value) ? json("corner") : json(s.fill_value);
  return j;
}

}  // namespace detail

using detail::json;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  const auto layout = tensor_layout(c.arch);
  if (c.params.size() != parameter_count(c.arch)) throw ValidationError("checkpoint: parameter count does not match architecture");
  json header;
  header["arch"] = detail::arch_to_json(c.arch);
  try {
    header["echo"] = json::parse(c.echo_json);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint: echo is not valid JSON: ") + e.what());
  }
  ByteWriter w;
  w.magic("WTK1");
  w.u32(Checkpoint::kVersion);
  w.str(header.dump());
  w.u32(static_cast<std::uint32_t>(layout.size()));
  for (const auto& t : layout) {
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < t.size; ++i) w.f32(c.params[t.offset + i]);
  }
  w.u64(c.loss_curve.size());
  for (double v : c.loss_curve) w.f64(v);
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("WTK1");
  if (const auto v = r.u32(); v != Checkpoint::kVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(v));
  Checkpoint c;
  try {
    const json header = json::parse(r.str());
    c.arch = detail::arch_from_json(header.at("arch"));
    c.echo_json = header.at("echo").dump();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  }
  std::vector<TensorInfo> layout;
  try {
    layout = tensor_layout(c.arch);
  } catch (const ValidationError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  c.params.assign(parameter_count(c.arch), 0.0f);
  if (r.u32() != layout.size()) throw FormatError("checkpoint: tensor count does not match architecture");
  for (const auto& t : layout) {
    if (r.str() != t.name) throw FormatError("checkpoint: unexpected tensor, wanted " + t.name);
    const std::uint32_t rank = r.u32();
    if (rank != t.shape.size()) throw FormatError("checkpoint: rank mismatch for " + t.name);
    for (int d : t.shape)
      if (r.u32() != static_cast<std::uint32_t>(d)) throw FormatError("checkpoint: shape mismatch for " + t.name);
    if (r.remaining() < 4 * t.size) throw FormatError("checkpoint: truncated tensor " + t.name);
    for (std::size_t i = 0; i < t.size; ++i) {
      const float v = r.f32();
      if (!std::isfinite(v)) throw FormatError("checkpoint: non-finite weight in " + t.name);
      c.params[t.offset + i] = v;
    }
  }
  const std::uint64_t n = r.u64();
  if (n > r.remaining() / 8) throw FormatError("checkpoint: truncated loss curve");
  c.loss_curve.resize(static_cast<std::size_t>(n));
  for (double& v : c.loss_curve) v = r.f64();
  if (!r.at_end()) throw FormatError("checkpoint: trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path& p, const Checkpoint& c) { write_file_atomic(p, encode_checkpoint(c)); }

Checkpoint load_checkpoint(const std::filesystem::path& p) { return decode_checkpoint(read_file(p)); }

}  // namespace wafertopo::sslnet
