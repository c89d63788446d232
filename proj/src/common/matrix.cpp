#include "wafertopo/matrix.hpp"

#include "wafertopo/error.hpp"
#include "wafertopo/io.hpp"

namespace wafertopo {

namespace {
constexpr std::uint32_t kMatrixVersion = 1;
}

std::vector<std::uint8_t> encode_matrix(const LabeledMatrix& m) {
  if (m.data.size() != m.rows() * m.cols) throw ValidationError("matrix: data size does not match shape");
  ByteWriter w;
  w.magic("WTE1");
  w.u32(kMatrixVersion);
  w.u64(m.rows());
  w.u32(static_cast<std::uint32_t>(m.cols));
  for (const auto& id : m.ids) w.str(id);
  for (float v : m.data) w.f32(v);
  return w.take();
}

LabeledMatrix decode_matrix(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("WTE1");
  if (const auto v = r.u32(); v != kMatrixVersion) throw FormatError("matrix: unsupported version " + std::to_string(v));
  const std::uint64_t n = r.u64();
  const std::uint32_t d = r.u32();
  // every row needs at least a 4-byte id prefix and 4*d payload bytes
  if (n > r.remaining() / (4 + 4ULL * d)) throw FormatError("matrix: header claims more rows than the payload holds");
  LabeledMatrix m;
  m.cols = d;
  m.ids.reserve(static_cast<std::size_t>(n));
  for (std::uint64_t i = 0; i < n; ++i) m.ids.push_back(r.str());
  m.data.resize(static_cast<std::size_t>(n) * d);
  for (float& v : m.data) v = r.f32();
  if (!r.at_end()) throw FormatError("matrix: trailing bytes");
  return m;
}

void save_matrix(const std::filesystem::path& p, const LabeledMatrix& m) { write_file_atomic(p, encode_matrix(m)); }

LabeledMatrix load_matrix(const std::filesystem::path& p) { return decode_matrix(read_file(p)); }

}  // namespace wafertopo
