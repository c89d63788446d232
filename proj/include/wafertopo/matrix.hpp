#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace wafertopo {

/// N x D row-major float matrix with one id per row. Shared by TDA feature
/// dumps and embeddings; on disk it is the WTE1 format:
///   "WTE1", u32 version, u64 N, u32 D, N length-prefixed ids, N*D f32.
struct LabeledMatrix {
  std::vector<std::string> ids;
  std::size_t cols = 0;
  std::vector<float> data;

  LabeledMatrix() = default;
  LabeledMatrix(std::vector<std::string> row_ids, std::size_t d)
      : ids(std::move(row_ids)), cols(d), data(ids.size() * d, 0.0f) {}

  std::size_t rows() const { return ids.size(); }
  float* row(std::size_t i) { return data.data() + i * cols; }
  const float* row(std::size_t i) const { return data.data() + i * cols; }
  std::span<const float> row_span(std::size_t i) const { return {row(i), cols}; }
  bool operator==(const LabeledMatrix&) const = default;
};

std::vector<std::uint8_t> encode_matrix(const LabeledMatrix& m);
/// Throws FormatError on bad magic, unknown version, truncation or trailing bytes.
LabeledMatrix decode_matrix(std::span<const std::uint8_t> bytes);
void save_matrix(const std::filesystem::path& p, const LabeledMatrix& m);
LabeledMatrix load_matrix(const std::filesystem::path& p);

}  // namespace wafertopo
