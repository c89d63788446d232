#pragma once

// Small I/O helpers shared by the binary formats, manifests and caches.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wafertopo/image.hpp"

namespace wafertopo {

// FNV-1a, 64 bit.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n);
  void update(std::string_view s) { update(s.data(), s.size()); }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

std::uint64_t hash_bytes(std::span<const std::uint8_t> bytes);
std::uint64_t hash_file(const std::filesystem::path& p);
std::string hex64(std::uint64_t v);

std::vector<std::uint8_t> read_file(const std::filesystem::path& p);
// Writes to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& p, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& p, std::string_view text);

/// Little-endian serializer.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void bytes(const void* data, std::size_t n);
  void magic(std::string_view m) { bytes(m.data(), m.size()); }
  // u32 length prefix followed by the raw bytes.
  void str(std::string_view s);
  const std::vector<std::uint8_t>& data() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Little-endian deserializer; every read is bounds checked and throws
/// FormatError on truncation.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  void bytes(void* out, std::size_t n);
  void expect_magic(std::string_view m);
  std::string str();
  std::size_t remaining() const { return data_.size() - pos_; }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const;
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

// Minimal RFC 4180 CSV.
using CsvRow = std::vector<std::string>;
std::vector<CsvRow> parse_csv(std::string_view text);
std::string format_csv_row(const CsvRow& row);

// PNG via libpng. Decoding converts gray, palette and alpha variants to 8-bit RGB.
RgbImage read_png(const std::filesystem::path& p);
std::vector<std::uint8_t> encode_png(const RgbImage& img);
void write_png(const std::filesystem::path& p, const RgbImage& img);

}  // namespace wafertopo
