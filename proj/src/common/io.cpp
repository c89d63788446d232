#include "wafertopo/io.hpp"

#include <png.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <csetjmp>

#include "wafertopo/error.hpp"

namespace wafertopo {

namespace fs = std::filesystem;

void Fnv1a::update(const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h_ ^= p[i];
    h_ *= 0x100000001b3ULL;
  }
}

std::uint64_t hash_bytes(std::span<const std::uint8_t> bytes) {
  Fnv1a h;
  h.update(bytes.data(), bytes.size());
  return h.digest();
}

std::uint64_t hash_file(const fs::path& p) { return hash_bytes(read_file(p)); }

std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
    v >>= 4;
  }
  return s;
}

std::vector<std::uint8_t> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  in.seekg(0, std::ios::end);
  const auto n = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> buf(n);
  if (n > 0 && !in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n)))
    throw IoError("cannot read " + p.string());
  return buf;
}

void write_file_atomic(const fs::path& p, std::span<const std::uint8_t> bytes) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, p, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("cannot rename into " + p.string() + ": " + ec.message());
  }
}

void write_text_atomic(const fs::path& p, std::string_view text) {
  write_file_atomic(p, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

// -- binary ------------------------------------------------------------------

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
void ByteWriter::bytes(const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  buf_.insert(buf_.end(), p, p + n);
}
void ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s.data(), s.size());
}

void ByteReader::need(std::size_t n) const {
  if (data_.size() - pos_ < n) throw FormatError("truncated input");
}
std::uint8_t ByteReader::u8() {
  need(1);
  return data_[pos_++];
}
std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}
std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}
float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }
void ByteReader::bytes(void* out, std::size_t n) {
  need(n);
  if (n > 0) std::memcpy(out, data_.data() + pos_, n);
  pos_ += n;
}
void ByteReader::expect_magic(std::string_view m) {
  need(m.size());
  if (std::memcmp(data_.data() + pos_, m.data(), m.size()) != 0)
    throw FormatError("bad magic, expected " + std::string(m));
  pos_ += m.size();
}
std::string ByteReader::str() {
  const std::uint32_t n = u32();
  need(n);
  std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
  pos_ += n;
  return s;
}

// -- csv ---------------------------------------------------------------------

std::vector<CsvRow> parse_csv(std::string_view text) {
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  bool in_quotes = false;
  bool row_has_content = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        row_has_content = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        row_has_content = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_has_content || !field.empty()) {
          row.push_back(std::move(field));
          rows.push_back(std::move(row));
        }
        row.clear();
        field.clear();
        row_has_content = false;
        break;
      default:
        field.push_back(c);
        row_has_content = true;
    }
  }
  if (in_quotes) throw FormatError("unterminated quote in CSV");
  if (row_has_content || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_csv_row(const CsvRow& row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out.push_back(',');
    const std::string& f = row[i];
    if (f.find_first_of(",\"\n\r") != std::string::npos) {
      out.push_back('"');
      for (char c : f) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
      }
      out.push_back('"');
    } else {
      out += f;
    }
  }
  out.push_back('\n');
  return out;
}

// -- png ---------------------------------------------------------------------
//
// libpng reports errors through longjmp; nothing with a non-trivial destructor
// may live in a frame between setjmp and the libpng calls below.

namespace {

struct PngIo {
  std::span<const std::uint8_t> in;
  std::size_t pos = 0;
  std::vector<std::uint8_t>* out = nullptr;
  char message[256] = {0};
};

void png_read_cb(png_structp png, png_bytep dst, png_size_t n) {
  auto* io = static_cast<PngIo*>(png_get_io_ptr(png));
  if (io->in.size() - io->pos < n) png_error(png, "truncated PNG");
  std::memcpy(dst, io->in.data() + io->pos, n);
  io->pos += n;
}

void png_write_cb(png_structp png, png_bytep data, png_size_t n) {
  auto* io = static_cast<PngIo*>(png_get_io_ptr(png));
  io->out->insert(io->out->end(), data, data + n);
}

void png_flush_cb(png_structp) {}

void png_error_cb(png_structp png, png_const_charp msg) {
  auto* io = static_cast<PngIo*>(png_get_error_ptr(png));
  std::strncpy(io->message, msg, sizeof(io->message) - 1);
  png_longjmp(png, 1);
}

void png_warning_cb(png_structp, png_const_charp) {}

// Returns false on libpng error; `img` receives the decoded pixels.
bool decode_png(PngIo& io, RgbImage& img, std::vector<png_bytep>& rows) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &io, png_error_cb, png_warning_cb);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, &io, png_read_cb);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const auto w = png_get_image_width(png, info);
  const auto h = png_get_image_height(png, info);
  if (png_get_rowbytes(png, info) != static_cast<png_size_t>(w) * 3) png_error(png, "unexpected row layout");
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.pixels.assign(static_cast<std::size_t>(w) * h * 3, 0);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = img.px(0, static_cast<int>(y));
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

bool encode_png_impl(PngIo& io, const RgbImage& img) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &io, png_error_cb, png_warning_cb);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, &io, png_write_cb, png_flush_cb);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) png_write_row(png, const_cast<png_bytep>(img.px(0, y)));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace

RgbImage read_png(const fs::path& p) {
  const auto bytes = read_file(p);
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw FormatError("not a PNG: " + p.string());
  PngIo io;
  io.in = bytes;
  RgbImage img;
  std::vector<png_bytep> rows;
  if (!decode_png(io, img, rows)) throw FormatError("png decode failed for " + p.string() + ": " + io.message);
  return img;
}

std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  if (img.width <= 0 || img.height <= 0) throw ValidationError("cannot encode an empty image");
  std::vector<std::uint8_t> out;
  PngIo io;
  io.out = &out;
  if (!encode_png_impl(io, img)) throw IoError(std::string("png encode failed: ") + io.message);
  return out;
}

void write_png(const fs::path& p, const RgbImage& img) { write_file_atomic(p, encode_png(img)); }

}  // namespace wafertopo
