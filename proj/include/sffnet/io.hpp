#ifndef SFFNET_IO_HPP
#define SFFNET_IO_HPP

// File formats. Needs libpng (link sffnet_io).

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sffnet/data.hpp"
#include "sffnet/labels.hpp"
#include "sffnet/tensor.hpp"

namespace sffnet {

/// Missing, unreadable or unwritable files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file contents; `offset` is the byte position of the problem.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

using Bytes = std::vector<std::uint8_t>;

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const Bytes& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

// --- little-endian primitives ---------------------------------------------------

class ByteWriter {
 public:
  template <typename U>
  void put(U v) {
    static_assert(std::is_trivially_copyable_v<U>);
    std::array<std::uint8_t, sizeof(U)> b;
    std::memcpy(b.data(), &v, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
    bytes_.insert(bytes_.end(), b.begin(), b.end());
  }
  void put_bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), c, c + n);
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  Bytes take() { return std::move(bytes_); }
  std::size_t size() const { return bytes_.size(); }

 private:
  Bytes bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const Bytes& b) : b_(b) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    std::array<std::uint8_t, sizeof(U)> raw;
    std::memcpy(raw.data(), b_.data() + pos_, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    U v;
    std::memcpy(&v, raw.data(), sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  void get_bytes(void* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, b_.data() + pos_, n);
    pos_ += n;
  }
  std::string get_string(const char* what) {
    const auto n = get<std::uint32_t>(what);
    std::string s(n, '\0');
    get_bytes(s.data(), n, what);
    return s;
  }
  void need(std::size_t n, const char* what) const {
    if (b_.size() - pos_ < n) {
      throw ParseError(std::string(what) + ": expected " + std::to_string(n) + " bytes, found " +
                           std::to_string(b_.size() - pos_),
                       pos_);
    }
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }

 private:
  const Bytes& b_;
  std::size_t pos_ = 0;
};

// --- tensor file ------------------------------------------------------------------
//   "SFFT" | u16 version | u8 dtype | u8 ndim | u32 dims[ndim] | payload (little endian)

enum class DType : std::uint8_t { f32 = 0, f64 = 1, i32 = 2 };

inline constexpr std::uint16_t kTensorFileVersion = 1;
inline constexpr std::size_t kMaxTensorDims = 8;

inline std::size_t dtype_size(DType d) { return d == DType::f64 ? 8 : 4; }

template <typename T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, float>) return DType::f32;
  else if constexpr (std::is_same_v<T, double>) return DType::f64;
  else {
    static_assert(std::is_same_v<T, std::int32_t>, "unsupported tensor file element type");
    return DType::i32;
  }
}

/// Decoded tensor file: raw little-endian payload plus its header.
struct TensorFile {
  DType dtype = DType::f32;
  std::vector<std::uint32_t> dims;
  Bytes payload;

  std::size_t numel() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
  bool operator==(const TensorFile&) const = default;
};

inline Bytes encode_tensor_file(const TensorFile& f) {
  if (f.dims.size() > kMaxTensorDims) throw ShapeError("tensor file: too many dims");
  if (f.payload.size() != f.numel() * dtype_size(f.dtype)) throw ShapeError("tensor file: payload size mismatch");
  ByteWriter w;
  w.put_bytes("SFFT", 4);
  w.put<std::uint16_t>(kTensorFileVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(f.dtype));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(f.dims.size()));
  for (auto d : f.dims) w.put<std::uint32_t>(d);
  w.put_bytes(f.payload.data(), f.payload.size());
  return w.take();
}

inline TensorFile decode_tensor_file(const Bytes& bytes) {
  ByteReader r(bytes);
  char magic[4];
  r.get_bytes(magic, 4, "magic");
  if (std::memcmp(magic, "SFFT", 4) != 0) throw ParseError("tensor file: bad magic", 0);
  const std::size_t vpos = r.pos();
  const auto version = r.get<std::uint16_t>("version");
  if (version != kTensorFileVersion) {
    throw ParseError("tensor file: unsupported version " + std::to_string(version), vpos);
  }
  TensorFile f;
  const std::size_t dpos = r.pos();
  const auto tag = r.get<std::uint8_t>("dtype");
  if (tag > 2) throw ParseError("tensor file: unknown dtype tag " + std::to_string(tag), dpos);
  f.dtype = static_cast<DType>(tag);
  const std::size_t npos = r.pos();
  const auto ndim = r.get<std::uint8_t>("ndim");
  if (ndim > kMaxTensorDims) throw ParseError("tensor file: ndim " + std::to_string(ndim) + " exceeds 8", npos);
  for (int i = 0; i < ndim; ++i) {
    const std::size_t pos = r.pos();
    f.dims.push_back(r.get<std::uint32_t>("dims"));
    if (f.dims.back() == 0) throw ParseError("tensor file: zero extent", pos);
  }
  const std::size_t expect = f.numel() * dtype_size(f.dtype);
  f.payload.resize(expect);
  r.get_bytes(f.payload.data(), expect, "payload");
  if (!r.done()) throw ParseError("tensor file: trailing bytes after payload", r.pos());
  return f;
}

template <typename T>
TensorFile to_tensor_file(const Tensor<T>& t) {
  TensorFile f;
  f.dtype = dtype_of<T>();
  const Shape s = t.shape();
  f.dims = {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c), static_cast<std::uint32_t>(s.h),
            static_cast<std::uint32_t>(s.w)};
  ByteWriter w;
  for (T v : t.data()) w.put<T>(v);
  f.payload = w.take();
  return f;
}

/// Up to four dims, right-aligned into (N, C, H, W).
template <typename T>
Tensor<T> from_tensor_file(const TensorFile& f) {
  if (f.dtype != dtype_of<T>()) throw ShapeError("tensor file: element type mismatch");
  if (f.dims.empty() || f.dims.size() > 4) throw ShapeError("tensor file: need 1 to 4 dims for a feature map");
  std::array<int, 4> e{1, 1, 1, 1};
  for (std::size_t i = 0; i < f.dims.size(); ++i) e[4 - f.dims.size() + i] = static_cast<int>(f.dims[i]);
  Tensor<T> t(Shape{e[0], e[1], e[2], e[3]});
  ByteReader r(f.payload);
  for (auto& v : t.data()) v = r.get<T>("payload");
  return t;
}

template <typename T>
void write_tensor(const std::filesystem::path& path, const Tensor<T>& t) {
  write_file(path, encode_tensor_file(to_tensor_file(t)));
}

template <typename T>
Tensor<T> read_tensor(const std::filesystem::path& path) {
  return from_tensor_file<T>(decode_tensor_file(read_file(path)));
}

// --- PNG ------------------------------------------------------------------------------

using Rgb = std::array<std::uint8_t, 3>;

/// Class colours (impervious, building, low vegetation, tree, car, clutter).
inline const std::array<Rgb, 6>& isprs_palette() {
  static const std::array<Rgb, 6> p{{{255, 255, 255}, {0, 0, 255}, {0, 255, 255}, {0, 255, 0}, {255, 255, 0},
                                     {255, 0, 0}}};
  return p;
}
inline constexpr Rgb kIgnoreColor{0, 0, 0};

namespace detail {

struct PngImage {
  png_image img;
  PngImage() {
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&img); }
};

inline std::vector<std::uint8_t> read_png_rgb8(const std::filesystem::path& path, int& h, int& w) {
  if (!std::filesystem::exists(path)) throw IoError("no such file '" + path.string() + "'");
  PngImage p;
  if (!png_image_begin_read_from_file(&p.img, path.c_str())) {
    throw IoError("cannot decode PNG '" + path.string() + "': " + p.img.message);
  }
  p.img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(p.img));
  if (!png_image_finish_read(&p.img, nullptr, buf.data(), 0, nullptr)) {
    throw IoError("cannot decode PNG '" + path.string() + "': " + p.img.message);
  }
  h = static_cast<int>(p.img.height);
  w = static_cast<int>(p.img.width);
  return buf;
}

inline void write_png(const std::filesystem::path& path, int h, int w, std::uint32_t format, const void* pixels,
                      const void* colormap = nullptr, int colormap_entries = 0) {
  PngImage p;
  p.img.width = static_cast<png_uint_32>(w);
  p.img.height = static_cast<png_uint_32>(h);
  p.img.format = format;
  p.img.colormap_entries = static_cast<png_uint_32>(colormap_entries);
  if (!png_image_write_to_file(&p.img, path.c_str(), 0, pixels, 0, colormap)) {
    throw IoError("cannot write PNG '" + path.string() + "': " + p.img.message);
  }
}

inline std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255)); }

}  // namespace detail

/// RGB image (1, 3, H, W) with values in [0, 1], stored as 8 bits per channel.
template <typename T>
void write_image_png(const std::filesystem::path& path, const Tensor<T>& img) {
  const Shape s = img.shape();
  if (s.n != 1 || s.c != 3) throw ShapeError("write_image_png: expected (1,3,H,W), got " + s.str());
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(s.h) * s.w * 3);
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x)
      for (int c = 0; c < 3; ++c) buf[(static_cast<std::size_t>(y) * s.w + x) * 3 + c] = detail::to_byte(img(0, c, y, x));
  detail::write_png(path, s.h, s.w, PNG_FORMAT_RGB, buf.data());
}

inline Tensor<float> read_image_png(const std::filesystem::path& path) {
  int h = 0, w = 0;
  const auto buf = detail::read_png_rgb8(path, h, w);
  Tensor<float> t(Shape{1, 3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) t(0, c, y, x) = buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0f;
  return t;
}

/// Single-channel 8-bit image from a (1, 1, H, W) map; values are clamped to [0, 1].
template <typename T>
void write_gray_png(const std::filesystem::path& path, const Tensor<T>& img) {
  const Shape s = img.shape();
  if (s.n != 1 || s.c != 1) throw ShapeError("write_gray_png: expected (1,1,H,W), got " + s.str());
  std::vector<std::uint8_t> buf(s.plane());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = detail::to_byte(img[i]);
  detail::write_png(path, s.h, s.w, PNG_FORMAT_GRAY, buf.data());
}

/// Palettized mask: pixel index = class id, colours from the class palette, the
/// ignore index drawn black.
inline void write_mask_png(const std::filesystem::path& path, const LabelMap& mask,
                           int ignore_index = kDefaultIgnoreIndex) {
  if (mask.n != 1) throw ShapeError("write_mask_png: expected a single mask");
  const auto& pal = isprs_palette();
  if (ignore_index < static_cast<int>(pal.size()) || ignore_index > 255) {
    throw ConfigError("write_mask_png: ignore index must be in [6, 255]");
  }
  mask.validate(static_cast<int>(pal.size()), ignore_index);
  std::vector<std::uint8_t> colormap(256 * 3, 0);
  for (std::size_t k = 0; k < pal.size(); ++k)
    for (int c = 0; c < 3; ++c) colormap[k * 3 + c] = pal[k][c];
  std::vector<std::uint8_t> idx(mask.data.begin(), mask.data.end());
  detail::write_png(path, mask.h, mask.w, PNG_FORMAT_RGB_COLORMAP, idx.data(), colormap.data(), 256);
}

/// Decodes a mask by colour, so palettized and plain RGB encodings both work.
inline LabelMap read_mask_png(const std::filesystem::path& path, int ignore_index = kDefaultIgnoreIndex) {
  int h = 0, w = 0;
  const auto buf = detail::read_png_rgb8(path, h, w);
  std::map<Rgb, int> lookup;
  const auto& pal = isprs_palette();
  for (std::size_t k = 0; k < pal.size(); ++k) lookup[pal[k]] = static_cast<int>(k);
  lookup[kIgnoreColor] = ignore_index;
  LabelMap m(1, h, w);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const Rgb px{buf[i * 3], buf[i * 3 + 1], buf[i * 3 + 2]};
    const auto it = lookup.find(px);
    if (it == lookup.end()) {
      throw ParseError("mask '" + path.string() + "': colour (" + std::to_string(px[0]) + "," +
                           std::to_string(px[1]) + "," + std::to_string(px[2]) + ") is not in the palette at pixel " +
                           std::to_string(i),
                       i);
    }
    m.data[i] = it->second;
  }
  return m;
}

// --- dataset directory ------------------------------------------------------------------
//   images/NNN.png, masks/NNN.png, manifest.csv with "index,split" rows.

struct ManifestEntry {
  std::string index;
  std::string split;
};

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("dataset directory '" + dir.string() + "' does not exist");
  const auto path = dir / "manifest.csv";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1) {
      if (line != "index,split") throw IoError(path.string() + ": header must be 'index,split'");
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError(path.string() + ":" + std::to_string(lineno) + ": missing split");
    out.push_back({line.substr(0, comma), line.substr(comma + 1)});
  }
  if (lineno == 0) throw IoError(path.string() + ": empty file");
  return out;
}

inline void write_manifest(const std::filesystem::path& dir, const std::vector<ManifestEntry>& entries) {
  std::ostringstream s;
  s << "index,split\n";
  for (const auto& e : entries) s << e.index << ',' << e.split << '\n';
  const std::string text = s.str();
  write_file(dir / "manifest.csv", Bytes(text.begin(), text.end()));
}

inline std::string sample_stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03zu", i);
  return buf;
}

inline void write_sample(const std::filesystem::path& dir, const std::string& stem, const Sample& s,
                         int ignore_index = kDefaultIgnoreIndex) {
  write_image_png(dir / "images" / (stem + ".png"), s.image);
  write_mask_png(dir / "masks" / (stem + ".png"), s.label, ignore_index);
}

inline void prepare_dataset_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  if (!ec) std::filesystem::create_directories(dir / "masks", ec);
  if (ec) throw IoError("cannot create dataset directory '" + dir.string() + "': " + ec.message());
}

/// Samples of one split ("" loads every entry), in manifest order.
inline std::vector<Sample> load_dataset(const std::filesystem::path& dir, const std::string& split = "",
                                        int ignore_index = kDefaultIgnoreIndex) {
  std::vector<Sample> out;
  for (const auto& e : read_manifest(dir)) {
    if (!split.empty() && e.split != split) continue;
    Sample s{read_image_png(dir / "images" / (e.index + ".png")),
             read_mask_png(dir / "masks" / (e.index + ".png"), ignore_index)};
    if (s.label.h != s.image.shape().h || s.label.w != s.image.shape().w) {
      throw IoError("sample " + e.index + ": image and mask sizes differ");
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace sffnet

#endif  // SFFNET_IO_HPP
