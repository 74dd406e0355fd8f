#include "headsplat/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace headsplat {

namespace {

class Writer {
 public:
  void magic(const char* m) { bytes_.insert(bytes_.end(), m, m + 4); }
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  Bytes take() { return std::move(bytes_); }
  void reserve(std::size_t n) { bytes_.reserve(n); }

 private:
  Bytes bytes_;
};

class Reader {
 public:
  Reader(const Bytes& b, const std::string& name) : b_(b), name_(name) {}

  void need(std::size_t n, const char* what) const {
    if (pos_ + n > b_.size())
      throw ParseError(name_, static_cast<std::int64_t>(pos_),
                       std::string("truncated input while reading ") + what);
  }
  void magic(const char* m) {
    need(4, "magic");
    if (std::memcmp(b_.data() + pos_, m, 4) != 0)
      throw ParseError(name_, static_cast<std::int64_t>(pos_), std::string("expected magic '") + m + "'");
    pos_ += 4;
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return b_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::size_t pos() const { return pos_; }
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(name_, static_cast<std::int64_t>(pos_), what);
  }
  void expect_end() const {
    if (pos_ != b_.size()) fail("trailing bytes after payload");
  }

 private:
  const Bytes& b_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, -1, "cannot open file");
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const Bytes& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path, -1, "cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ParseError(path, -1, "write failed");
}

Bytes encode_uvam(const Raster& raster, AtlasState state) {
  Writer w;
  const std::size_t texels = raster.texel_count();
  w.reserve(24 + raster.data().size() * 4 + (texels + 7) / 8);
  w.magic("UVAM");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(raster.width()));
  w.u32(static_cast<std::uint32_t>(raster.height()));
  w.u32(static_cast<std::uint32_t>(raster.channels()));
  w.u8(0);
  w.u8(static_cast<std::uint8_t>(state));
  w.u8(0);
  w.u8(0);
  for (double v : raster.data()) w.f32(v);
  for (std::size_t i = 0; i < texels; i += 8) {
    std::uint8_t byte = 0;
    for (std::size_t b = 0; b < 8 && i + b < texels; ++b)
      if (raster.validity()[i + b]) byte |= static_cast<std::uint8_t>(0x80u >> b);
    w.u8(byte);
  }
  return w.take();
}

UvamImage decode_uvam(const Bytes& bytes, const std::string& name) {
  Reader r(bytes, name);
  r.magic("UVAM");
  const auto version = r.u32("version");
  if (version != 1) r.fail("unsupported UVAM version " + std::to_string(version));
  const auto width = r.u32("width");
  const auto height = r.u32("height");
  const auto channels = r.u32("channels");
  const auto dtype = r.u8("dtype");
  const auto state = r.u8("state");
  r.u8("reserved");
  r.u8("reserved");
  if (dtype != 0) r.fail("unsupported dtype tag " + std::to_string(dtype));
  if (state > 1) r.fail("invalid state flag " + std::to_string(state));
  if (channels < 1 || width > (1u << 16) || height > (1u << 16) || channels > 1024)
    r.fail("implausible raster dimensions");
  const std::size_t values = static_cast<std::size_t>(width) * height * channels;
  const std::size_t texels = static_cast<std::size_t>(width) * height;
  r.need(values * 4 + (texels + 7) / 8, "payload");
  UvamImage out;
  out.raster = Raster(static_cast<int>(width), static_cast<int>(height), static_cast<int>(channels));
  out.state = static_cast<AtlasState>(state);
  for (double& v : out.raster.data()) v = r.f32("payload");
  for (std::size_t i = 0; i < texels; i += 8) {
    const std::uint8_t byte = r.u8("validity");
    for (std::size_t b = 0; b < 8 && i + b < texels; ++b)
      out.raster.validity()[i + b] = (byte & (0x80u >> b)) ? 1 : 0;
  }
  r.expect_end();
  return out;
}

void write_uvam(const std::string& path, const Raster& raster, AtlasState state) {
  write_file(path, encode_uvam(raster, state));
}

UvamImage read_uvam(const std::string& path) { return decode_uvam(read_file(path), path); }

void write_atlas(const std::string& path, const AttributeAtlas& atlas) {
  write_uvam(path, atlas.data, atlas.state);
}

AttributeAtlas read_atlas(const std::string& path, AtlasOrigin origin) {
  UvamImage img = read_uvam(path);
  if (img.raster.channels() != channel::kCount)
    throw ParseError(path, 16, "attribute atlas must have 14 channels, found " +
                                   std::to_string(img.raster.channels()));
  AttributeAtlas atlas;
  atlas.data = std::move(img.raster);
  atlas.origin = origin;
  atlas.state = img.state;
  return atlas;
}

Bytes encode_cimg(const Raster& image) {
  if (image.channels() != 3) throw ValidationError("CIMG images must have 3 channels");
  Writer w;
  w.reserve(12 + image.data().size() * 4);
  w.magic("CIMG");
  w.u32(static_cast<std::uint32_t>(image.width()));
  w.u32(static_cast<std::uint32_t>(image.height()));
  for (double v : image.data()) w.f32(v);
  return w.take();
}

Raster decode_cimg(const Bytes& bytes, const std::string& name) {
  Reader r(bytes, name);
  r.magic("CIMG");
  const auto width = r.u32("width");
  const auto height = r.u32("height");
  if (width > (1u << 16) || height > (1u << 16)) r.fail("implausible image dimensions");
  r.need(static_cast<std::size_t>(width) * height * 12, "pixels");
  Raster img(static_cast<int>(width), static_cast<int>(height), 3);
  for (double& v : img.data()) v = r.f32("pixels");
  r.expect_end();
  return img;
}

void write_cimg(const std::string& path, const Raster& image) { write_file(path, encode_cimg(image)); }
Raster read_cimg(const std::string& path) { return decode_cimg(read_file(path), path); }

std::uint8_t encode_srgb8(double linear) {
  const double v = std::pow(std::clamp(linear, 0.0, 1.0), 1.0 / 2.2);
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

Bytes encode_rgb8(const Raster& image) {
  if (image.channels() != 3) throw ValidationError("RGB encoding needs 3 channels");
  Bytes out(image.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = encode_srgb8(image.data()[i]);
  return out;
}

void write_ppm(const std::string& path, const Raster& image) {
  const std::string header =
      "P6\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
  Bytes bytes(header.begin(), header.end());
  const Bytes rgb = encode_rgb8(image);
  bytes.insert(bytes.end(), rgb.begin(), rgb.end());
  write_file(path, bytes);
}

Bytes encode_gspb(const PrimitiveBatch& batch) {
  Writer w;
  w.reserve(8 + batch.size() * 14 * 4);
  w.magic("GSPB");
  w.u32(static_cast<std::uint32_t>(batch.size()));
  for (double v : batch.positions) w.f32(v);
  for (double v : batch.rotations) w.f32(v);
  for (double v : batch.scales) w.f32(v);
  for (double v : batch.opacities) w.f32(v);
  for (double v : batch.colors) w.f32(v);
  return w.take();
}

PrimitiveBatch decode_gspb(const Bytes& bytes, const std::string& name) {
  Reader r(bytes, name);
  r.magic("GSPB");
  const auto count = r.u32("count");
  r.need(static_cast<std::size_t>(count) * 14 * 4, "primitive arrays");
  PrimitiveBatch b;
  b.resize(count);
  for (double& v : b.positions) v = r.f32("positions");
  for (double& v : b.rotations) v = r.f32("rotations");
  for (double& v : b.scales) v = r.f32("scales");
  for (double& v : b.opacities) v = r.f32("opacities");
  for (double& v : b.colors) v = r.f32("colors");
  r.expect_end();
  return b;
}

Bytes encode_cbok(const Codebook& book) {
  Writer w;
  w.magic("CBOK");
  w.u32(static_cast<std::uint32_t>(book.size));
  w.u32(static_cast<std::uint32_t>(book.dim));
  for (double v : book.entries) w.f32(v);
  return w.take();
}

Codebook decode_cbok(const Bytes& bytes, const std::string& name) {
  Reader r(bytes, name);
  r.magic("CBOK");
  const auto n = r.u32("N_code");
  const auto d = r.u32("dimension");
  if (n < 1) r.fail("codebook is empty");
  if (d < 1 || n > (1u << 24) || d > (1u << 16)) r.fail("implausible codebook dimensions");
  r.need(static_cast<std::size_t>(n) * d * 4, "entries");
  Codebook book(static_cast<int>(n), static_cast<int>(d));
  for (double& v : book.entries) v = r.f32("entries");
  r.expect_end();
  return book;
}

void write_cbok(const std::string& path, const Codebook& book) { write_file(path, encode_cbok(book)); }
Codebook read_cbok(const std::string& path) { return decode_cbok(read_file(path), path); }

void round_to_f32(Raster& r) {
  for (double& v : r.data()) v = static_cast<float>(v);
}

}  // namespace headsplat
