#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "headsplat/atlas.hpp"
#include "headsplat/sampler.hpp"
#include "headsplat/vq.hpp"

namespace headsplat {

using Bytes = std::vector<std::uint8_t>;

Bytes read_file(const std::string& path);
void write_file(const std::string& path, const Bytes& bytes);

/// UVAM container: "UVAM", u32 version (1), u32 width, u32 height,
/// u32 channels, u8 dtype (0 = f32), u8 state, 2 reserved bytes, row-major
/// f32 payload, then ceil(width*height/8) validity bytes (row-major, MSB first).
struct UvamImage {
  Raster raster;
  AtlasState state = AtlasState::Raw;
};

Bytes encode_uvam(const Raster& raster, AtlasState state = AtlasState::Raw);
/// `name` is used in error messages.
UvamImage decode_uvam(const Bytes& bytes, const std::string& name = "<memory>");
void write_uvam(const std::string& path, const Raster& raster, AtlasState state = AtlasState::Raw);
UvamImage read_uvam(const std::string& path);

void write_atlas(const std::string& path, const AttributeAtlas& atlas);
AttributeAtlas read_atlas(const std::string& path, AtlasOrigin origin);

/// CIMG: "CIMG", u32 width, u32 height, rgb f32 row-major.
Bytes encode_cimg(const Raster& image);
Raster decode_cimg(const Bytes& bytes, const std::string& name = "<memory>");
void write_cimg(const std::string& path, const Raster& image);
Raster read_cimg(const std::string& path);

/// 8-bit sRGB-ish encoding used by PPM output and frame streams: x^(1/2.2).
std::uint8_t encode_srgb8(double linear);
Bytes encode_rgb8(const Raster& image);
/// Binary PPM (P6, maxval 255).
void write_ppm(const std::string& path, const Raster& image);

/// GSPB: "GSPB", u32 count, then f32 arrays position[3N], quaternion[4N],
/// scale[3N], opacity[N], rgb[3N].
Bytes encode_gspb(const PrimitiveBatch& batch);
PrimitiveBatch decode_gspb(const Bytes& bytes, const std::string& name = "<memory>");

/// CBOK: "CBOK", u32 N_code, u32 d, f32 entries row-major.
Bytes encode_cbok(const Codebook& book);
Codebook decode_cbok(const Bytes& bytes, const std::string& name = "<memory>");
void write_cbok(const std::string& path, const Codebook& book);
Codebook read_cbok(const std::string& path);

/// Rounds every value through f32 (what a write/read cycle does).
void round_to_f32(Raster& r);

}  // namespace headsplat
