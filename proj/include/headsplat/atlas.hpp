#pragma once

#include "headsplat/raster.hpp"

namespace headsplat {

/// Fixed per-texel channel layout of an attribute atlas.
namespace channel {
inline constexpr int kColor = 0;     // rgb, 3
inline constexpr int kOpacity = 3;   // 1
inline constexpr int kRotation = 4;  // quaternion w x y z, 4
inline constexpr int kScale = 8;     // 3
inline constexpr int kOffset = 11;   // position offset, 3
inline constexpr int kCount = 14;
}  // namespace channel

inline constexpr int kStaticAtlasSize = 1024;
inline constexpr int kDynamicAtlasSize = 400;

enum class AtlasOrigin : std::uint8_t { Static = 0, Dynamic = 1 };
enum class AtlasState : std::uint8_t { Raw = 0, Activated = 1 };

/// UV-space raster of Gaussian attributes.
struct AttributeAtlas {
  Raster data;
  AtlasOrigin origin = AtlasOrigin::Static;
  AtlasState state = AtlasState::Raw;

  AttributeAtlas() = default;
  AttributeAtlas(int width, int height, AtlasOrigin o = AtlasOrigin::Static,
                 AtlasState s = AtlasState::Raw)
      : data(width, height, channel::kCount), origin(o), state(s) {}

  int width() const { return data.width(); }
  int height() const { return data.height(); }
  bool activated() const { return state == AtlasState::Activated; }

  bool operator==(const AttributeAtlas&) const = default;
};

using PositionMap = Raster;  // 3 channels, world units
using NormalMap = Raster;    // 3 channels, unit vectors

double sigmoid(double x);

/// opacity = sigmoid(raw), rotation normalized, scale = exp(raw), color
/// clamped to [0,1]. Invalid texels are left untouched. Throws if the atlas
/// is already activated or a valid texel carries a zero quaternion.
AttributeAtlas activate_atlas(const AttributeAtlas& raw);

/// Same as activate_atlas restricted to `roi`; texels outside are copied.
/// Used by the per-frame dynamic path.
void activate_region(const AttributeAtlas& raw, const Rect& roi, AttributeAtlas& out);

struct BlendMasks {
  Raster face_mask;  // 1 channel, exactly 0 or 1
  Raster soft_mask;  // 1 channel, [0,1]
  int band_width = 0;
  Rect face_roi;
};

/// Default placement of the dynamic region: a centered square of side
/// `roi_size` inside a `full_size` atlas.
Rect centered_roi(int full_size, int roi_size);

/// Binary mask equal to 1 exactly on `roi`.
Raster make_face_mask(int width, int height, const Rect& roi);

/// Exact squared Euclidean distance from each texel to the nearest texel
/// where `inside` is false (0 for such texels, +inf if none exist).
std::vector<double> squared_distance_to_outside(const Raster& inside_mask);

/// Soft weight min(1, d / band_width) inside the face region (d = Euclidean
/// distance to the nearest outside texel), 0 outside. band_width 0 returns
/// the binary mask.
Raster make_transition_mask(const Raster& face_mask, int band_width);

BlendMasks make_blend_masks(int width, int height, const Rect& roi, int band_width);

/// Replaces the texels of `roi` with `patch`; everything else is copied
/// bit-exactly. Validity flags inside the roi come from the patch.
Raster embed_dynamic(const Raster& full, const Raster& patch, const Rect& roi);
AttributeAtlas embed_dynamic(const AttributeAtlas& full, const AttributeAtlas& patch,
                             const Rect& roi);

}  // namespace headsplat
