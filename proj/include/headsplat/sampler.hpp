#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "headsplat/atlas.hpp"
#include "headsplat/geom.hpp"

namespace headsplat {

struct GaussianPrimitive {
  Vec3 position = Vec3::Zero();
  Quaternion rotation;
  Vec3 scale = Vec3::Ones();
  double opacity = 1.0;
  Vec3 color = Vec3::Zero();
};

/// Which grid triangle a primitive came from. `corners` are texel indices
/// (y * width + x) of the three averaged corners.
struct SourceCell {
  int i = 0;  // column of the cell's top-left corner
  int j = 0;  // row
  int k = 1;  // 1 = upper-left triangle, 2 = lower-right triangle
  int step = 1;
  std::array<std::uint32_t, 3> corners{};

  bool operator==(const SourceCell&) const = default;
};

struct SamplingConfig {
  int step = 4;
  /// Finer step used for cells lying entirely inside `roi` (0 = off).
  int roi_step = 0;
  Rect roi;
  double opacity_floor = 0.005;
  int threads = 0;
};

/// Structure-of-arrays primitive storage.
struct PrimitiveBatch {
  std::vector<double> positions;  // 3 per primitive
  std::vector<double> rotations;  // 4 (w x y z)
  std::vector<double> scales;     // 3
  std::vector<double> opacities;  // 1
  std::vector<double> colors;     // 3
  std::vector<SourceCell> cells;

  // Generation metadata.
  int width = 0;
  int height = 0;
  int step = 0;
  int roi_step = 0;

  std::size_t size() const { return opacities.size(); }
  void resize(std::size_t n);
  GaussianPrimitive get(std::size_t i) const;
  void set(std::size_t i, const GaussianPrimitive& p);

  bool operator==(const PrimitiveBatch&) const = default;
};

/// Number of grid cells along an axis of `extent` texels: floor((extent-1)/step).
int grid_cells(int extent, int step);

/// Emits two primitives per grid cell (upper-left and lower-right triangle)
/// whose attributes are the mean of the three corner texels. Cells with an
/// invalid corner and primitives below the opacity floor are skipped.
PrimitiveBatch sample_uv_grid(const AttributeAtlas& attrs, const PositionMap& positions,
                              const SamplingConfig& cfg);

/// Recomputes only positions from `positions`, keeping the cell topology.
PrimitiveBatch resample_positions_only(const PrimitiveBatch& batch, const PositionMap& positions);
void resample_positions_inplace(PrimitiveBatch& batch, const PositionMap& positions, int threads = 0);

/// Recomputes color/opacity/rotation/scale of primitives with a corner inside
/// `region` from `attrs` (all primitives when region is the whole atlas).
void resample_attributes_inplace(PrimitiveBatch& batch, const AttributeAtlas& attrs,
                                 const Rect& region, int threads = 0);

/// Average of the three corner quaternions after aligning each to the sign
/// of the first, normalized.
Quaternion average_quaternions(const Quaternion& a, const Quaternion& b, const Quaternion& c);

}  // namespace headsplat
