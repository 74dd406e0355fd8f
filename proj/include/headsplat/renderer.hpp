#pragma once

#include <cstdint>
#include <vector>

#include "headsplat/geom.hpp"
#include "headsplat/raster.hpp"
#include "headsplat/sampler.hpp"

namespace headsplat {

/// Alpha is clamped to this value.
inline constexpr double kMaxAlpha = 0.99;
/// Traversal stops once transmittance drops below this.
inline constexpr double kMinTransmittance = 1e-4;
/// Gaussians are truncated at this squared Mahalanobis distance (3 sigma).
inline constexpr double kCutoffMahalanobis2 = 9.0;

struct Splat {
  Vec2 mean;
  double conic_a = 0.0;  // inverse covariance [[a, b], [b, c]]
  double conic_b = 0.0;
  double conic_c = 0.0;
  double depth = 0.0;
  double radius = 0.0;  // 3 * sqrt(max eigenvalue), pixels
  double opacity = 0.0;
  Vec3 color = Vec3::Zero();
  std::uint32_t source = 0;  // primitive index
};

struct SplatList {
  std::vector<Splat> splats;  // ascending depth, ties by source index
  std::size_t culled = 0;
};

struct RenderTarget {
  Raster color;                       // width x height x 3
  std::vector<double> transmittance;  // final T per pixel
  Vec3 background = Vec3::Zero();
};

struct ProjectOptions {
  EwaOptions ewa;
  int threads = 0;
};

/// Projects every primitive, culls those behind the near plane or whose 3 sigma
/// box misses the image, and sorts by depth.
SplatList project_batch(const PrimitiveBatch& batch, const Camera& cam,
                        const ProjectOptions& opts = {});

/// Reference compositor: every pixel walks the full splat list front to back.
RenderTarget composite_oracle(const SplatList& splats, const Camera& cam, const Vec3& background);

struct TileOptions {
  int tile_size = 16;
  int threads = 0;
};

/// Tile-binned compositor producing the same image as composite_oracle.
RenderTarget composite_tiled(const SplatList& splats, const Camera& cam, const Vec3& background,
                             const TileOptions& opts = {});

struct SplatGradients {
  std::vector<Vec3> color;       // dL/dcolor per splat (list order)
  std::vector<double> opacity;   // dL/dopacity per splat
};

/// Exact gradients of sum(dL/dC * C) with respect to each splat's color and
/// opacity, given the upstream image gradient (width x height x 3).
SplatGradients backward_color_opacity(const SplatList& splats, const Camera& cam,
                                      const Vec3& background, const Raster& grad_image,
                                      const TileOptions& opts = {});

/// Per-primitive gradients (indexed like the batch).
struct BatchGradients {
  std::vector<double> color;    // 3 per primitive
  std::vector<double> opacity;  // 1 per primitive
};

/// Scatters splat gradients back to their primitive indices.
BatchGradients splat_to_batch_gradients(const SplatGradients& g, const SplatList& splats,
                                        std::size_t batch_size);

/// Atlas-space gradients: color (3 channels) and opacity (1 channel).
struct AtlasGradients {
  Raster color;
  Raster opacity;
};

/// Adjoint of the corner averaging: every corner texel accumulates one third
/// of each incident primitive's gradient.
AtlasGradients backprop_to_atlas(const BatchGradients& g, const PrimitiveBatch& batch);

}  // namespace headsplat
