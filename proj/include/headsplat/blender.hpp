#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "headsplat/atlas.hpp"
#include "headsplat/head_model.hpp"

namespace headsplat {

/// Per-frame stage durations in microseconds. The four stages are the only
/// ones a frame may report; static work is never timed per frame.
struct StageTimings {
  double dynamic_generation = 0.0;
  double color_fusion = 0.0;
  double position_sampling = 0.0;
  double rendering = 0.0;
  double total = 0.0;
};

inline constexpr const char* kStageNames[4] = {"dynamic_generation", "color_fusion",
                                               "position_sampling", "rendering"};

struct FusionOptions {
  /// Blend opacity with the soft mask instead of the hard one (ablation).
  bool soft_opacity = false;
};

/// M_face * (static + disp) + (1 - M_face) * (static + offset), evaluated
/// texelwise. `disp` may be roi-sized (embedded at masks.face_roi) or
/// full-size. Output validity equals the static map's.
PositionMap fuse_positions(const PositionMap& static_pos, const Raster& offset, const Raster& disp,
                           const BlendMasks& masks);

/// Same formula restricted to `region`, written into `out` (full-size).
/// `disp` must be full-size here.
void fuse_positions_region(const PositionMap& static_pos, const Raster& offset, const Raster& disp,
                           const BlendMasks& masks, const Rect& region, PositionMap& out);

/// Opacity, rotation and scale picked by the hard face mask; color blended
/// with the soft mask. Both atlases must be activated; `dynamic_atlas` may be
/// roi-sized or already embedded at full size.
AttributeAtlas fuse_attributes(const AttributeAtlas& static_atlas,
                               const AttributeAtlas& dynamic_atlas, const BlendMasks& masks,
                               const FusionOptions& opts = {});

void fuse_attributes_region(const AttributeAtlas& static_atlas, const AttributeAtlas& dynamic_full,
                            const BlendMasks& masks, const Rect& region, AttributeAtlas& out,
                            const FusionOptions& opts = {});

using ExpressionWeights = std::map<std::string, double>;

/// Per-identity inputs. Atlases are raw (pre-activation); the dynamic atlas
/// and blendshapes are roi-sized.
struct AvatarAssets {
  AttributeAtlas static_atlas;
  PositionMap static_position;
  Raster offset;  // full-size, 3 channels
  AttributeAtlas dynamic_atlas;
  std::vector<Blendshape> blendshapes;
  Rect face_roi;

  /// Throws ValidationError on inconsistent resolutions.
  void validate() const;
  std::vector<std::string> blendshape_names() const;
};

/// Throws ValidationError for unknown names or weights outside [0,1].
void validate_weights(const AvatarAssets& assets, const ExpressionWeights& weights);

struct FusedFrame {
  PositionMap positions;
  AttributeAtlas atlas;  // activated
  StageTimings timings;
};

enum class CachePolicy {
  Cached,     // static branch activated and fused once, per-frame work limited to the roi
  Recompute,  // everything rebuilt every frame (reference path)
};

/// Builds fused frames for one avatar. Not thread-safe: one build at a time.
class FrameBuilder {
 public:
  FrameBuilder(std::shared_ptr<const AvatarAssets> assets, BlendMasks masks,
               CachePolicy policy = CachePolicy::Cached, FusionOptions opts = {}, int threads = 0);

  /// Returns a reference to the builder-owned frame, valid until the next call.
  const FusedFrame& build(const ExpressionWeights& weights);

  /// Swaps the blend masks (band width change); refreshes the fused cache.
  void set_masks(BlendMasks masks);

  const BlendMasks& masks() const { return masks_; }
  const AvatarAssets& assets() const { return *assets_; }
  /// How many times the static branch (activation + full fusion) ran.
  int static_builds() const { return static_builds_; }

 private:
  void build_static();

  std::shared_ptr<const AvatarAssets> assets_;
  BlendMasks masks_;
  CachePolicy policy_;
  FusionOptions opts_;
  int threads_;
  int static_builds_ = 0;

  AttributeAtlas static_activated_;
  AttributeAtlas dynamic_full_;  // activated dynamic atlas embedded at full size
  Raster disp_full_;             // full-size displacement, zero outside the roi
  FusedFrame frame_;
};

}  // namespace headsplat
