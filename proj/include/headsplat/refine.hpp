#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "headsplat/blender.hpp"
#include "headsplat/losses.hpp"
#include "headsplat/renderer.hpp"
#include "headsplat/runtime.hpp"

namespace headsplat {

/// Atlas variables the refinement loop may update (bit flags).
enum RefineMap : unsigned {
  kRefineStaticColor = 1u,
  kRefineStaticOpacity = 2u,
  kRefineDynamicColor = 4u,
  kRefineDynamicOpacity = 8u,
};

/// Parses "static_color", "static_opacity", "dynamic_color", "dynamic_opacity".
unsigned parse_refine_map(const std::string& name);

struct RefineView {
  Camera camera;
  Raster target;  // camera.width x camera.height x 3
};

struct RefineConfig {
  int iterations = 500;
  /// Fixed gradient step; 0 picks 1 / L with L the largest Hessian
  /// eigenvalue along the color variables (power iteration).
  double step = 0.0;
  double momentum = 0.9;
  unsigned maps = kRefineStaticColor | kRefineDynamicColor;
  LossWeights weights;
  ExpressionWeights expression;
  /// Stop as soon as the loss drops to this value (0 = run all iterations).
  double target_loss = 0.0;
  /// Abort when the loss exceeds this multiple of the initial loss.
  double divergence_factor = 10.0;

  void validate() const;
  nlohmann::json to_json() const;
  static RefineConfig from_json(const nlohmann::json& j);
};

struct LossTraceRow {
  int iteration = 0;
  double total = 0.0;  // lambda6 * l2
  double l2 = 0.0;     // mean over views of the per-pixel MSE
};

struct RefineResult {
  AttributeAtlas static_atlas;   // raw
  AttributeAtlas dynamic_atlas;  // raw
  std::vector<LossTraceRow> trace;
  double step = 0.0;
  double seconds = 0.0;
};

class RefineDivergenceError : public DivergenceError {
 public:
  RefineDivergenceError(const std::string& what, std::vector<LossTraceRow> trace)
      : DivergenceError(what), trace_(std::move(trace)) {}
  const std::vector<LossTraceRow>& trace() const { return trace_; }

 private:
  std::vector<LossTraceRow> trace_;
};

/// Gradient descent (optional heavy-ball momentum) on lambda6 * L2 over the
/// selected atlas maps. Geometry is held fixed: primitives are sampled and
/// projected once, only their colors and opacities change. Colors are kept
/// in [0,1] by projection after every step.
RefineResult refine_avatar(const AvatarAssets& assets, const RuntimeConfig& runtime,
                           const std::vector<RefineView>& views, const RefineConfig& config);

void write_trace_csv(const std::string& path, const std::vector<LossTraceRow>& trace);

/// Loss and exact gradient for a single activated atlas rendered through the
/// full sampler -> projection -> compositing chain: l2 = MSE(render, target)
/// and its derivatives with respect to the atlas color and opacity channels.
struct AtlasLossGrad {
  double loss = 0.0;
  AtlasGradients grad;
};

AtlasLossGrad atlas_l2_loss_and_grad(const AttributeAtlas& activated, const PositionMap& positions,
                                     const SamplingConfig& sampling, const Camera& camera,
                                     const Raster& target, const Vec3& background,
                                     const TileOptions& tiles = {});

}  // namespace headsplat
