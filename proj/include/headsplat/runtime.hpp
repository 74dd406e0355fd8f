#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "headsplat/blender.hpp"
#include "headsplat/renderer.hpp"
#include "headsplat/sampler.hpp"

namespace headsplat {

struct RuntimeConfig {
  int grid_step = 4;
  int roi_grid_step = 2;
  double opacity_floor = 0.005;
  int band_width = 16;
  int threads = 0;
  int tile_size = 16;
  Vec3 background = Vec3::Zero();
  CachePolicy policy = CachePolicy::Cached;
  FusionOptions fusion;
};

struct RenderedFrame {
  RenderTarget target;
  StageTimings timings;
  std::size_t primitives = 0;
  std::size_t splats = 0;
};

/// Per-frame pipeline: fused maps from the FrameBuilder, primitives on a UV
/// grid whose topology is sampled once per (masks, grid step) configuration,
/// then projection and tiled compositing.
class AvatarRuntime {
 public:
  AvatarRuntime(std::shared_ptr<const AvatarAssets> assets, const RuntimeConfig& config);

  /// `oracle` swaps in the reference compositor.
  const RenderedFrame& render(const ExpressionWeights& weights, const Camera& camera,
                              bool oracle = false);

  /// Fused maps and primitives of the last render.
  const FusedFrame& fused() const { return *fused_; }
  const PrimitiveBatch& primitives() const { return batch_; }
  const SplatList& splats() const { return splats_; }

  void set_band_width(int band_width);
  void set_grid_step(int step, int roi_step);
  const RuntimeConfig& config() const { return config_; }
  int static_builds() const { return builder_.static_builds(); }
  const AvatarAssets& assets() const { return builder_.assets(); }

 private:
  SamplingConfig sampling() const;

  RuntimeConfig config_;
  FrameBuilder builder_;
  const FusedFrame* fused_ = nullptr;
  PrimitiveBatch batch_;
  bool topology_valid_ = false;
  SplatList splats_;
  RenderedFrame frame_;
};

/// Timing samples for the four per-frame stages (microseconds).
struct TimingReport {
  int frames = 0;
  int warmup = 0;
  int threads = 0;
  std::string machine;
  std::size_t primitives = 0;
  std::vector<StageTimings> samples;

  struct Summary {
    double median = 0.0;
    double p95 = 0.0;
    double mean = 0.0;
  };
  /// `stage` is one of kStageNames or "total".
  Summary summary(const std::string& stage) const;
  nlohmann::json to_json() const;
};

/// One frame's stage fields as JSON (the four stages plus "total").
nlohmann::json timings_to_json(const StageTimings& t);

/// "<os> <arch>, <cpu model>, <n> hardware threads".
std::string machine_descriptor();

/// Renders `warmup` untimed frames then `frames` timed ones, cycling
/// through `sequence` (an empty sequence renders the neutral expression).
TimingReport run_bench(AvatarRuntime& runtime, const Camera& camera,
                       const std::vector<ExpressionWeights>& sequence, int frames, int warmup = 1);

/// Yaw angles in degrees of a `frames`-step orbit starting at the front.
std::vector<double> turntable_yaws(int frames);

}  // namespace headsplat
