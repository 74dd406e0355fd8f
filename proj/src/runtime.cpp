#include "headsplat/runtime.hpp"

#include <sys/utsname.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include "headsplat/parallel.hpp"

namespace headsplat {

namespace {

using Clock = std::chrono::steady_clock;

double micros_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
}

BlendMasks masks_for(const AvatarAssets& a, int band_width) {
  if (band_width < 0) throw ValidationError("band width must be >= 0");
  return make_blend_masks(a.static_atlas.width(), a.static_atlas.height(), a.face_roi, band_width);
}

}  // namespace

AvatarRuntime::AvatarRuntime(std::shared_ptr<const AvatarAssets> assets, const RuntimeConfig& config)
    : config_(config),
      builder_(assets, masks_for(*assets, config.band_width), config.policy, config.fusion,
               config.threads) {
  if (config_.grid_step < 1 || config_.roi_grid_step < 0)
    throw ValidationError("grid steps must be positive");
  if (config_.tile_size < 1) throw ValidationError("tile size must be positive");
}

SamplingConfig AvatarRuntime::sampling() const {
  SamplingConfig cfg;
  cfg.step = config_.grid_step;
  cfg.roi_step = config_.roi_grid_step;
  cfg.roi = builder_.assets().face_roi;
  cfg.opacity_floor = config_.opacity_floor;
  cfg.threads = config_.threads;
  return cfg;
}

void AvatarRuntime::set_band_width(int band_width) {
  if (band_width == config_.band_width) return;
  builder_.set_masks(masks_for(builder_.assets(), band_width));
  config_.band_width = band_width;
  topology_valid_ = false;
}

void AvatarRuntime::set_grid_step(int step, int roi_step) {
  if (step < 1 || roi_step < 0) throw ValidationError("grid steps must be positive");
  if (step == config_.grid_step && roi_step == config_.roi_grid_step) return;
  config_.grid_step = step;
  config_.roi_grid_step = roi_step;
  topology_valid_ = false;
}

const RenderedFrame& AvatarRuntime::render(const ExpressionWeights& weights, const Camera& camera,
                                           bool oracle) {
  camera.validate();
  const auto t_frame = Clock::now();
  const FusedFrame& fused = builder_.build(weights);
  fused_ = &fused;
  StageTimings timings = fused.timings;

  if (!topology_valid_) {
    // One-time topology sampling for this configuration; not a per-frame stage.
    batch_ = sample_uv_grid(fused.atlas, fused.positions, sampling());
    topology_valid_ = true;
  } else {
    const auto t0 = Clock::now();
    resample_positions_inplace(batch_, fused.positions, config_.threads);
    const Rect region = config_.policy == CachePolicy::Cached ? builder_.assets().face_roi
                                                              : fused.atlas.data.bounds();
    resample_attributes_inplace(batch_, fused.atlas, region, config_.threads);
    timings.position_sampling += micros_since(t0);
  }

  const auto t0 = Clock::now();
  ProjectOptions popts;
  popts.threads = config_.threads;
  splats_ = project_batch(batch_, camera, popts);
  if (oracle) {
    frame_.target = composite_oracle(splats_, camera, config_.background);
  } else {
    TileOptions topts;
    topts.tile_size = config_.tile_size;
    topts.threads = config_.threads;
    frame_.target = composite_tiled(splats_, camera, config_.background, topts);
  }
  timings.rendering = micros_since(t0);
  timings.total = micros_since(t_frame);
  frame_.timings = timings;
  frame_.primitives = batch_.size();
  frame_.splats = splats_.splats.size();
  return frame_;
}

namespace {

double stage_value(const StageTimings& t, const std::string& stage) {
  if (stage == "dynamic_generation") return t.dynamic_generation;
  if (stage == "color_fusion") return t.color_fusion;
  if (stage == "position_sampling") return t.position_sampling;
  if (stage == "rendering") return t.rendering;
  if (stage == "total") return t.total;
  throw ValidationError("unknown stage '" + stage + "'");
}

// Nearest-rank percentile.
double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * v.size()));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

}  // namespace

TimingReport::Summary TimingReport::summary(const std::string& stage) const {
  std::vector<double> v;
  for (const auto& s : samples) v.push_back(stage_value(s, stage));
  Summary out;
  if (v.empty()) return out;
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  out.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  out.p95 = percentile(v, 0.95);
  double sum = 0.0;
  for (double x : v) sum += x;
  out.mean = sum / n;
  return out;
}

nlohmann::json timings_to_json(const StageTimings& t) {
  return {{"dynamic_generation", t.dynamic_generation},
          {"color_fusion", t.color_fusion},
          {"position_sampling", t.position_sampling},
          {"rendering", t.rendering},
          {"total", t.total}};
}

nlohmann::json TimingReport::to_json() const {
  nlohmann::json stages = nlohmann::json::object();
  for (const char* name : kStageNames) {
    const Summary s = summary(name);
    stages[name] = {{"median_us", s.median}, {"p95_us", s.p95}, {"mean_us", s.mean}};
  }
  const Summary total = summary("total");
  nlohmann::json frames_json = nlohmann::json::array();
  for (const auto& s : samples) frames_json.push_back(timings_to_json(s));
  return {{"frames", frames},
          {"warmup", warmup},
          {"threads", threads},
          {"machine", machine},
          {"primitives", primitives},
          {"stages", stages},
          {"total", {{"median_us", total.median}, {"p95_us", total.p95}, {"mean_us", total.mean}}},
          {"samples", frames_json}};
}

std::string machine_descriptor() {
  std::string desc;
  utsname u{};
  if (uname(&u) == 0) desc = std::string(u.sysname) + " " + u.release + " " + u.machine;
  std::ifstream cpu("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpu, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) desc += ", " + line.substr(colon + 2);
      break;
    }
  }
  desc += ", " + std::to_string(std::max(1u, std::thread::hardware_concurrency())) + " hardware threads";
  return desc;
}

TimingReport run_bench(AvatarRuntime& runtime, const Camera& camera,
                       const std::vector<ExpressionWeights>& sequence, int frames, int warmup) {
  if (frames < 1) throw ValidationError("bench needs at least one frame");
  if (warmup < 1) throw ValidationError("bench needs at least one warmup frame");
  TimingReport report;
  report.frames = frames;
  report.warmup = warmup;
  report.threads = runtime.config().threads > 0 ? runtime.config().threads : default_threads();
  report.machine = machine_descriptor();
  const ExpressionWeights neutral;
  auto weights_at = [&](int i) -> const ExpressionWeights& {
    return sequence.empty() ? neutral : sequence[static_cast<std::size_t>(i) % sequence.size()];
  };
  for (int i = 0; i < warmup; ++i) runtime.render(weights_at(i), camera);
  for (int i = 0; i < frames; ++i) {
    const RenderedFrame& f = runtime.render(weights_at(warmup + i), camera);
    report.samples.push_back(f.timings);
    report.primitives = f.primitives;
  }
  return report;
}

std::vector<double> turntable_yaws(int frames) {
  if (frames < 1) throw ValidationError("frames must be >= 1");
  std::vector<double> yaws;
  for (int i = 0; i < frames; ++i) yaws.push_back(360.0 * i / frames);
  return yaws;
}

}  // namespace headsplat
