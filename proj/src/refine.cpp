#include "headsplat/refine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>

namespace headsplat {

namespace {

constexpr int kVarChannels = 4;  // r, g, b, opacity logit

struct Variables {
  Raster stat;  // full-size, kVarChannels
  Raster dyn;   // roi-sized, kVarChannels
};

Variables zero_like(const AvatarAssets& a) {
  return {Raster(a.static_atlas.width(), a.static_atlas.height(), kVarChannels, 0.0),
          Raster(a.dynamic_atlas.width(), a.dynamic_atlas.height(), kVarChannels, 0.0)};
}

// Zeroes the variables that are not being optimized.
void apply_selection(Variables& v, unsigned maps) {
  auto mask = [](Raster& r, bool color, bool opacity) {
    for (std::size_t t = 0; t < r.texel_count(); ++t) {
      double* p = r.data().data() + t * kVarChannels;
      if (!color) p[0] = p[1] = p[2] = 0.0;
      if (!opacity) p[3] = 0.0;
    }
  };
  mask(v.stat, maps & kRefineStaticColor, maps & kRefineStaticOpacity);
  mask(v.dyn, maps & kRefineDynamicColor, maps & kRefineDynamicOpacity);
}

double dot(const Variables& a, const Variables& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.stat.data().size(); ++i) s += a.stat.data()[i] * b.stat.data()[i];
  for (std::size_t i = 0; i < a.dyn.data().size(); ++i) s += a.dyn.data()[i] * b.dyn.data()[i];
  return s;
}

// x += alpha * d on the variable channels of the raw atlases.
void add_scaled(AttributeAtlas& stat, AttributeAtlas& dyn, const Variables& d, double alpha) {
  auto apply = [&](AttributeAtlas& a, const Raster& v) {
    for (int y = 0; y < a.height(); ++y)
      for (int x = 0; x < a.width(); ++x) {
        if (!a.data.valid(x, y)) continue;
        for (int c = 0; c < 3; ++c) a.data.at(x, y, channel::kColor + c) += alpha * v.at(x, y, c);
        a.data.at(x, y, channel::kOpacity) += alpha * v.at(x, y, 3);
      }
  };
  apply(stat, d.stat);
  apply(dyn, d.dyn);
}

void clip_colors(AttributeAtlas& a) {
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x)
      for (int c = 0; c < 3; ++c) {
        double& v = a.data.at(x, y, channel::kColor + c);
        v = std::clamp(v, 0.0, 1.0);
      }
}

class Problem {
 public:
  Problem(const AvatarAssets& assets, const RuntimeConfig& rc, const std::vector<RefineView>& views,
          const RefineConfig& cfg)
      : assets_(assets), rc_(rc), views_(views), cfg_(cfg),
        masks_(make_blend_masks(assets.static_atlas.width(), assets.static_atlas.height(),
                                assets.face_roi, rc.band_width)) {
    auto shared = std::make_shared<AvatarAssets>(assets);
    FrameBuilder builder(shared, masks_, CachePolicy::Recompute, rc.fusion, rc.threads);
    const FusedFrame& f = builder.build(cfg.expression);
    SamplingConfig sc;
    sc.step = rc.grid_step;
    sc.roi_step = rc.roi_grid_step;
    sc.roi = assets.face_roi;
    sc.opacity_floor = rc.opacity_floor;
    sc.threads = rc.threads;
    batch_ = sample_uv_grid(f.atlas, f.positions, sc);
    ProjectOptions po;
    po.threads = rc.threads;
    for (const auto& v : views_) splats_.push_back(project_batch(batch_, v.camera, po));
    tiles_.tile_size = rc.tile_size;
    tiles_.threads = rc.threads;
  }

  // Returns the mean per-view L2; fills `grad` (d(lambda6 * l2)/d raw vars) when given.
  double evaluate(const AttributeAtlas& stat_raw, const AttributeAtlas& dyn_raw, Variables* grad) {
    const AttributeAtlas stat = activate_atlas(stat_raw);
    const AttributeAtlas dyn = activate_atlas(dyn_raw);
    const AttributeAtlas fused = fuse_attributes(stat, dyn, masks_, rc_.fusion);
    resample_attributes_inplace(batch_, fused, fused.data.bounds(), rc_.threads);

    BatchGradients bg;
    if (grad) {
      bg.color.assign(3 * batch_.size(), 0.0);
      bg.opacity.assign(batch_.size(), 0.0);
    }
    const double nviews = static_cast<double>(views_.size());
    double l2 = 0.0;
    for (std::size_t v = 0; v < views_.size(); ++v) {
      SplatList& list = splats_[v];
      for (Splat& s : list.splats) {
        s.opacity = batch_.opacities[s.source];
        s.color = Vec3(batch_.colors[3 * s.source], batch_.colors[3 * s.source + 1],
                       batch_.colors[3 * s.source + 2]);
      }
      const RenderTarget rt = composite_tiled(list, views_[v].camera, rc_.background, tiles_);
      l2 += loss_l2_image(rt.color, views_[v].target) / nviews;
      if (!grad) continue;
      const double scale =
          cfg_.weights.lambda6 * 2.0 / (nviews * static_cast<double>(rt.color.data().size()));
      Raster gimg(rt.color.width(), rt.color.height(), 3);
      for (std::size_t i = 0; i < gimg.data().size(); ++i)
        gimg.data()[i] = scale * (rt.color.data()[i] - views_[v].target.data()[i]);
      const SplatGradients sg =
          backward_color_opacity(list, views_[v].camera, rc_.background, gimg, tiles_);
      const BatchGradients b = splat_to_batch_gradients(sg, list, batch_.size());
      for (std::size_t i = 0; i < b.color.size(); ++i) bg.color[i] += b.color[i];
      for (std::size_t i = 0; i < b.opacity.size(); ++i) bg.opacity[i] += b.opacity[i];
    }
    if (grad) chain(backprop_to_atlas(bg, batch_), stat, dyn, *grad);
    return l2;
  }

 private:
  // Adjoint of activation + fusion for the color and opacity channels.
  void chain(const AtlasGradients& g, const AttributeAtlas& stat, const AttributeAtlas& dyn,
             Variables& out) const {
    out = zero_like(assets_);
    const Rect roi = assets_.face_roi;
    for (int y = 0; y < stat.height(); ++y) {
      for (int x = 0; x < stat.width(); ++x) {
        const double soft = masks_.soft_mask.at(x, y, 0);
        const double hard = masks_.face_mask.at(x, y, 0);
        const double mo = rc_.fusion.soft_opacity ? soft : hard;
        const double go = g.opacity.at(x, y, 0);
        if (stat.data.valid(x, y)) {
          for (int c = 0; c < 3; ++c) out.stat.at(x, y, c) = (1.0 - soft) * g.color.at(x, y, c);
          const double a = stat.data.at(x, y, channel::kOpacity);
          out.stat.at(x, y, 3) = (1.0 - mo) * go * a * (1.0 - a);
        }
        if (roi.contains(x, y)) {
          const int dx = x - roi.x;
          const int dy = y - roi.y;
          if (!dyn.data.valid(dx, dy)) continue;
          for (int c = 0; c < 3; ++c) out.dyn.at(dx, dy, c) = soft * g.color.at(x, y, c);
          const double a = dyn.data.at(dx, dy, channel::kOpacity);
          out.dyn.at(dx, dy, 3) = mo * go * a * (1.0 - a);
        }
      }
    }
    apply_selection(out, cfg_.maps);
  }

  const AvatarAssets& assets_;
  const RuntimeConfig& rc_;
  const std::vector<RefineView>& views_;
  const RefineConfig& cfg_;
  BlendMasks masks_;
  PrimitiveBatch batch_;
  std::vector<SplatList> splats_;
  TileOptions tiles_;
};

// Largest Hessian eigenvalue of the objective along the selected variables,
// by power iteration on finite differences of the gradient.
double estimate_lipschitz(Problem& problem, const AvatarAssets& a, const RefineConfig& cfg) {
  Variables g0;
  problem.evaluate(a.static_atlas, a.dynamic_atlas, &g0);
  Variables v = zero_like(a);
  std::mt19937_64 rng(1234);
  std::normal_distribution<double> n01;
  for (double& x : v.stat.data()) x = n01(rng);
  for (double& x : v.dyn.data()) x = n01(rng);
  apply_selection(v, cfg.maps);
  double lambda = 0.0;
  constexpr double kEps = 1e-3;
  for (int it = 0; it < 12; ++it) {
    const double norm = std::sqrt(dot(v, v));
    if (norm == 0.0) break;
    for (double& x : v.stat.data()) x /= norm;
    for (double& x : v.dyn.data()) x /= norm;
    AttributeAtlas s = a.static_atlas;
    AttributeAtlas d = a.dynamic_atlas;
    add_scaled(s, d, v, kEps);
    Variables g1;
    problem.evaluate(s, d, &g1);
    Variables hv = zero_like(a);
    for (std::size_t i = 0; i < hv.stat.data().size(); ++i)
      hv.stat.data()[i] = (g1.stat.data()[i] - g0.stat.data()[i]) / kEps;
    for (std::size_t i = 0; i < hv.dyn.data().size(); ++i)
      hv.dyn.data()[i] = (g1.dyn.data()[i] - g0.dyn.data()[i]) / kEps;
    lambda = dot(v, hv);
    v = std::move(hv);
  }
  return std::abs(lambda);
}

}  // namespace

unsigned parse_refine_map(const std::string& name) {
  if (name == "static_color") return kRefineStaticColor;
  if (name == "static_opacity") return kRefineStaticOpacity;
  if (name == "dynamic_color") return kRefineDynamicColor;
  if (name == "dynamic_opacity") return kRefineDynamicOpacity;
  throw ValidationError("unknown refinement map '" + name + "'");
}

void RefineConfig::validate() const {
  if (iterations < 0) throw ValidationError("iterations must be >= 0");
  if (!(step >= 0.0) || !std::isfinite(step)) throw ValidationError("step must be finite and >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must lie in [0, 1)");
  if (maps == 0 || maps > 15u) throw ValidationError("no refinement maps selected");
  if (!(divergence_factor > 1.0)) throw ValidationError("divergence factor must exceed 1");
  weights.validate();
}

nlohmann::json RefineConfig::to_json() const {
  nlohmann::json m = nlohmann::json::array();
  const char* names[] = {"static_color", "static_opacity", "dynamic_color", "dynamic_opacity"};
  for (int b = 0; b < 4; ++b)
    if (maps & (1u << b)) m.push_back(names[b]);
  return {{"iterations", iterations}, {"step", step},
          {"momentum", momentum},     {"maps", m},
          {"lambda6", weights.lambda6}, {"expression", expression},
          {"target_loss", target_loss}, {"divergence_factor", divergence_factor}};
}

RefineConfig RefineConfig::from_json(const nlohmann::json& j) {
  RefineConfig c;
  c.iterations = j.value("iterations", c.iterations);
  c.step = j.value("step", c.step);
  c.momentum = j.value("momentum", c.momentum);
  if (j.contains("maps")) {
    c.maps = 0;
    for (const auto& m : j.at("maps")) c.maps |= parse_refine_map(m.get<std::string>());
  }
  c.weights.lambda6 = j.value("lambda6", c.weights.lambda6);
  if (j.contains("expression")) c.expression = j.at("expression").get<ExpressionWeights>();
  c.target_loss = j.value("target_loss", c.target_loss);
  c.divergence_factor = j.value("divergence_factor", c.divergence_factor);
  c.validate();
  return c;
}

RefineResult refine_avatar(const AvatarAssets& assets, const RuntimeConfig& runtime,
                           const std::vector<RefineView>& views, const RefineConfig& config) {
  config.validate();
  assets.validate();
  validate_weights(assets, config.expression);
  if (views.empty()) throw ValidationError("refinement needs at least one view");
  for (const auto& v : views) {
    v.camera.validate();
    if (v.target.width() != v.camera.width || v.target.height() != v.camera.height ||
        v.target.channels() != 3)
      throw ValidationError("target image does not match its camera");
  }
  if (assets.static_atlas.activated() || assets.dynamic_atlas.activated())
    throw ValidationError("refinement operates on raw atlases");

  const auto t0 = std::chrono::steady_clock::now();
  Problem problem(assets, runtime, views, config);
  RefineResult result;
  result.static_atlas = assets.static_atlas;
  result.dynamic_atlas = assets.dynamic_atlas;
  result.step = config.step > 0.0 ? config.step : 0.0;
  if (result.step == 0.0) {
    const double lip = estimate_lipschitz(problem, assets, config);
    if (!(lip > 0.0)) throw ValidationError("objective is flat along the selected maps");
    result.step = 1.0 / lip;
  }

  Variables velocity = zero_like(assets);
  double initial = 0.0;
  for (int it = 0;; ++it) {
    Variables grad;
    const bool last = it == config.iterations;
    const double l2 = problem.evaluate(result.static_atlas, result.dynamic_atlas, last ? nullptr : &grad);
    const double total = config.weights.lambda6 * l2;
    result.trace.push_back({it, total, l2});
    if (it == 0) initial = total;
    if (!std::isfinite(total) || (initial > 0.0 && total > config.divergence_factor * initial))
      throw RefineDivergenceError("refinement diverged at iteration " + std::to_string(it) +
                                      " (loss " + std::to_string(total) + ")",
                                  result.trace);
    if (last || total <= config.target_loss) break;
    for (std::size_t i = 0; i < velocity.stat.data().size(); ++i)
      velocity.stat.data()[i] = config.momentum * velocity.stat.data()[i] - result.step * grad.stat.data()[i];
    for (std::size_t i = 0; i < velocity.dyn.data().size(); ++i)
      velocity.dyn.data()[i] = config.momentum * velocity.dyn.data()[i] - result.step * grad.dyn.data()[i];
    add_scaled(result.static_atlas, result.dynamic_atlas, velocity, 1.0);
    clip_colors(result.static_atlas);
    clip_colors(result.dynamic_atlas);
  }
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

void write_trace_csv(const std::string& path, const std::vector<LossTraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw ParseError(path, -1, "cannot open for writing");
  out.precision(17);
  out << "iteration,total,l2\n";
  for (const auto& r : trace) out << r.iteration << "," << r.total << "," << r.l2 << "\n";
  if (!out) throw ParseError(path, -1, "write failed");
}

AtlasLossGrad atlas_l2_loss_and_grad(const AttributeAtlas& activated, const PositionMap& positions,
                                     const SamplingConfig& sampling, const Camera& camera,
                                     const Raster& target, const Vec3& background,
                                     const TileOptions& tiles) {
  const PrimitiveBatch batch = sample_uv_grid(activated, positions, sampling);
  ProjectOptions po;
  po.threads = tiles.threads;
  const SplatList splats = project_batch(batch, camera, po);
  const RenderTarget rt = composite_tiled(splats, camera, background, tiles);
  AtlasLossGrad out;
  out.loss = loss_l2_image(rt.color, target);
  Raster gimg(rt.color.width(), rt.color.height(), 3);
  const double scale = 2.0 / static_cast<double>(gimg.data().size());
  for (std::size_t i = 0; i < gimg.data().size(); ++i)
    gimg.data()[i] = scale * (rt.color.data()[i] - target.data()[i]);
  const SplatGradients sg = backward_color_opacity(splats, camera, background, gimg, tiles);
  out.grad = backprop_to_atlas(splat_to_batch_gradients(sg, splats, batch.size()), batch);
  return out;
}

}  // namespace headsplat
