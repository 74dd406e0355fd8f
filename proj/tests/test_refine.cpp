#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "fixtures.hpp"
#include "headsplat/refine.hpp"
#include "headsplat/runtime.hpp"

using namespace headsplat;

namespace {

// 2x2 atlas whose only complete triangle is the upper-left one: a single
// Gaussian at the origin with the mean color of three texels.
AvatarAssets single_splat_assets(const Vec3& color) {
  AvatarAssets a;
  a.static_atlas = AttributeAtlas(2, 2, AtlasOrigin::Static, AtlasState::Raw);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      auto t = a.static_atlas.data.texel(x, y);
      for (int c = 0; c < 3; ++c) t[channel::kColor + c] = color[c];
      t[channel::kOpacity] = 2.0;
      t[channel::kRotation] = 1.0;
      for (int c = 0; c < 3; ++c) t[channel::kScale + c] = std::log(0.2);
    }
  a.static_atlas.data.set_valid(1, 1, false);
  a.static_position = PositionMap(2, 2, 3, 0.0);
  a.offset = Raster(2, 2, 3, 0.0);
  a.face_roi = {0, 0, 1, 1};
  a.dynamic_atlas = AttributeAtlas(1, 1, AtlasOrigin::Dynamic, AtlasState::Raw);
  auto src = a.static_atlas.data.texel(0, 0);
  std::copy(src.begin(), src.end(), a.dynamic_atlas.data.texel(0, 0).begin());
  return a;
}

RuntimeConfig single_splat_runtime() {
  RuntimeConfig rc;
  rc.grid_step = 1;
  rc.roi_grid_step = 1;
  rc.band_width = 0;
  rc.threads = 1;
  return rc;
}

Raster render(const AvatarAssets& assets, const RuntimeConfig& rc, const Camera& cam) {
  AvatarRuntime rt(std::make_shared<AvatarAssets>(assets), rc);
  return rt.render({}, cam).target.color;
}

Vec3 splat_color(const RefineResult& r, const AvatarAssets& base) {
  AvatarAssets a = base;
  a.static_atlas = r.static_atlas;
  a.dynamic_atlas = r.dynamic_atlas;
  AvatarRuntime rt(std::make_shared<AvatarAssets>(a), single_splat_runtime());
  rt.render({}, fixtures::front_camera(16));
  EXPECT_EQ(rt.primitives().size(), 1u);
  return rt.primitives().get(0).color;
}

}  // namespace

TEST(Refine, SingleSplatConvergesToTheTargetColor) {
  const Vec3 goal(0.8, 0.3, 0.5);
  const AvatarAssets start = single_splat_assets(Vec3(0.4, 0.6, 0.2));
  const Camera cam = fixtures::front_camera(16);
  const Raster target = render(single_splat_assets(goal), single_splat_runtime(), cam);
  RefineConfig cfg;
  cfg.iterations = 500;
  const RefineResult r = refine_avatar(start, single_splat_runtime(), {{cam, target}}, cfg);
  EXPECT_GT(r.step, 0.0);
  ASSERT_EQ(r.trace.size(), 501u);
  EXPECT_LT(r.trace.back().total, r.trace.front().total);
  EXPECT_LT((splat_color(r, start) - goal).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Refine, PlainGradientDescentIsMonotone) {
  const AvatarAssets start = single_splat_assets(Vec3(0.1, 0.9, 0.5));
  const Camera cam = fixtures::front_camera(16);
  const Raster target = render(single_splat_assets(Vec3(0.7, 0.2, 0.4)), single_splat_runtime(), cam);
  RefineConfig cfg;
  cfg.iterations = 60;
  cfg.momentum = 0.0;
  const RefineResult r = refine_avatar(start, single_splat_runtime(), {{cam, target}}, cfg);
  for (std::size_t i = 1; i < r.trace.size(); ++i) {
    EXPECT_LE(r.trace[i].total, r.trace[i - 1].total * (1 + 1e-12)) << "iteration " << i;
    EXPECT_EQ(r.trace[i].iteration, static_cast<int>(i));
    EXPECT_DOUBLE_EQ(r.trace[i].total, cfg.weights.lambda6 * r.trace[i].l2);
  }
}

TEST(Refine, InitialRenderIsAFixedPoint) {
  const AvatarBundle& b = fixtures::small_bundle();
  RuntimeConfig rc;
  rc.grid_step = b.manifest.grid_step;
  rc.roi_grid_step = b.manifest.roi_grid_step;
  rc.band_width = b.manifest.band_width;
  rc.threads = 1;
  AvatarRuntime rt(b.assets, rc);
  const Camera cam = b.manifest.camera;
  const Raster target = rt.render({}, cam).target.color;
  RefineConfig cfg;
  cfg.iterations = 5;
  cfg.step = 1e-3;
  const RefineResult r = refine_avatar(*b.assets, rc, {{cam, target}}, cfg);
  for (const auto& row : r.trace) EXPECT_LT(row.total, 1e-10);
}

TEST(Refine, DivergenceAbortsWithTrace) {
  const AvatarAssets start = single_splat_assets(Vec3(0.2, 0.2, 0.2));
  const Camera cam = fixtures::front_camera(16);
  const Raster target = render(single_splat_assets(Vec3(0.3, 0.3, 0.3)), single_splat_runtime(), cam);
  RefineConfig cfg;
  cfg.iterations = 50;
  cfg.step = 1e6;
  cfg.momentum = 0.0;
  try {
    refine_avatar(start, single_splat_runtime(), {{cam, target}}, cfg);
    FAIL() << "expected divergence";
  } catch (const RefineDivergenceError& e) {
    ASSERT_GE(e.trace().size(), 2u);
    EXPECT_GT(e.trace().back().total, cfg.divergence_factor * e.trace().front().total);
  }
}

TEST(Refine, ConfigValidationAndJson) {
  RefineConfig c;
  EXPECT_NO_THROW(c.validate());
  const RefineConfig back = RefineConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = RefineConfig{};
  c.maps = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_EQ(parse_refine_map("dynamic_opacity"), kRefineDynamicOpacity);
  EXPECT_THROW(parse_refine_map("geometry"), ValidationError);
  const AvatarAssets a = single_splat_assets(Vec3(0.5, 0.5, 0.5));
  EXPECT_THROW(refine_avatar(a, single_splat_runtime(), {}, RefineConfig{}), ValidationError);
}

TEST(Refine, TraceCsv) {
  const std::string path = (std::filesystem::temp_directory_path() / "headsplat_trace.csv").string();
  write_trace_csv(path, {{0, 2.0, 0.002}, {1, 1.0, 0.001}});
  std::ifstream in(path);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(header, "iteration,total,l2");
  EXPECT_EQ(first.substr(0, 2), "0,");
  std::filesystem::remove(path);
}

TEST(AtlasGradient, MatchesCentralDifferences) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    std::mt19937_64 rng(seed);
    const AttributeAtlas atlas = fixtures::random_activated_atlas(16, 16, rng, 0.2, 0.8, 0.06);
    const PositionMap pos = fixtures::plane_positions(16, 16, 0.5, rng);
    SamplingConfig sc;
    sc.step = 1;
    sc.opacity_floor = 0.0;
    const Camera cam = fixtures::front_camera(32, 2.0);
    Raster target(32, 32, 3);
    std::uniform_real_distribution<double> u(0, 1);
    for (double& v : target.data()) v = u(rng);
    const Vec3 bg(0.1, 0.2, 0.3);
    const AtlasLossGrad lg = atlas_l2_loss_and_grad(atlas, pos, sc, cam, target, bg);
    auto loss_at = [&](int x, int y, int ch, double delta) {
      AttributeAtlas a = atlas;
      a.data.at(x, y, ch) += delta;
      return atlas_l2_loss_and_grad(a, pos, sc, cam, target, bg).loss;
    };
    std::uniform_int_distribution<int> px(0, 15), pc(0, 3);
    const double h = 1e-4;
    for (int k = 0; k < 12; ++k) {
      const int x = px(rng), y = px(rng), ch = pc(rng);
      const double fd = (loss_at(x, y, ch, h) - loss_at(x, y, ch, -h)) / (2 * h);
      const double an = ch < 3 ? lg.grad.color.at(x, y, ch) : lg.grad.opacity.at(x, y, 0);
      EXPECT_LE(std::abs(an - fd), 1e-3 * std::max(std::abs(fd), 1e-6))
          << "seed " << seed << " texel " << x << "," << y << " channel " << ch;
    }
  }
}
