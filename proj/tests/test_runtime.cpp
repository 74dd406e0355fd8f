#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"
#include "headsplat/runtime.hpp"

using namespace headsplat;

namespace {

RuntimeConfig config_for(const AvatarBundle& b, int threads = 1) {
  RuntimeConfig c;
  c.grid_step = b.manifest.grid_step;
  c.roi_grid_step = b.manifest.roi_grid_step;
  c.band_width = b.manifest.band_width;
  c.threads = threads;
  return c;
}

}  // namespace

TEST(Runtime, ThreadCountAndCachePolicyDoNotChangePixels) {
  const AvatarBundle& b = fixtures::small_bundle();
  AvatarRuntime one(b.assets, config_for(b, 1));
  AvatarRuntime many(b.assets, config_for(b, 4));
  RuntimeConfig rc = config_for(b, 2);
  rc.policy = CachePolicy::Recompute;
  AvatarRuntime full(b.assets, rc);
  const Camera cam = b.manifest.camera;
  for (const ExpressionWeights& w :
       {ExpressionWeights{}, ExpressionWeights{{"jaw-open", 1.0}}, ExpressionWeights{{"smile", 0.5}}}) {
    const Raster a = one.render(w, cam).target.color;
    EXPECT_EQ(many.render(w, cam).target.color, a);
    EXPECT_EQ(full.render(w, cam).target.color, a);
    EXPECT_EQ(one.render(w, cam, true).target.color, a) << "oracle compositor";
  }
  EXPECT_EQ(one.static_builds(), 1);
  EXPECT_GT(full.static_builds(), 1);
}

TEST(Runtime, MatchesFreshSamplingEveryFrame) {
  const AvatarBundle& b = fixtures::small_bundle();
  AvatarRuntime rt(b.assets, config_for(b));
  const Camera cam = b.manifest.camera;
  rt.render({{"jaw-open", 0.9}}, cam);
  const RenderedFrame& f = rt.render({{"smile", 0.7}, {"brow-raise", 0.2}}, cam);
  SamplingConfig sc;
  sc.step = b.manifest.grid_step;
  sc.roi_step = b.manifest.roi_grid_step;
  sc.roi = b.assets->face_roi;
  const PrimitiveBatch fresh = sample_uv_grid(rt.fused().atlas, rt.fused().positions, sc);
  // Topology is fixed at the first frame; every attribute is current.
  ASSERT_EQ(rt.primitives().size(), fresh.size());
  EXPECT_EQ(rt.primitives(), fresh);
  EXPECT_EQ(f.primitives, fresh.size());
  EXPECT_EQ(f.splats, rt.splats().splats.size());
}

TEST(Runtime, ExpressionOnlyChangesTheFace) {
  const AvatarBundle& b = fixtures::small_bundle();
  AvatarRuntime rt(b.assets, config_for(b));
  const Camera cam = b.manifest.camera;
  const Raster neutral = rt.render({}, cam).target.color;
  const Raster jaw = rt.render({{"jaw-open", 1.0}}, cam).target.color;
  int changed = 0;
  for (std::size_t i = 0; i < neutral.data().size(); ++i) changed += neutral.data()[i] != jaw.data()[i];
  EXPECT_GT(changed, 0);
  // The top rows show only hair and background.
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < cam.width; ++x)
      for (int c = 0; c < 3; ++c) EXPECT_EQ(neutral.at(x, y, c), jaw.at(x, y, c));
}

TEST(Runtime, ReconfigurationResamples) {
  const AvatarBundle& b = fixtures::small_bundle();
  const Camera cam = b.manifest.camera;
  AvatarRuntime rt(b.assets, config_for(b));
  rt.render({}, cam);
  const std::size_t before = rt.primitives().size();
  rt.set_grid_step(4, 2);
  rt.set_band_width(8);
  const Raster changed = rt.render({{"smile", 0.3}}, cam).target.color;
  EXPECT_LT(rt.primitives().size(), before);
  RuntimeConfig rc = config_for(b);
  rc.grid_step = 4;
  rc.roi_grid_step = 2;
  rc.band_width = 8;
  AvatarRuntime fresh(b.assets, rc);
  EXPECT_EQ(fresh.render({{"smile", 0.3}}, cam).target.color, changed);
  EXPECT_EQ(rt.static_builds(), 1);
}

TEST(Bench, ReportHasTheFourStages) {
  const AvatarBundle& b = fixtures::small_bundle();
  AvatarRuntime rt(b.assets, config_for(b));
  std::vector<ExpressionWeights> seq(2);
  seq[0]["jaw-open"] = 0.5;
  const TimingReport r = run_bench(rt, b.manifest.camera, seq, 5, 2);
  EXPECT_EQ(r.frames, 5);
  EXPECT_EQ(r.warmup, 2);
  EXPECT_EQ(r.samples.size(), 5u);
  EXPECT_FALSE(r.machine.empty());
  for (const auto& s : r.samples) {
    EXPECT_GE(s.dynamic_generation, 0);
    EXPECT_GT(s.rendering, 0);
    EXPECT_LE(s.dynamic_generation + s.color_fusion + s.position_sampling + s.rendering,
              s.total * (1 + 1e-12));
  }
  const nlohmann::json j = r.to_json();
  std::set<std::string> stages;
  for (const auto& [k, v] : j.at("stages").items()) stages.insert(k);
  EXPECT_EQ(stages, (std::set<std::string>{"dynamic_generation", "color_fusion",
                                           "position_sampling", "rendering"}));
  std::set<std::string> keys;
  const nlohmann::json frame = timings_to_json(r.samples[0]);
  for (const auto& [k, v] : frame.items()) keys.insert(k);
  stages.insert("total");
  EXPECT_EQ(keys, stages);
  EXPECT_THROW(run_bench(rt, b.manifest.camera, {}, 3, 0), ValidationError);
}

TEST(Bench, SummaryUsesNearestRank) {
  TimingReport r;
  for (int i = 1; i <= 20; ++i) {
    StageTimings t;
    t.rendering = 21 - i;
    r.samples.push_back(t);
  }
  const auto s = r.summary("rendering");
  EXPECT_EQ(s.median, 10.5);
  EXPECT_EQ(s.p95, 19.0);
  EXPECT_EQ(s.mean, 10.5);
  EXPECT_THROW(r.summary("loading"), ValidationError);
}

TEST(Turntable, Yaws) {
  EXPECT_EQ(turntable_yaws(4), (std::vector<double>{0, 90, 180, 270}));
  EXPECT_EQ(turntable_yaws(1), (std::vector<double>{0}));
  EXPECT_EQ(turntable_yaws(8)[3], 135.0);
  const Camera front = orbit_camera(Vec3::Zero(), 1, 0, 0, 8, 8, 30);
  const Camera back = orbit_camera(Vec3::Zero(), 1, 180, 0, 8, 8, 30);
  EXPECT_NEAR(front.rotation.row(2).dot(back.rotation.row(2)), -1.0, 1e-12);
}
