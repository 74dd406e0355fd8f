#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "headsplat/atlas.hpp"
#include "oracles.hpp"

using namespace headsplat;

TEST(Activation, AppliesPerChannelActivations) {
  AttributeAtlas raw(2, 1);
  auto t = raw.data.texel(0, 0);
  const double in[14] = {-0.5, 0.25, 1.5, 0.0, 2, 0, 0, 0, 0.0, std::log(2.0), -1.0, 0.1, 0.2, 0.3};
  std::copy(in, in + 14, t.begin());
  raw.data.at(1, 0, channel::kRotation) = 1.0;
  raw.data.set_valid(1, 0, false);
  raw.data.at(1, 0, channel::kOpacity) = 7.0;
  const AttributeAtlas a = activate_atlas(raw);
  EXPECT_TRUE(a.activated());
  const auto o = a.data.texel(0, 0);
  EXPECT_EQ(o[0], 0.0);
  EXPECT_EQ(o[1], 0.25);
  EXPECT_EQ(o[2], 1.0);
  EXPECT_DOUBLE_EQ(o[3], 0.5);
  EXPECT_DOUBLE_EQ(o[4], 1.0);
  EXPECT_DOUBLE_EQ(o[8], 1.0);
  EXPECT_DOUBLE_EQ(o[9], 2.0);
  EXPECT_DOUBLE_EQ(o[10], std::exp(-1.0));
  EXPECT_EQ(o[11], 0.1);
  EXPECT_EQ(o[13], 0.3);
  EXPECT_EQ(a.data.at(1, 0, channel::kOpacity), 7.0);
  EXPECT_FALSE(a.data.valid(1, 0));
}

TEST(Activation, RejectsDoubleActivationAndZeroQuaternion) {
  std::mt19937_64 rng(1);
  AttributeAtlas raw = fixtures::random_raw_atlas(4, 4, rng);
  const AttributeAtlas act = activate_atlas(raw);
  EXPECT_THROW(activate_atlas(act), ValidationError);
  for (int c = 0; c < 4; ++c) raw.data.at(2, 2, channel::kRotation + c) = 0.0;
  EXPECT_THROW(activate_atlas(raw), ValidationError);
}

TEST(Activation, RegionMatchesFullActivationInsideAndCopiesOutside) {
  std::mt19937_64 rng(2);
  const AttributeAtlas raw = fixtures::random_raw_atlas(12, 10, rng);
  const AttributeAtlas full = activate_atlas(raw);
  AttributeAtlas part = raw;
  const Rect roi{3, 2, 5, 4};
  activate_region(raw, roi, part);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 12; ++x)
      for (int c = 0; c < 14; ++c)
        EXPECT_EQ(part.data.at(x, y, c), roi.contains(x, y) ? full.data.at(x, y, c) : raw.data.at(x, y, c));
}

TEST(Roi, DefaultPlacementIsCentered) {
  EXPECT_EQ(centered_roi(kStaticAtlasSize, kDynamicAtlasSize), (Rect{312, 312, 400, 400}));
  EXPECT_THROW(centered_roi(10, 11), ValidationError);
}

TEST(DistanceTransform, MatchesBruteForceOnRandomMasks) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 40; ++trial) {
    const int w = 3 + static_cast<int>(u(rng) * 20);
    const int h = 3 + static_cast<int>(u(rng) * 20);
    const double p = 0.5 + 0.49 * u(rng);
    Raster m(w, h, 1);
    for (double& v : m.data()) v = u(rng) < p ? 1.0 : 0.0;
    m.at(0, 0, 0) = 0.0;
    EXPECT_EQ(squared_distance_to_outside(m), oracle::brute_distance(m)) << "trial " << trial;
  }
}

TEST(DistanceTransform, AllInsideIsInfinite) {
  const auto d = squared_distance_to_outside(Raster(5, 4, 1, 1.0));
  for (double v : d) EXPECT_TRUE(std::isinf(v));
}

TEST(TransitionMask, RampsLinearlyFromTheRoiBorder) {
  const BlendMasks m = make_blend_masks(40, 40, Rect{10, 10, 20, 20}, 4);
  const auto d2 = oracle::brute_distance(m.face_mask);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x) {
      const double s = m.soft_mask.at(x, y, 0);
      if (!m.face_roi.contains(x, y)) {
        EXPECT_EQ(s, 0.0);
        continue;
      }
      EXPECT_DOUBLE_EQ(s, std::min(1.0, std::sqrt(d2[static_cast<std::size_t>(y) * 40 + x]) / 4.0));
    }
  EXPECT_DOUBLE_EQ(m.soft_mask.at(10, 20, 0), 0.25);
  EXPECT_DOUBLE_EQ(m.soft_mask.at(13, 20, 0), 1.0);
  EXPECT_EQ(m.soft_mask.at(20, 20, 0), 1.0);
}

TEST(TransitionMask, ZeroBandIsTheHardMask) {
  const BlendMasks m = make_blend_masks(16, 16, Rect{4, 4, 8, 8}, 0);
  EXPECT_EQ(m.soft_mask.data(), m.face_mask.data());
  EXPECT_THROW(make_transition_mask(Raster(4, 4, 1, 0.0), 2), ValidationError);
  EXPECT_THROW(make_transition_mask(m.face_mask, -1), ValidationError);
}

TEST(TransitionMask, RoiTouchingTheBorderDoesNotTreatTheOutsideAsOutside) {
  const BlendMasks m = make_blend_masks(16, 16, Rect{0, 0, 8, 8}, 2);
  EXPECT_EQ(m.soft_mask.at(0, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(m.soft_mask.at(7, 0, 0), 0.5);
}

TEST(Embed, CopiesOutsideBitExactlyAndReplacesInside) {
  std::mt19937_64 rng(9);
  const AttributeAtlas full = fixtures::random_raw_atlas(20, 16, rng);
  AttributeAtlas patch = fixtures::random_raw_atlas(6, 5, rng, AtlasOrigin::Dynamic);
  patch.data.set_valid(1, 1, false);
  const Rect roi{7, 4, 6, 5};
  const AttributeAtlas out = embed_dynamic(full, patch, roi);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 20; ++x) {
      const bool in = roi.contains(x, y);
      for (int c = 0; c < 14; ++c)
        EXPECT_EQ(out.data.at(x, y, c), in ? patch.data.at(x - 7, y - 4, c) : full.data.at(x, y, c));
      EXPECT_EQ(out.data.valid(x, y), in ? patch.data.valid(x - 7, y - 4) : full.data.valid(x, y));
    }
  EXPECT_THROW(embed_dynamic(full, patch, Rect{16, 0, 6, 5}), ValidationError);
  EXPECT_THROW(embed_dynamic(full, patch, Rect{0, 0, 5, 5}), ValidationError);
}

TEST(Raster, ExtractRegionAndBilinear) {
  Raster r(4, 2, 1);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 4; ++x) r.at(x, y, 0) = 10 * y + x;
  const Raster e = extract_region(r, Rect{1, 1, 2, 1});
  EXPECT_EQ(e.at(0, 0, 0), 11);
  EXPECT_EQ(e.at(1, 0, 0), 12);
  double v = 0;
  sample_bilinear(r, 0.5, 0.5, std::span<double>(&v, 1));
  EXPECT_DOUBLE_EQ(v, 6.5);
  sample_bilinear(r, 0.125, 0.25, std::span<double>(&v, 1));
  EXPECT_DOUBLE_EQ(v, 0.0);
  EXPECT_THROW(extract_region(r, Rect{3, 0, 2, 1}), ValidationError);
}
