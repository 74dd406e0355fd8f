#include <gtest/gtest.h>

#include <random>

#include "headsplat/losses.hpp"
#include "oracles.hpp"

using namespace headsplat;

namespace {

// Regular n x n vertex grid on the z = 0 plane.
HeadMesh flat_grid(int n) {
  HeadMesh m;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      m.positions.emplace_back(x * 0.1, y * 0.1, 0.0);
      m.uvs.emplace_back(x / (n - 1.0), y / (n - 1.0));
    }
  for (int y = 0; y + 1 < n; ++y)
    for (int x = 0; x + 1 < n; ++x) {
      const int a = y * n + x;
      m.faces.push_back({a, a + 1, a + n});
      m.faces.push_back({a + 1, a + n + 1, a + n});
    }
  m.uv_faces = m.faces;
  return m;
}

HeadMesh rigid(const HeadMesh& m, const Mat3& r, const Vec3& t) {
  HeadMesh out = m;
  for (auto& p : out.positions) p = r * p + t;
  return out;
}

HeadMesh bumpy_sphere(std::mt19937_64& rng) {
  HeadParams p;
  p.subdivision = 2;
  HeadMesh m = generate_head(p);
  std::normal_distribution<double> n(0, 0.005);
  for (auto& v : m.positions) v += Vec3(n(rng), n(rng), n(rng));
  return m;
}

}  // namespace

TEST(LossL2, IdentityOffsetAndOracle) {
  Raster a(4, 3, 3, 0.5);
  Raster b(4, 3, 3, 0.6);
  EXPECT_EQ(loss_l2_image(a, a), 0.0);
  EXPECT_NEAR(loss_l2_image(a, b), 0.01, 1e-15);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (double& v : a.data()) v = u(rng);
  for (double& v : b.data()) v = u(rng);
  EXPECT_NEAR(loss_l2_image(a, b), oracle::l2_image(a, b), 1e-14);
  EXPECT_THROW(loss_l2_image(a, Raster(3, 3, 3)), ValidationError);
}

TEST(LossNormal, OppositeNormalsGiveFour) {
  Raster n(5, 5, 3, 0.0);
  Raster m(5, 5, 3, 0.0);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) {
      n.at(x, y, 2) = 1.0;
      m.at(x, y, 2) = -1.0;
    }
  EXPECT_EQ(loss_normal(n, n), 0.0);
  EXPECT_EQ(loss_normal(n, m), 4.0);
  // Invalid texels do not count.
  n.set_valid(0, 0, false);
  m.set_valid(0, 0, false);
  n.at(0, 0, 0) = 100;
  EXPECT_EQ(loss_normal(n, m), 4.0);
  m.set_valid(1, 1, false);
  EXPECT_THROW(loss_normal(n, m), ValidationError);
}

TEST(LossLaplacian, FlatGridIsZeroAndBumpMatchesOracle) {
  HeadMesh g = flat_grid(6);
  EXPECT_NEAR(loss_laplacian(g), 0.0, 1e-30);
  g.positions[14] += Vec3(0.01, -0.02, 0.05);
  EXPECT_GT(loss_laplacian(g), 0.0);
  EXPECT_NEAR(loss_laplacian(g), oracle::laplacian(g), 1e-15);
  std::mt19937_64 rng(2);
  const HeadMesh s = bumpy_sphere(rng);
  EXPECT_NEAR(loss_laplacian(s), oracle::laplacian(s), 1e-15);
  EXPECT_EQ(loss_laplacian(s), loss_laplacian(s, build_adjacency(s)));
}

TEST(LossNormalConsistency, FlatFoldAndOracle) {
  EXPECT_NEAR(loss_normal_consistency(flat_grid(5)), 0.0, 1e-15);
  HeadMesh fold;
  fold.positions = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  fold.uvs = {Vec2(0, 0), Vec2(1, 0), Vec2(0, 1), Vec2(1, 1)};
  fold.faces = {{0, 1, 2}, {1, 0, 3}};
  fold.uv_faces = fold.faces;
  EXPECT_NEAR(loss_normal_consistency(fold), 1.0, 1e-15);
  std::mt19937_64 rng(3);
  const HeadMesh s = bumpy_sphere(rng);
  EXPECT_NEAR(loss_normal_consistency(s), oracle::normal_consistency(s), 1e-15);
}

TEST(LossGeometry, RigidMotionInvariance) {
  std::mt19937_64 rng(4);
  const HeadMesh s = bumpy_sphere(rng);
  const Mat3 r = Quaternion::from_axis_angle(Vec3(0.3, 1, -0.2), 1.1).to_matrix();
  const Vec3 t(0.4, -2.0, 7.5);
  const HeadMesh moved = rigid(s, r, t);
  const HeadMesh shifted = rigid(s, Mat3::Identity(), t);
  EXPECT_NEAR(loss_laplacian(moved), loss_laplacian(s), 1e-6);
  EXPECT_NEAR(loss_normal_consistency(moved), loss_normal_consistency(s), 1e-6);
  EXPECT_NEAR(loss_laplacian(shifted), loss_laplacian(s), 1e-12);
}

TEST(LossKl, ClosedFormsClampingAndConvexity) {
  EXPECT_EQ(loss_kl(LatentSample({0, 0, 0}, {0, 0, 0})), 0.0);
  EXPECT_EQ(loss_kl(LatentSample({1}, {0})), 0.5);
  const LatentSample clamped({0}, {100});
  EXPECT_EQ(clamped.log_var()[0], 20.0);
  EXPECT_THROW(LatentSample({0, 1}, {0}), ValidationError);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> mu(6), lv(6), mu2(6), mid(6);
    for (int i = 0; i < 6; ++i) {
      mu[i] = n(rng);
      lv[i] = n(rng);
      mu2[i] = n(rng);
      mid[i] = 0.5 * (mu[i] + mu2[i]);
    }
    const double k = loss_kl(LatentSample(mu, lv));
    EXPECT_NEAR(k, oracle::kl(mu, lv), 1e-12);
    EXPECT_GE(k, 0.0);
    EXPECT_LE(loss_kl(LatentSample(mid, lv)),
              0.5 * (k + loss_kl(LatentSample(mu2, lv))) + 1e-12);
  }
}

TEST(LossWeightsTest, DefaultsAndValidation) {
  LossWeights w;
  EXPECT_EQ(w.lambda1, 1.0);
  EXPECT_EQ(w.lambda3, 0.1);
  EXPECT_EQ(w.lambda4, 20.0);
  EXPECT_EQ(w.lambda6, 1000.0);
  EXPECT_NO_THROW(w.validate());
  w.lambda2 = -1;
  EXPECT_THROW(w.validate(), ValidationError);
}
