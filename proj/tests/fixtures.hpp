#pragma once

#include <random>

#include "headsplat/atlas.hpp"
#include "headsplat/bundle.hpp"
#include "headsplat/geom.hpp"
#include "headsplat/renderer.hpp"
#include "headsplat/sampler.hpp"

namespace fixtures {

using namespace headsplat;

// Activated atlas with random attributes; opacities in [lo, hi].
inline AttributeAtlas random_activated_atlas(int w, int h, std::mt19937_64& rng, double lo = 0.2,
                                             double hi = 0.8, double scale = 0.03) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> n01;
  AttributeAtlas a(w, h, AtlasOrigin::Static, AtlasState::Activated);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      auto t = a.data.texel(x, y);
      for (int c = 0; c < 3; ++c) t[channel::kColor + c] = u01(rng);
      t[channel::kOpacity] = lo + (hi - lo) * u01(rng);
      Quaternion q{n01(rng), n01(rng), n01(rng), n01(rng)};
      q = normalize_quaternion(q);
      t[channel::kRotation] = q.w;
      t[channel::kRotation + 1] = q.x;
      t[channel::kRotation + 2] = q.y;
      t[channel::kRotation + 3] = q.z;
      for (int c = 0; c < 3; ++c) t[channel::kScale + c] = scale * (0.5 + u01(rng));
    }
  return a;
}

// Raw atlas: logits, unnormalized quaternions and log scales.
inline AttributeAtlas random_raw_atlas(int w, int h, std::mt19937_64& rng,
                                       AtlasOrigin origin = AtlasOrigin::Static) {
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  AttributeAtlas a(w, h, origin, AtlasState::Raw);
  for (double& v : a.data.data()) v = n01(rng);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) a.data.at(x, y, c) = u01(rng);
  return a;
}

// Position map on the z = 0 plane covering [-extent, extent]^2, with a small
// random depth jitter.
inline PositionMap plane_positions(int w, int h, double extent, std::mt19937_64& rng,
                                   double jitter = 0.05) {
  std::uniform_real_distribution<double> u(-jitter, jitter);
  PositionMap p(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      p.at(x, y, 0) = -extent + 2 * extent * (x + 0.5) / w;
      p.at(x, y, 1) = -extent + 2 * extent * (y + 0.5) / h;
      p.at(x, y, 2) = u(rng);
    }
  return p;
}

inline Camera front_camera(int size, double distance = 2.0) {
  return orbit_camera(Vec3::Zero(), distance, 0.0, 0.0, size, size, 40.0);
}

// Random screen-space splat list in depth order.
inline SplatList random_splats(int count, int size, std::mt19937_64& rng, double max_sigma = 6.0) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  SplatList list;
  for (int i = 0; i < count; ++i) {
    Splat s;
    s.mean = Vec2(-8 + (size + 16) * u01(rng), -8 + (size + 16) * u01(rng));
    const double sx = 0.5 + max_sigma * u01(rng), sy = 0.5 + max_sigma * u01(rng);
    const double th = 3.14159 * u01(rng);
    Mat2 r;
    r << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    const Mat2 cov = r * Eigen::Vector2d(sx * sx, sy * sy).asDiagonal() * r.transpose();
    const Mat2 inv = cov.inverse();
    s.conic_a = inv(0, 0);
    s.conic_b = inv(0, 1);
    s.conic_c = inv(1, 1);
    s.radius = 3.0 * std::max(sx, sy) + 1e-9;
    s.depth = 1.0 + u01(rng);
    s.opacity = 0.05 + 0.95 * u01(rng);
    s.color = Vec3(u01(rng), u01(rng), u01(rng));
    s.source = static_cast<std::uint32_t>(i);
    list.splats.push_back(s);
  }
  std::sort(list.splats.begin(), list.splats.end(), [](const Splat& a, const Splat& b) {
    return a.depth < b.depth || (a.depth == b.depth && a.source < b.source);
  });
  return list;
}

inline Camera pixel_camera(int size) {
  Camera c;
  c.fx = c.fy = size;
  c.cx = c.cy = size / 2.0;
  c.width = c.height = size;
  return c;
}

// Small synthetic bundle shared by the integration-style tests.
inline const AvatarBundle& small_bundle() {
  static const AvatarBundle b = [] {
    SyntheticParams p;
    p.atlas_size = 128;
    p.subdivision = 3;
    p.grid_step = 2;
    p.roi_grid_step = 1;
    p.band_width = 4;
    p.render_size = 64;
    p.threads = 1;
    return make_synthetic_bundle(p);
  }();
  return b;
}

}  // namespace fixtures
