#include "headsplat/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "headsplat/parallel.hpp"

namespace headsplat {

SplatList project_batch(const PrimitiveBatch& batch, const Camera& cam, const ProjectOptions& opts) {
  cam.validate();
  const std::size_t n = batch.size();
  std::vector<Splat> slots(n);
  std::vector<std::uint8_t> keep(n, 0);
  parallel_for(n, opts.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const GaussianPrimitive p = batch.get(i);
      const Covariance3 sigma = covariance_from_rs(p.rotation, p.scale);
      const auto proj = project_ewa(sigma, p.position, cam, opts.ewa);
      if (!proj) continue;
      const Mat2& cov = proj->cov.m;
      const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(0, 1);
      if (!(det > 0)) continue;
      const double half_diff = 0.5 * (cov(0, 0) - cov(1, 1));
      const double lambda_max =
          0.5 * (cov(0, 0) + cov(1, 1)) + std::sqrt(half_diff * half_diff + cov(0, 1) * cov(0, 1));
      Splat s;
      s.mean = proj->mean;
      s.conic_a = cov(1, 1) / det;
      s.conic_b = -cov(0, 1) / det;
      s.conic_c = cov(0, 0) / det;
      s.depth = proj->depth;
      s.radius = 3.0 * std::sqrt(lambda_max);
      s.opacity = p.opacity;
      s.color = p.color;
      s.source = static_cast<std::uint32_t>(i);
      if (s.mean.x() + s.radius < 0 || s.mean.x() - s.radius > cam.width ||
          s.mean.y() + s.radius < 0 || s.mean.y() - s.radius > cam.height)
        continue;
      slots[i] = s;
      keep[i] = 1;
    }
  });
  SplatList out;
  out.splats.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (keep[i]) out.splats.push_back(slots[i]);
  out.culled = n - out.splats.size();
  std::sort(out.splats.begin(), out.splats.end(), [](const Splat& a, const Splat& b) {
    return a.depth < b.depth || (a.depth == b.depth && a.source < b.source);
  });
  return out;
}

namespace {

// Alpha of splat s at pixel center (px, py); `falloff` receives the Gaussian
// value g with a = min(kMaxAlpha, opacity * g).
inline double splat_alpha(const Splat& s, double px, double py, double& falloff) {
  const double dx = px - s.mean.x();
  const double dy = py - s.mean.y();
  const double m2 = s.conic_a * dx * dx + 2.0 * s.conic_b * dx * dy + s.conic_c * dy * dy;
  if (!(m2 <= kCutoffMahalanobis2)) {
    falloff = 0.0;
    return 0.0;
  }
  falloff = std::exp(-0.5 * m2);
  return std::min(kMaxAlpha, s.opacity * falloff);
}

// Front-to-back compositing of the splats named by `order` at one pixel.
template <typename IndexRange>
inline double composite_pixel(const std::vector<Splat>& splats, const IndexRange& order, double px,
                              double py, const Vec3& background, double* rgb) {
  double r = 0.0, g = 0.0, b = 0.0, t = 1.0;
  for (const auto idx : order) {
    const Splat& s = splats[idx];
    double falloff;
    const double a = splat_alpha(s, px, py, falloff);
    if (a <= 0.0) continue;
    const double w = a * t;
    r += s.color.x() * w;
    g += s.color.y() * w;
    b += s.color.z() * w;
    t *= 1.0 - a;
    if (t < kMinTransmittance) break;
  }
  rgb[0] = r + t * background.x();
  rgb[1] = g + t * background.y();
  rgb[2] = b + t * background.z();
  return t;
}

struct IotaRange {
  std::uint32_t n;
  struct It {
    std::uint32_t v;
    std::uint32_t operator*() const { return v; }
    It& operator++() {
      ++v;
      return *this;
    }
    bool operator!=(const It& o) const { return v != o.v; }
  };
  It begin() const { return {0}; }
  It end() const { return {n}; }
};

struct SpanRange {
  const std::uint32_t* first;
  const std::uint32_t* last;
  const std::uint32_t* begin() const { return first; }
  const std::uint32_t* end() const { return last; }
};

RenderTarget make_target(const Camera& cam, const Vec3& background) {
  RenderTarget rt;
  rt.color = Raster(cam.width, cam.height, 3, 0.0);
  rt.transmittance.assign(static_cast<std::size_t>(cam.width) * cam.height, 1.0);
  rt.background = background;
  return rt;
}

struct TileBins {
  int tile = 16;
  int tiles_x = 0;
  int tiles_y = 0;
  std::vector<std::size_t> offsets;  // tiles + 1
  std::vector<std::uint32_t> ids;    // depth order within each tile
};

// Pixel index range covered by a splat's 3 sigma box, padded by one pixel.
inline void splat_pixel_bounds(const Splat& s, int width, int height, int& x0, int& x1, int& y0,
                               int& y1) {
  x0 = std::max(0, static_cast<int>(std::floor(s.mean.x() - s.radius - 1.5)));
  x1 = std::min(width - 1, static_cast<int>(std::ceil(s.mean.x() + s.radius + 0.5)));
  y0 = std::max(0, static_cast<int>(std::floor(s.mean.y() - s.radius - 1.5)));
  y1 = std::min(height - 1, static_cast<int>(std::ceil(s.mean.y() + s.radius + 0.5)));
}

TileBins bin_splats(const SplatList& list, const Camera& cam, int tile) {
  if (tile < 1) throw ValidationError("tile size must be >= 1");
  TileBins bins;
  bins.tile = tile;
  bins.tiles_x = (cam.width + tile - 1) / tile;
  bins.tiles_y = (cam.height + tile - 1) / tile;
  const std::size_t ntiles = static_cast<std::size_t>(bins.tiles_x) * bins.tiles_y;
  std::vector<std::size_t> counts(ntiles, 0);
  auto for_tiles = [&](const Splat& s, auto&& fn) {
    int x0, x1, y0, y1;
    splat_pixel_bounds(s, cam.width, cam.height, x0, x1, y0, y1);
    if (x0 > x1 || y0 > y1) return;
    for (int ty = y0 / tile; ty <= y1 / tile; ++ty)
      for (int tx = x0 / tile; tx <= x1 / tile; ++tx)
        fn(static_cast<std::size_t>(ty) * bins.tiles_x + tx);
  };
  for (const Splat& s : list.splats) for_tiles(s, [&](std::size_t t) { ++counts[t]; });
  bins.offsets.assign(ntiles + 1, 0);
  for (std::size_t t = 0; t < ntiles; ++t) bins.offsets[t + 1] = bins.offsets[t] + counts[t];
  bins.ids.resize(bins.offsets.back());
  std::vector<std::size_t> cursor(bins.offsets.begin(), bins.offsets.end() - 1);
  for (std::uint32_t i = 0; i < list.splats.size(); ++i)
    for_tiles(list.splats[i], [&](std::size_t t) { bins.ids[cursor[t]++] = i; });
  return bins;
}

}  // namespace

RenderTarget composite_oracle(const SplatList& splats, const Camera& cam, const Vec3& background) {
  RenderTarget rt = make_target(cam, background);
  const IotaRange all{static_cast<std::uint32_t>(splats.splats.size())};
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      double rgb[3];
      rt.transmittance[rt.color.index(x, y)] =
          composite_pixel(splats.splats, all, x + 0.5, y + 0.5, background, rgb);
      for (int c = 0; c < 3; ++c) rt.color.at(x, y, c) = rgb[c];
    }
  }
  return rt;
}

RenderTarget composite_tiled(const SplatList& splats, const Camera& cam, const Vec3& background,
                             const TileOptions& opts) {
  RenderTarget rt = make_target(cam, background);
  const TileBins bins = bin_splats(splats, cam, opts.tile_size);
  const std::size_t ntiles = static_cast<std::size_t>(bins.tiles_x) * bins.tiles_y;
  parallel_for(ntiles, opts.threads, [&](std::size_t t0, std::size_t t1) {
    for (std::size_t t = t0; t < t1; ++t) {
      const int tx = static_cast<int>(t % bins.tiles_x);
      const int ty = static_cast<int>(t / bins.tiles_x);
      const SpanRange range{bins.ids.data() + bins.offsets[t], bins.ids.data() + bins.offsets[t + 1]};
      const int xe = std::min(cam.width, (tx + 1) * bins.tile);
      const int ye = std::min(cam.height, (ty + 1) * bins.tile);
      for (int y = ty * bins.tile; y < ye; ++y) {
        for (int x = tx * bins.tile; x < xe; ++x) {
          double rgb[3];
          rt.transmittance[rt.color.index(x, y)] =
              composite_pixel(splats.splats, range, x + 0.5, y + 0.5, background, rgb);
          for (int c = 0; c < 3; ++c) rt.color.at(x, y, c) = rgb[c];
        }
      }
    }
  });
  return rt;
}

SplatGradients backward_color_opacity(const SplatList& splats, const Camera& cam,
                                      const Vec3& background, const Raster& grad_image,
                                      const TileOptions& opts) {
  if (grad_image.width() != cam.width || grad_image.height() != cam.height ||
      grad_image.channels() != 3)
    throw ValidationError("image gradient does not match the camera");
  const TileBins bins = bin_splats(splats, cam, opts.tile_size);
  const std::size_t ntiles = static_cast<std::size_t>(bins.tiles_x) * bins.tiles_y;
  // One gradient slot per (tile, splat) bin entry, reduced in tile order below
  // so the result does not depend on the thread count.
  std::vector<Vec3> slot_color(bins.ids.size(), Vec3::Zero());
  std::vector<double> slot_opacity(bins.ids.size(), 0.0);
  const auto& list = splats.splats;

  parallel_for(ntiles, opts.threads, [&](std::size_t t0, std::size_t t1) {
    struct Contribution {
      std::size_t slot;
      double alpha;
      double falloff;
      double trans;
      bool clamped;
    };
    std::vector<Contribution> contribs;
    for (std::size_t t = t0; t < t1; ++t) {
      const int tx = static_cast<int>(t % bins.tiles_x);
      const int ty = static_cast<int>(t / bins.tiles_x);
      const std::size_t first = bins.offsets[t];
      const std::size_t last = bins.offsets[t + 1];
      const int xe = std::min(cam.width, (tx + 1) * bins.tile);
      const int ye = std::min(cam.height, (ty + 1) * bins.tile);
      for (int y = ty * bins.tile; y < ye; ++y) {
        for (int x = tx * bins.tile; x < xe; ++x) {
          const Vec3 dl(grad_image.at(x, y, 0), grad_image.at(x, y, 1), grad_image.at(x, y, 2));
          if (dl.isZero(0.0)) continue;
          contribs.clear();
          double trans = 1.0;
          for (std::size_t k = first; k < last; ++k) {
            const Splat& s = list[bins.ids[k]];
            double falloff;
            const double a = splat_alpha(s, x + 0.5, y + 0.5, falloff);
            if (a <= 0.0) continue;
            contribs.push_back({k, a, falloff, trans, s.opacity * falloff >= kMaxAlpha});
            trans *= 1.0 - a;
            if (trans < kMinTransmittance) break;
          }
          Vec3 after = trans * background;  // sum of everything behind the current splat
          for (auto it = contribs.rbegin(); it != contribs.rend(); ++it) {
            const Splat& s = list[bins.ids[it->slot]];
            const double w = it->alpha * it->trans;
            slot_color[it->slot] += w * dl;
            if (!it->clamped) {
              const Vec3 dc_da = s.color * it->trans - after / (1.0 - it->alpha);
              slot_opacity[it->slot] += dl.dot(dc_da) * it->falloff;
            }
            after += s.color * w;
          }
        }
      }
    }
  });

  SplatGradients g;
  g.color.assign(list.size(), Vec3::Zero());
  g.opacity.assign(list.size(), 0.0);
  for (std::size_t k = 0; k < bins.ids.size(); ++k) {
    g.color[bins.ids[k]] += slot_color[k];
    g.opacity[bins.ids[k]] += slot_opacity[k];
  }
  return g;
}

BatchGradients splat_to_batch_gradients(const SplatGradients& g, const SplatList& splats,
                                        std::size_t batch_size) {
  if (g.color.size() != splats.splats.size() || g.opacity.size() != splats.splats.size())
    throw ValidationError("splat gradients do not match the splat list");
  BatchGradients out;
  out.color.assign(3 * batch_size, 0.0);
  out.opacity.assign(batch_size, 0.0);
  for (std::size_t k = 0; k < splats.splats.size(); ++k) {
    const std::size_t p = splats.splats[k].source;
    if (p >= batch_size) throw ValidationError("splat source index outside the batch");
    for (int c = 0; c < 3; ++c) out.color[3 * p + c] += g.color[k][c];
    out.opacity[p] += g.opacity[k];
  }
  return out;
}

AtlasGradients backprop_to_atlas(const BatchGradients& g, const PrimitiveBatch& batch) {
  if (g.color.size() != 3 * batch.size() || g.opacity.size() != batch.size())
    throw ValidationError("gradients do not match the batch");
  if (batch.width < 1 || batch.height < 1) throw ValidationError("batch has no sampler metadata");
  AtlasGradients out{Raster(batch.width, batch.height, 3, 0.0),
                     Raster(batch.width, batch.height, 1, 0.0)};
  const std::size_t texels = out.opacity.texel_count();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (const std::uint32_t c : batch.cells[i].corners) {
      if (c >= texels) throw ValidationError("corner texel outside the atlas");
      for (int ch = 0; ch < 3; ++ch) out.color.data()[3 * c + ch] += g.color[3 * i + ch] / 3.0;
      out.opacity.data()[c] += g.opacity[i] / 3.0;
    }
  }
  return out;
}

}  // namespace headsplat
