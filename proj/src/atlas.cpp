#include "headsplat/atlas.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "headsplat/geom.hpp"

namespace headsplat {

Raster extract_region(const Raster& full, const Rect& roi) {
  if (roi.x < 0 || roi.y < 0 || roi.width < 0 || roi.height < 0 ||
      roi.x + roi.width > full.width() || roi.y + roi.height > full.height())
    throw ValidationError("region lies outside the raster");
  Raster out(roi.width, roi.height, full.channels());
  for (int y = 0; y < roi.height; ++y) {
    for (int x = 0; x < roi.width; ++x) {
      const auto src = full.texel(roi.x + x, roi.y + y);
      std::copy(src.begin(), src.end(), out.texel(x, y).begin());
      out.set_valid(x, y, full.valid(roi.x + x, roi.y + y));
    }
  }
  return out;
}

void sample_bilinear(const Raster& r, double u, double v, std::span<double> out) {
  const double fx = std::clamp(u * r.width() - 0.5, 0.0, r.width() - 1.0);
  const double fy = std::clamp(v * r.height() - 0.5, 0.0, r.height() - 1.0);
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = static_cast<int>(std::floor(fy));
  const int x1 = std::min(x0 + 1, r.width() - 1);
  const int y1 = std::min(y0 + 1, r.height() - 1);
  const double tx = fx - x0;
  const double ty = fy - y0;
  for (int c = 0; c < r.channels(); ++c) {
    const double top = r.at(x0, y0, c) * (1 - tx) + (tx > 0 ? r.at(x1, y0, c) * tx : 0.0);
    const double bot = r.at(x0, y1, c) * (1 - tx) + (tx > 0 ? r.at(x1, y1, c) * tx : 0.0);
    out[c] = top * (1 - ty) + (ty > 0 ? bot * ty : 0.0);
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

namespace {

void activate_texel(std::span<const double> in, std::span<double> out) {
  using namespace channel;
  for (int c = 0; c < 3; ++c) out[kColor + c] = std::clamp(in[kColor + c], 0.0, 1.0);
  out[kOpacity] = sigmoid(in[kOpacity]);
  const Quaternion q = normalize_quaternion(
      {in[kRotation], in[kRotation + 1], in[kRotation + 2], in[kRotation + 3]});
  out[kRotation] = q.w;
  out[kRotation + 1] = q.x;
  out[kRotation + 2] = q.y;
  out[kRotation + 3] = q.z;
  for (int c = 0; c < 3; ++c) out[kScale + c] = std::exp(in[kScale + c]);
  for (int c = 0; c < 3; ++c) out[kOffset + c] = in[kOffset + c];
}

void check_atlas(const AttributeAtlas& a) {
  if (a.data.channels() != channel::kCount)
    throw ValidationError("attribute atlas must have 14 channels");
}

}  // namespace

AttributeAtlas activate_atlas(const AttributeAtlas& raw) {
  check_atlas(raw);
  if (raw.activated()) throw ValidationError("atlas is already activated");
  AttributeAtlas out = raw;
  activate_region(raw, raw.data.bounds(), out);
  out.state = AtlasState::Activated;
  return out;
}

void activate_region(const AttributeAtlas& raw, const Rect& roi, AttributeAtlas& out) {
  check_atlas(raw);
  if (raw.activated()) throw ValidationError("atlas is already activated");
  if (!raw.data.same_shape(out.data)) throw ValidationError("activation output shape mismatch");
  for (int y = roi.y; y < roi.y + roi.height; ++y) {
    for (int x = roi.x; x < roi.x + roi.width; ++x) {
      out.data.set_valid(x, y, raw.data.valid(x, y));
      if (!raw.data.valid(x, y)) continue;
      activate_texel(raw.data.texel(x, y), out.data.texel(x, y));
    }
  }
  out.state = AtlasState::Activated;
}

Rect centered_roi(int full_size, int roi_size) {
  if (roi_size > full_size) throw ValidationError("roi larger than atlas");
  const int offset = (full_size - roi_size) / 2;
  return {offset, offset, roi_size, roi_size};
}

Raster make_face_mask(int width, int height, const Rect& roi) {
  if (roi.x < 0 || roi.y < 0 || roi.x + roi.width > width || roi.y + roi.height > height)
    throw ValidationError("face roi lies outside the atlas");
  Raster mask(width, height, 1, 0.0);
  for (int y = roi.y; y < roi.y + roi.height; ++y)
    for (int x = roi.x; x < roi.x + roi.width; ++x) mask.at(x, y, 0) = 1.0;
  return mask;
}

namespace {

// 1D squared distance transform of a sampled function (Felzenszwalb &
// Huttenlocher lower envelope of parabolas).
void dt_1d(const double* f, int n, std::size_t stride, double* d, std::vector<int>& v,
           std::vector<double>& z, std::vector<double>& tmp) {
  for (int q = 0; q < n; ++q) tmp[q] = f[q * stride];
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  auto intersect = [&](int q, int p) {
    return ((tmp[q] + double(q) * q) - (tmp[p] + double(p) * p)) / (2.0 * q - 2.0 * p);
  };
  for (int q = 1; q < n; ++q) {
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q * stride] = dq * dq + tmp[v[k]];
  }
}

}  // namespace

std::vector<double> squared_distance_to_outside(const Raster& inside_mask) {
  const int w = inside_mask.width();
  const int h = inside_mask.height();
  constexpr double kFar = 1e20;
  std::vector<double> grid(static_cast<std::size_t>(w) * h);
  bool any_outside = false;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool inside = inside_mask.at(x, y, 0) > 0.5;
      grid[inside_mask.index(x, y)] = inside ? kFar : 0.0;
      any_outside |= !inside;
    }
  }
  if (!any_outside) {
    std::fill(grid.begin(), grid.end(), std::numeric_limits<double>::infinity());
    return grid;
  }
  const int n = std::max(w, h);
  std::vector<int> v(n);
  std::vector<double> z(n + 1), tmp(n);
  std::vector<double> out(grid.size());
  for (int x = 0; x < w; ++x) dt_1d(grid.data() + x, h, w, out.data() + x, v, z, tmp);
  for (int y = 0; y < h; ++y)
    dt_1d(out.data() + static_cast<std::size_t>(y) * w, w, 1,
          grid.data() + static_cast<std::size_t>(y) * w, v, z, tmp);
  return grid;
}

Raster make_transition_mask(const Raster& face_mask, int band_width) {
  if (band_width < 0) throw ValidationError("band width must be non-negative");
  bool any = false;
  for (double m : face_mask.data()) any |= m > 0.5;
  if (!any) throw ValidationError("face region is empty");
  Raster soft(face_mask.width(), face_mask.height(), 1, 0.0);
  if (band_width == 0) {
    for (std::size_t i = 0; i < soft.data().size(); ++i)
      soft.data()[i] = face_mask.data()[i] > 0.5 ? 1.0 : 0.0;
    return soft;
  }
  const std::vector<double> d2 = squared_distance_to_outside(face_mask);
  for (std::size_t i = 0; i < d2.size(); ++i) {
    if (face_mask.data()[i] <= 0.5) continue;
    soft.data()[i] = std::min(1.0, std::sqrt(d2[i]) / band_width);
  }
  return soft;
}

BlendMasks make_blend_masks(int width, int height, const Rect& roi, int band_width) {
  BlendMasks m;
  m.face_mask = make_face_mask(width, height, roi);
  m.soft_mask = make_transition_mask(m.face_mask, band_width);
  m.band_width = band_width;
  m.face_roi = roi;
  return m;
}

Raster embed_dynamic(const Raster& full, const Raster& patch, const Rect& roi) {
  if (roi.x < 0 || roi.y < 0 || roi.x + roi.width > full.width() ||
      roi.y + roi.height > full.height())
    throw ValidationError("roi lies outside the full raster");
  if (patch.width() != roi.width || patch.height() != roi.height ||
      patch.channels() != full.channels())
    throw ValidationError("patch dimensions do not match the roi");
  Raster out = full;
  for (int y = 0; y < roi.height; ++y) {
    for (int x = 0; x < roi.width; ++x) {
      const auto src = patch.texel(x, y);
      std::copy(src.begin(), src.end(), out.texel(roi.x + x, roi.y + y).begin());
      out.set_valid(roi.x + x, roi.y + y, patch.valid(x, y));
    }
  }
  return out;
}

AttributeAtlas embed_dynamic(const AttributeAtlas& full, const AttributeAtlas& patch,
                             const Rect& roi) {
  if (full.state != patch.state) throw ValidationError("atlas activation states differ");
  AttributeAtlas out = full;
  out.data = embed_dynamic(full.data, patch.data, roi);
  return out;
}

}  // namespace headsplat
