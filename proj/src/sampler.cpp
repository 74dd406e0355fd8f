#include "headsplat/sampler.hpp"

#include <algorithm>

#include "headsplat/parallel.hpp"

namespace headsplat {

void PrimitiveBatch::resize(std::size_t n) {
  positions.resize(3 * n);
  rotations.resize(4 * n);
  scales.resize(3 * n);
  opacities.resize(n);
  colors.resize(3 * n);
  cells.resize(n);
}

GaussianPrimitive PrimitiveBatch::get(std::size_t i) const {
  GaussianPrimitive p;
  p.position = Vec3(positions[3 * i], positions[3 * i + 1], positions[3 * i + 2]);
  p.rotation = {rotations[4 * i], rotations[4 * i + 1], rotations[4 * i + 2], rotations[4 * i + 3]};
  p.scale = Vec3(scales[3 * i], scales[3 * i + 1], scales[3 * i + 2]);
  p.opacity = opacities[i];
  p.color = Vec3(colors[3 * i], colors[3 * i + 1], colors[3 * i + 2]);
  return p;
}

void PrimitiveBatch::set(std::size_t i, const GaussianPrimitive& p) {
  for (int c = 0; c < 3; ++c) {
    positions[3 * i + c] = p.position[c];
    scales[3 * i + c] = p.scale[c];
    colors[3 * i + c] = p.color[c];
  }
  rotations[4 * i] = p.rotation.w;
  rotations[4 * i + 1] = p.rotation.x;
  rotations[4 * i + 2] = p.rotation.y;
  rotations[4 * i + 3] = p.rotation.z;
  opacities[i] = p.opacity;
}

int grid_cells(int extent, int step) { return step >= 1 && extent > 1 ? (extent - 1) / step : 0; }

Quaternion average_quaternions(const Quaternion& a, const Quaternion& b, const Quaternion& c) {
  auto aligned = [&a](const Quaternion& q) {
    const double dot = a.w * q.w + a.x * q.x + a.y * q.y + a.z * q.z;
    return dot < 0 ? -q : q;
  };
  const Quaternion qb = aligned(b);
  const Quaternion qc = aligned(c);
  return normalize_quaternion({(a.w + qb.w + qc.w) / 3.0, (a.x + qb.x + qc.x) / 3.0,
                               (a.y + qb.y + qc.y) / 3.0, (a.z + qb.z + qc.z) / 3.0});
}

namespace {


// Corner texel triples of the two triangles of cell (i, j) with step s.
std::array<std::array<std::uint32_t, 3>, 2> cell_corners(int i, int j, int s, int width) {
  auto idx = [width](int x, int y) { return static_cast<std::uint32_t>(y * width + x); };
  return {{{idx(i, j), idx(i + s, j), idx(i, j + s)},
           {idx(i + s, j), idx(i, j + s), idx(i + s, j + s)}}};
}

void sample_attributes(const AttributeAtlas& attrs, const std::array<std::uint32_t, 3>& corners,
                       PrimitiveBatch& out, std::size_t slot) {
  using namespace channel;
  const std::size_t stride = channel::kCount;
  const double* t[3];
  for (int k = 0; k < 3; ++k) t[k] = attrs.data.data().data() + corners[k] * stride;
  for (int c = 0; c < 3; ++c) {
    out.colors[3 * slot + c] = (t[0][kColor + c] + t[1][kColor + c] + t[2][kColor + c]) / 3.0;
    out.scales[3 * slot + c] = (t[0][kScale + c] + t[1][kScale + c] + t[2][kScale + c]) / 3.0;
  }
  out.opacities[slot] = (t[0][kOpacity] + t[1][kOpacity] + t[2][kOpacity]) / 3.0;
  auto quat = [](const double* p) { return Quaternion{p[kRotation], p[kRotation + 1], p[kRotation + 2], p[kRotation + 3]}; };
  const Quaternion q = average_quaternions(quat(t[0]), quat(t[1]), quat(t[2]));
  out.rotations[4 * slot] = q.w;
  out.rotations[4 * slot + 1] = q.x;
  out.rotations[4 * slot + 2] = q.y;
  out.rotations[4 * slot + 3] = q.z;
}

void sample_position(const PositionMap& pos, const std::array<std::uint32_t, 3>& corners,
                     PrimitiveBatch& out, std::size_t slot) {
  const double* d = pos.data().data();
  for (int c = 0; c < 3; ++c)
    out.positions[3 * slot + c] =
        (d[corners[0] * 3 + c] + d[corners[1] * 3 + c] + d[corners[2] * 3 + c]) / 3.0;
}

struct CellRef {
  int i, j, s;
};

}  // namespace

PrimitiveBatch sample_uv_grid(const AttributeAtlas& attrs, const PositionMap& positions,
                              const SamplingConfig& cfg) {
  const int w = attrs.width();
  const int h = attrs.height();
  if (!attrs.activated()) throw ValidationError("sampling requires an activated atlas");
  if (attrs.data.channels() != channel::kCount) throw ValidationError("atlas must have 14 channels");
  if (!positions.same_size(attrs.data) || positions.channels() != 3)
    throw ValidationError("position map does not match the atlas");
  if (cfg.step < 1 || cfg.step >= std::min(w, h)) throw ValidationError("grid step out of range");
  const bool refine = cfg.roi_step > 0 && cfg.roi_step != cfg.step && cfg.roi.width > 0 &&
                      cfg.roi.height > 0;
  if (refine && (cfg.roi_step >= std::min(cfg.roi.width, cfg.roi.height) || cfg.roi.x < 0 ||
                 cfg.roi.y < 0 || cfg.roi.x + cfg.roi.width > w || cfg.roi.y + cfg.roi.height > h))
    throw ValidationError("roi grid step or roi out of range");

  // Enumerate cells row by row: the coarse grid first (skipping cells that lie
  // entirely inside the refined roi), then the roi grid.
  std::vector<std::vector<CellRef>> rows;
  auto inside_roi = [&](int i, int j, int s) {
    return cfg.roi.contains(i, j) && cfg.roi.contains(i + s, j + s);
  };
  for (int j = 0; j + cfg.step < h; j += cfg.step) {
    std::vector<CellRef> row;
    for (int i = 0; i + cfg.step < w; i += cfg.step) {
      if (refine && inside_roi(i, j, cfg.step)) continue;
      row.push_back({i, j, cfg.step});
    }
    rows.push_back(std::move(row));
  }
  if (refine) {
    for (int j = cfg.roi.y; j + cfg.roi_step < cfg.roi.y + cfg.roi.height; j += cfg.roi_step) {
      std::vector<CellRef> row;
      for (int i = cfg.roi.x; i + cfg.roi_step < cfg.roi.x + cfg.roi.width; i += cfg.roi_step)
        row.push_back({i, j, cfg.roi_step});
      rows.push_back(std::move(row));
    }
  }
  std::vector<std::size_t> row_start(rows.size() + 1, 0);
  for (std::size_t r = 0; r < rows.size(); ++r) row_start[r + 1] = row_start[r] + 2 * rows[r].size();

  PrimitiveBatch slots;
  slots.resize(row_start.back());
  std::vector<std::uint8_t> keep(row_start.back(), 0);
  parallel_for(rows.size(), cfg.threads, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      std::size_t slot = row_start[r];
      for (const CellRef& cell : rows[r]) {
        const auto tris = cell_corners(cell.i, cell.j, cell.s, w);
        for (int k = 0; k < 2; ++k, ++slot) {
          const auto& corners = tris[k];
          bool ok = true;
          for (auto c : corners)
            ok &= attrs.data.validity()[c] != 0 && positions.validity()[c] != 0;
          if (!ok) continue;
          sample_attributes(attrs, corners, slots, slot);
          if (slots.opacities[slot] < cfg.opacity_floor) continue;
          sample_position(positions, corners, slots, slot);
          slots.cells[slot] = {cell.i, cell.j, k + 1, cell.s, corners};
          keep[slot] = 1;
        }
      }
    }
  });

  PrimitiveBatch out;
  out.width = w;
  out.height = h;
  out.step = cfg.step;
  out.roi_step = refine ? cfg.roi_step : 0;
  const std::size_t n = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), 1));
  out.resize(n);
  std::size_t dst = 0;
  for (std::size_t src = 0; src < keep.size(); ++src) {
    if (!keep[src]) continue;
    std::copy_n(slots.positions.begin() + 3 * src, 3, out.positions.begin() + 3 * dst);
    std::copy_n(slots.rotations.begin() + 4 * src, 4, out.rotations.begin() + 4 * dst);
    std::copy_n(slots.scales.begin() + 3 * src, 3, out.scales.begin() + 3 * dst);
    std::copy_n(slots.colors.begin() + 3 * src, 3, out.colors.begin() + 3 * dst);
    out.opacities[dst] = slots.opacities[src];
    out.cells[dst] = slots.cells[src];
    ++dst;
  }
  return out;
}

void resample_positions_inplace(PrimitiveBatch& batch, const PositionMap& positions, int threads) {
  if (positions.width() != batch.width || positions.height() != batch.height ||
      positions.channels() != 3)
    throw ValidationError("position map does not match the batch metadata");
  parallel_for(batch.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) sample_position(positions, batch.cells[i].corners, batch, i);
  });
}

PrimitiveBatch resample_positions_only(const PrimitiveBatch& batch, const PositionMap& positions) {
  PrimitiveBatch out = batch;
  resample_positions_inplace(out, positions);
  return out;
}

void resample_attributes_inplace(PrimitiveBatch& batch, const AttributeAtlas& attrs,
                                 const Rect& region, int threads) {
  if (attrs.width() != batch.width || attrs.height() != batch.height)
    throw ValidationError("atlas does not match the batch metadata");
  if (!attrs.activated()) throw ValidationError("sampling requires an activated atlas");
  const int w = batch.width;
  parallel_for(batch.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      bool touches = false;
      for (auto c : batch.cells[i].corners)
        touches |= region.contains(static_cast<int>(c % w), static_cast<int>(c / w));
      if (touches) sample_attributes(attrs, batch.cells[i].corners, batch, i);
    }
  });
}

}  // namespace headsplat
