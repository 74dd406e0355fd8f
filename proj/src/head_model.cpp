#include "headsplat/head_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "headsplat/parallel.hpp"

namespace headsplat {

namespace {

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

}  // namespace

void HeadMesh::validate() const {
  if (uv_faces.size() != faces.size()) throw ValidationError("uv face count differs from face count");
  const int nv = static_cast<int>(positions.size());
  const int nt = static_cast<int>(uvs.size());
  for (const Vec2& uv : uvs) {
    if (!(uv.x() >= 0 && uv.x() <= 1 && uv.y() >= 0 && uv.y() <= 1))
      throw ValidationError("uv coordinate outside the unit square");
  }
  std::map<std::uint64_t, int> edge_use;
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int k = 0; k < 3; ++k) {
      if (faces[f][k] < 0 || faces[f][k] >= nv || uv_faces[f][k] < 0 || uv_faces[f][k] >= nt)
        throw ValidationError("face index out of range");
    }
    const auto& t = faces[f];
    if (!(triangle_area(positions[t[0]], positions[t[1]], positions[t[2]]) > 1e-12))
      throw ValidationError("degenerate face " + std::to_string(f));
    for (int k = 0; k < 3; ++k) {
      if (++edge_use[edge_key(t[k], t[(k + 1) % 3])] > 2)
        throw ValidationError("non-manifold edge at face " + std::to_string(f));
    }
  }
}

MeshAdjacency build_adjacency(const HeadMesh& mesh) {
  MeshAdjacency adj;
  adj.vertex_neighbors.resize(mesh.positions.size());
  adj.boundary_vertex.assign(mesh.positions.size(), 0);
  std::map<std::uint64_t, int> edge_index;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& t = mesh.faces[f];
    for (int k = 0; k < 3; ++k) {
      const int a = t[k];
      const int b = t[(k + 1) % 3];
      adj.vertex_neighbors[a].push_back(b);
      adj.vertex_neighbors[b].push_back(a);
      const auto key = edge_key(a, b);
      auto it = edge_index.find(key);
      if (it == edge_index.end()) {
        it = edge_index.emplace(key, static_cast<int>(adj.edges.size())).first;
        adj.edges.push_back({std::min(a, b), std::max(a, b)});
        adj.edge_faces.emplace_back();
      }
      adj.edge_faces[it->second].push_back(static_cast<int>(f));
    }
  }
  for (auto& n : adj.vertex_neighbors) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  for (std::size_t e = 0; e < adj.edges.size(); ++e) {
    if (adj.edge_faces[e].size() == 1) {
      adj.boundary_vertex[adj.edges[e][0]] = 1;
      adj.boundary_vertex[adj.edges[e][1]] = 1;
    }
  }
  return adj;
}

namespace {

struct UnitSphereMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
};

UnitSphereMesh icosphere(int subdivision) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  UnitSphereMesh m;
  m.vertices = {{-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0},
                {0, -1, phi}, {0, 1, phi},  {0, -1, -phi}, {0, 1, -phi},
                {phi, 0, -1}, {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& v : m.vertices) v.normalize();
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
             {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
             {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
             {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (auto& f : m.faces) {
    const Vec3 n = (m.vertices[f[1]] - m.vertices[f[0]]).cross(m.vertices[f[2]] - m.vertices[f[0]]);
    if (n.dot(m.vertices[f[0]] + m.vertices[f[1]] + m.vertices[f[2]]) < 0) std::swap(f[1], f[2]);
  }
  for (int level = 0; level < subdivision; ++level) {
    std::map<std::uint64_t, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = edge_key(a, b);
      if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
      m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
      const int idx = static_cast<int>(m.vertices.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(m.faces.size() * 4);
    for (const auto& f : m.faces) {
      const int ab = mid(f[0], f[1]);
      const int bc = mid(f[1], f[2]);
      const int ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    m.faces = std::move(next);
  }
  return m;
}

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

}  // namespace

HeadMesh generate_head(const HeadParams& params) {
  if (params.subdivision < 0) throw ValidationError("subdivision must be >= 0");
  if (!(params.radius > 0)) throw ValidationError("radius must be positive");
  if (params.neck_length < 0) throw ValidationError("neck length must be >= 0");
  const UnitSphereMesh sphere = icosphere(params.subdivision);

  HeadMesh mesh;
  mesh.faces = sphere.faces;

  // Neck: the cap below the chin is narrowed and pulled down.
  constexpr double kNeckStart = -0.65;
  mesh.positions.reserve(sphere.vertices.size());
  for (const Vec3& p : sphere.vertices) {
    Vec3 q = params.radius * p.cwiseProduct(params.aspect);
    if (params.neck_length > 0 && p.y() < kNeckStart) {
      const double t = (kNeckStart - p.y()) / (1.0 + kNeckStart);
      const double squeeze = 1.0 - 0.3 * smoothstep(0.0, 0.6, t);
      q.x() *= squeeze;
      q.z() *= squeeze;
      q.y() -= params.neck_length * t;
    }
    mesh.positions.push_back(q);
  }

  // Equirectangular layout: longitude atan2(x, z) puts the front (+z) at
  // u = 0.5; v runs from the top pole (0) to the bottom pole (1). Faces that
  // straddle the back seam are unwrapped past u = 1 and the whole layout is
  // rescaled about u = 0.5 to fit the unit square.
  std::vector<std::array<Vec2, 3>> corner_uv(mesh.faces.size());
  double max_dev = 0.5;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    std::array<double, 3> u{};
    std::array<bool, 3> pole{};
    for (int k = 0; k < 3; ++k) {
      const Vec3& p = sphere.vertices[mesh.faces[f][k]];
      pole[k] = std::hypot(p.x(), p.z()) < 1e-9;
      u[k] = std::atan2(p.x(), p.z()) / (2 * M_PI) + 0.5;
      corner_uv[f][k].y() = 0.5 - std::asin(std::clamp(p.y(), -1.0, 1.0)) / M_PI;
    }
    double lo = 1.0, hi = 0.0;
    for (int k = 0; k < 3; ++k) {
      if (pole[k]) continue;
      lo = std::min(lo, u[k]);
      hi = std::max(hi, u[k]);
    }
    if (hi - lo > 0.5) {
      for (int k = 0; k < 3; ++k)
        if (!pole[k] && u[k] < 0.5) u[k] += 1.0;
    }
    double sum = 0.0;
    int count = 0;
    for (int k = 0; k < 3; ++k) {
      if (pole[k]) continue;
      sum += u[k];
      ++count;
    }
    for (int k = 0; k < 3; ++k) {
      if (pole[k]) u[k] = count ? sum / count : 0.5;
      corner_uv[f][k].x() = u[k];
      max_dev = std::max(max_dev, std::abs(u[k] - 0.5));
    }
  }
  const double scale = 0.5 / max_dev * 0.995;
  const int grid = params.uv_grid;
  auto snap = [grid](double t) {
    if (grid <= 0) return t;
    const int idx = std::clamp(static_cast<int>(std::floor(t * grid)), 0, grid - 1);
    return (idx + 0.5) / grid;
  };
  std::map<std::pair<double, double>, int> uv_index;
  mesh.uv_faces.resize(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const double u = snap(0.5 + (corner_uv[f][k].x() - 0.5) * scale);
      const double v = snap(0.5 + (corner_uv[f][k].y() - 0.5) * 0.995);
      auto [it, inserted] = uv_index.emplace(std::make_pair(u, v), static_cast<int>(mesh.uvs.size()));
      if (inserted) mesh.uvs.emplace_back(u, v);
      mesh.uv_faces[f][k] = it->second;
    }
  }
  return mesh;
}

namespace {

// Texel -> (face, barycentrics) assignment of a UV layout.
struct UvCoverage {
  int resolution = 0;
  std::vector<int> face;                  // -1 when uncovered
  std::vector<std::array<double, 3>> bary;
};

struct UvTriangle {
  Vec2 p[3];  // texel-space corners
  double area2 = 0.0;
  int x0, x1, y0, y1;  // inclusive texel bounds, dilated by one texel
};

std::vector<UvTriangle> uv_triangles(const HeadMesh& mesh, int res) {
  std::vector<UvTriangle> tris(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    UvTriangle& t = tris[f];
    for (int k = 0; k < 3; ++k) t.p[k] = mesh.uvs[mesh.uv_faces[f][k]] * res;
    t.area2 = (t.p[1] - t.p[0]).x() * (t.p[2] - t.p[0]).y() -
              (t.p[1] - t.p[0]).y() * (t.p[2] - t.p[0]).x();
    double lx = t.p[0].x(), hx = lx, ly = t.p[0].y(), hy = ly;
    for (int k = 1; k < 3; ++k) {
      lx = std::min(lx, t.p[k].x());
      hx = std::max(hx, t.p[k].x());
      ly = std::min(ly, t.p[k].y());
      hy = std::max(hy, t.p[k].y());
    }
    t.x0 = std::max(0, static_cast<int>(std::floor(lx - 1.5)));
    t.x1 = std::min(res - 1, static_cast<int>(std::ceil(hx + 0.5)));
    t.y0 = std::max(0, static_cast<int>(std::floor(ly - 1.5)));
    t.y1 = std::min(res - 1, static_cast<int>(std::ceil(hy + 0.5)));
  }
  return tris;
}

std::array<double, 3> barycentric(const UvTriangle& t, const Vec2& q) {
  auto edge = [](const Vec2& a, const Vec2& b, const Vec2& p) {
    return (b - a).x() * (p - a).y() - (b - a).y() * (p - a).x();
  };
  return {edge(t.p[1], t.p[2], q) / t.area2, edge(t.p[2], t.p[0], q) / t.area2,
          edge(t.p[0], t.p[1], q) / t.area2};
}

// Closest point of the triangle to q, returned as clamped barycentrics.
std::array<double, 3> closest_barycentric(const UvTriangle& t, const Vec2& q, double& dist) {
  const auto inside = barycentric(t, q);
  if (inside[0] >= 0 && inside[1] >= 0 && inside[2] >= 0) {
    dist = 0.0;
    return inside;
  }
  dist = std::numeric_limits<double>::infinity();
  std::array<double, 3> best{};
  for (int k = 0; k < 3; ++k) {
    const Vec2& a = t.p[k];
    const Vec2& b = t.p[(k + 1) % 3];
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    const double s = len2 > 0 ? std::clamp((q - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    const double d = (a + s * ab - q).norm();
    if (d < dist) {
      dist = d;
      best = {0, 0, 0};
      best[k] = 1 - s;
      best[(k + 1) % 3] = s;
    }
  }
  return best;
}

UvCoverage rasterize_uv(const HeadMesh& mesh, int res, int threads) {
  if (res < 1) throw ValidationError("bake resolution must be >= 1");
  const auto tris = uv_triangles(mesh, res);
  UvCoverage cov;
  cov.resolution = res;
  cov.face.assign(static_cast<std::size_t>(res) * res, -1);
  cov.bary.resize(cov.face.size());
  constexpr double kEps = -1e-12;

  // Inside test at texel centers; the lowest face index wins.
  parallel_for(static_cast<std::size_t>(res), threads, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t f = 0; f < tris.size(); ++f) {
      const UvTriangle& t = tris[f];
      if (std::abs(t.area2) < 1e-12) continue;
      const int y0 = std::max<int>(t.y0, static_cast<int>(r0));
      const int y1 = std::min<int>(t.y1, static_cast<int>(r1) - 1);
      for (int y = y0; y <= y1; ++y) {
        for (int x = t.x0; x <= t.x1; ++x) {
          const std::size_t idx = static_cast<std::size_t>(y) * res + x;
          if (cov.face[idx] >= 0) continue;
          const auto b = barycentric(t, Vec2(x + 0.5, y + 0.5));
          if (b[0] >= kEps && b[1] >= kEps && b[2] >= kEps) {
            cov.face[idx] = static_cast<int>(f);
            cov.bary[idx] = b;
          }
        }
      }
    }
  });

  // One-texel dilation: uncovered texels within one texel of a triangle take
  // the value at the nearest point of that triangle.
  std::vector<int> dil_face(cov.face.size(), -1);
  std::vector<double> dil_dist(cov.face.size(), std::numeric_limits<double>::infinity());
  std::vector<std::array<double, 3>> dil_bary(cov.face.size());
  parallel_for(static_cast<std::size_t>(res), threads, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t f = 0; f < tris.size(); ++f) {
      const UvTriangle& t = tris[f];
      if (std::abs(t.area2) < 1e-12) continue;
      const int y0 = std::max<int>(t.y0, static_cast<int>(r0));
      const int y1 = std::min<int>(t.y1, static_cast<int>(r1) - 1);
      for (int y = y0; y <= y1; ++y) {
        for (int x = t.x0; x <= t.x1; ++x) {
          const std::size_t idx = static_cast<std::size_t>(y) * res + x;
          if (cov.face[idx] >= 0) continue;
          double d = 0.0;
          const auto b = closest_barycentric(t, Vec2(x + 0.5, y + 0.5), d);
          if (d <= 1.0 && d < dil_dist[idx]) {
            dil_dist[idx] = d;
            dil_face[idx] = static_cast<int>(f);
            dil_bary[idx] = b;
          }
        }
      }
    }
  });
  for (std::size_t i = 0; i < cov.face.size(); ++i) {
    if (cov.face[i] < 0 && dil_face[i] >= 0) {
      cov.face[i] = dil_face[i];
      cov.bary[i] = dil_bary[i];
    }
  }
  return cov;
}

Raster interpolate_vertices(const HeadMesh& mesh, const UvCoverage& cov,
                            const std::vector<Vec3>& values) {
  const int res = cov.resolution;
  Raster out(res, res, 3, 0.0);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const std::size_t idx = out.index(x, y);
      const int f = cov.face[idx];
      if (f < 0) {
        out.set_valid(x, y, false);
        continue;
      }
      const auto& b = cov.bary[idx];
      const auto& t = mesh.faces[f];
      const Vec3 v = b[0] * values[t[0]] + b[1] * values[t[1]] + b[2] * values[t[2]];
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = v[c];
    }
  }
  return out;
}

}  // namespace

PositionMap bake_position_map(const HeadMesh& mesh, int resolution, int threads) {
  const UvCoverage cov = rasterize_uv(mesh, resolution, threads);
  return interpolate_vertices(mesh, cov, mesh.positions);
}

NormalBakeResult bake_normal_map(const HeadMesh& mesh, int resolution, int threads) {
  NormalBakeResult result;
  std::vector<Vec3> vn(mesh.positions.size(), Vec3::Zero());
  for (const auto& t : mesh.faces) {
    const Vec3 n = (mesh.positions[t[1]] - mesh.positions[t[0]])
                       .cross(mesh.positions[t[2]] - mesh.positions[t[0]]);
    if (!(0.5 * n.norm() > 1e-12)) {
      ++result.degenerate_faces;
      continue;
    }
    for (int k = 0; k < 3; ++k) vn[t[k]] += n;  // |n| = 2 * area
  }
  for (auto& n : vn) {
    const double len = n.norm();
    if (len > 0) n /= len;
  }
  const UvCoverage cov = rasterize_uv(mesh, resolution, threads);
  result.normals = interpolate_vertices(mesh, cov, vn);
  Raster& nm = result.normals;
  for (int y = 0; y < nm.height(); ++y) {
    for (int x = 0; x < nm.width(); ++x) {
      if (!nm.valid(x, y)) continue;
      auto t = nm.texel(x, y);
      const double len = std::sqrt(t[0] * t[0] + t[1] * t[1] + t[2] * t[2]);
      if (len < 1e-12) {
        nm.set_valid(x, y, false);
        continue;
      }
      for (double& c : t) c /= len;
    }
  }
  return result;
}

PositionMap apply_displacement(const PositionMap& pos, std::span<const WeightedBlendshape> shapes,
                               const Rect& roi) {
  if (roi.x < 0 || roi.y < 0 || roi.x + roi.width > pos.width() ||
      roi.y + roi.height > pos.height())
    throw ValidationError("displacement roi lies outside the position map");
  for (const auto& s : shapes) {
    if (!s.shape) throw ValidationError("null blendshape");
    if (!(s.weight >= 0.0 && s.weight <= 1.0))
      throw ValidationError("blendshape weight for '" + s.shape->name + "' outside [0,1]");
    if (s.shape->displacement.width() != roi.width || s.shape->displacement.height() != roi.height ||
        s.shape->displacement.channels() != 3)
      throw ValidationError("displacement map of '" + s.shape->name + "' does not match the roi");
  }
  PositionMap out = pos;
  for (int y = 0; y < roi.height; ++y) {
    for (int x = 0; x < roi.width; ++x) {
      double d[3] = {0, 0, 0};
      bool any = false;
      for (const auto& s : shapes) {
        if (s.weight == 0.0) continue;
        any = true;
        for (int c = 0; c < 3; ++c) d[c] += s.weight * s.shape->displacement.at(x, y, c);
      }
      if (!any) continue;
      for (int c = 0; c < 3; ++c) out.at(roi.x + x, roi.y + y, c) += d[c];
    }
  }
  return out;
}

std::vector<Blendshape> make_synthetic_blendshapes(int size, double amplitude) {
  // Roi coordinates s (left -> right, +x) and t (top -> bottom, -y) at texel
  // centers. Every field is multiplied by a taper that vanishes on the roi
  // border so displaced geometry stays continuous with the static head.
  auto gauss = [](double ds, double dt, double ss, double st) {
    return std::exp(-0.5 * (ds * ds / (ss * ss) + dt * dt / (st * st)));
  };
  auto taper = [](double s, double t) {
    return smoothstep(0.0, 0.15, s) * smoothstep(0.0, 0.15, 1 - s) * smoothstep(0.0, 0.15, t) *
           smoothstep(0.0, 0.15, 1 - t);
  };
  Blendshape jaw{"jaw-open", Raster(size, size, 3)};
  Blendshape smile{"smile", Raster(size, size, 3)};
  Blendshape brow{"brow-raise", Raster(size, size, 3)};
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double s = (x + 0.5) / size;
      const double t = (y + 0.5) / size;
      const double w = taper(s, t);
      // jaw-open: dy = -A g(s-0.5, t-0.82; 0.18, 0.12), dz = -0.25 A g
      const double g = gauss(s - 0.5, t - 0.82, 0.18, 0.12) * w;
      jaw.displacement.at(x, y, 1) = -amplitude * g;
      jaw.displacement.at(x, y, 2) = -0.25 * amplitude * g;
      // smile: corners at s = 0.36 / 0.64, t = 0.74 move outward (+-0.6 A in x) and up (0.3 A)
      const double gl = gauss(s - 0.36, t - 0.74, 0.07, 0.07) * w;
      const double gr = gauss(s - 0.64, t - 0.74, 0.07, 0.07) * w;
      smile.displacement.at(x, y, 0) = 0.6 * amplitude * (gr - gl);
      smile.displacement.at(x, y, 1) = 0.3 * amplitude * (gr + gl);
      // brow-raise: dy = 0.5 A exp(-(t-0.22)^2 / (2 0.05^2)) over s in [0.25, 0.75]
      const double band = smoothstep(0.2, 0.3, s) * smoothstep(0.2, 0.3, 1 - s);
      brow.displacement.at(x, y, 1) =
          0.5 * amplitude * std::exp(-0.5 * (t - 0.22) * (t - 0.22) / (0.05 * 0.05)) * band * w;
    }
  }
  return {std::move(jaw), std::move(smile), std::move(brow)};
}

void write_obj(const HeadMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError(path, -1, "cannot open for writing");
  out.precision(17);
  out << "# synthetic head\n";
  for (const Vec3& p : mesh.positions) out << "v " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  for (const Vec2& t : mesh.uvs) out << "vt " << t.x() << ' ' << t.y() << '\n';
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    out << 'f';
    for (int k = 0; k < 3; ++k) out << ' ' << mesh.faces[f][k] + 1 << '/' << mesh.uv_faces[f][k] + 1;
    out << '\n';
  }
  if (!out) throw ParseError(path, -1, "write failed");
}

HeadMesh read_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, -1, "cannot open file");
  HeadMesh mesh;
  std::string line;
  std::int64_t offset = 0;
  while (std::getline(in, line)) {
    const std::int64_t line_start = offset;
    offset += static_cast<std::int64_t>(line.size()) + 1;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3 p;
      if (!(ss >> p.x() >> p.y() >> p.z())) throw ParseError(path, line_start, "bad vertex record");
      mesh.positions.push_back(p);
    } else if (tag == "vt") {
      Vec2 t;
      if (!(ss >> t.x() >> t.y())) throw ParseError(path, line_start, "bad vt record");
      mesh.uvs.push_back(t);
    } else if (tag == "f") {
      std::array<int, 3> f{}, ft{};
      for (int k = 0; k < 3; ++k) {
        std::string tok;
        if (!(ss >> tok)) throw ParseError(path, line_start, "face needs 3 corners");
        const auto slash = tok.find('/');
        try {
          f[k] = std::stoi(tok.substr(0, slash)) - 1;
          ft[k] = slash == std::string::npos ? f[k] : std::stoi(tok.substr(slash + 1)) - 1;
        } catch (const std::exception&) {
          throw ParseError(path, line_start, "bad face index '" + tok + "'");
        }
        const bool uv_ok = slash == std::string::npos ||
                           (ft[k] >= 0 && ft[k] < static_cast<int>(mesh.uvs.size()));
        if (f[k] < 0 || f[k] >= static_cast<int>(mesh.positions.size()) || !uv_ok)
          throw ParseError(path, line_start, "face index '" + tok + "' out of range");
      }
      std::string extra;
      if (ss >> extra) throw ParseError(path, line_start, "only triangles are supported");
      mesh.faces.push_back(f);
      mesh.uv_faces.push_back(ft);
    }
  }
  return mesh;
}

}  // namespace headsplat
