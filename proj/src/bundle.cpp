#include "headsplat/bundle.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "headsplat/head_model.hpp"
#include "headsplat/io.hpp"

namespace headsplat {

namespace fs = std::filesystem;
using nlohmann::json;

json rect_to_json(const Rect& r) {
  return {{"x", r.x}, {"y", r.y}, {"width", r.width}, {"height", r.height}};
}

Rect rect_from_json(const json& j) {
  return {j.at("x").get<int>(), j.at("y").get<int>(), j.at("width").get<int>(),
          j.at("height").get<int>()};
}

json BundleManifest::to_json() const {
  json shapes = json::array();
  for (const auto& b : blendshapes)
    shapes.push_back({{"name", b.name}, {"file", b.file}, {"roi", rect_to_json(b.roi)}});
  json j = {{"schema_version", schema_version},
            {"name", name},
            {"static_atlas", static_atlas},
            {"static_position", static_position},
            {"offset_map", offset_map},
            {"dynamic_atlas", dynamic_atlas},
            {"face_roi", rect_to_json(face_roi)},
            {"blendshapes", shapes},
            {"masks", {{"band_width", band_width}}},
            {"camera", camera.to_json()},
            {"grid_step", grid_step},
            {"roi_grid_step", roi_grid_step}};
  if (codebook) j["codebook"] = *codebook;
  return j;
}

BundleManifest BundleManifest::from_json(const json& j, const std::string& source) {
  BundleManifest m;
  try {
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != kBundleSchemaVersion)
      throw ParseError(source, -1,
                       "unsupported schema_version " + std::to_string(m.schema_version) +
                           " (expected " + std::to_string(kBundleSchemaVersion) + ")");
    m.name = j.value("name", std::string("avatar"));
    m.static_atlas = j.at("static_atlas").get<std::string>();
    m.static_position = j.at("static_position").get<std::string>();
    m.offset_map = j.at("offset_map").get<std::string>();
    m.dynamic_atlas = j.at("dynamic_atlas").get<std::string>();
    m.face_roi = rect_from_json(j.at("face_roi"));
    for (const auto& b : j.at("blendshapes"))
      m.blendshapes.push_back(
          {b.at("name").get<std::string>(), b.at("file").get<std::string>(), rect_from_json(b.at("roi"))});
    m.band_width = j.at("masks").at("band_width").get<int>();
    m.camera = Camera::from_json(j.at("camera"));
    if (j.contains("codebook") && !j["codebook"].is_null()) m.codebook = j["codebook"].get<std::string>();
    m.grid_step = j.value("grid_step", 4);
    m.roi_grid_step = j.value("roi_grid_step", 0);
  } catch (const json::exception& e) {
    throw ParseError(source, -1, std::string("invalid manifest: ") + e.what());
  } catch (const ValidationError& e) {
    throw ParseError(source, -1, std::string("invalid manifest: ") + e.what());
  }
  if (m.band_width < 0) throw ParseError(source, -1, "masks.band_width must be >= 0");
  if (m.grid_step < 1 || m.roi_grid_step < 0)
    throw ParseError(source, -1, "grid steps must be positive");
  return m;
}

AvatarBundle load_bundle(const std::string& path) {
  fs::path manifest_path(path);
  if (fs::is_directory(manifest_path)) manifest_path /= "manifest.json";
  const std::string source = manifest_path.string();
  if (!fs::exists(manifest_path)) throw ParseError(source, -1, "bundle manifest not found");
  const Bytes raw = read_file(source);
  json j;
  try {
    j = json::parse(raw.begin(), raw.end());
  } catch (const json::parse_error& e) {
    throw ParseError(source, static_cast<std::int64_t>(e.byte), std::string("malformed JSON: ") + e.what());
  }
  AvatarBundle bundle;
  bundle.manifest = BundleManifest::from_json(j, source);
  const auto& m = bundle.manifest;
  const fs::path root = manifest_path.parent_path();
  auto file = [&](const std::string& rel) { return (root / rel).string(); };

  auto assets = std::make_shared<AvatarAssets>();
  assets->static_atlas = read_atlas(file(m.static_atlas), AtlasOrigin::Static);
  assets->dynamic_atlas = read_atlas(file(m.dynamic_atlas), AtlasOrigin::Dynamic);
  auto expect_channels = [&](const std::string& rel, const Raster& r, int c) {
    if (r.channels() != c)
      throw ParseError(file(rel), 16, "expected " + std::to_string(c) + " channels, found " +
                                          std::to_string(r.channels()));
  };
  assets->static_position = read_uvam(file(m.static_position)).raster;
  expect_channels(m.static_position, assets->static_position, 3);
  assets->offset = read_uvam(file(m.offset_map)).raster;
  expect_channels(m.offset_map, assets->offset, 3);
  assets->face_roi = m.face_roi;
  for (const auto& e : m.blendshapes) {
    if (!(e.roi == m.face_roi))
      throw ParseError(source, -1, "blendshape '" + e.name + "' roi differs from face_roi");
    Blendshape b{e.name, read_uvam(file(e.file)).raster};
    expect_channels(e.file, b.displacement, 3);
    assets->blendshapes.push_back(std::move(b));
  }
  try {
    assets->validate();
  } catch (const ValidationError& e) {
    throw ParseError(source, -1, e.what());
  }
  if (m.codebook) bundle.codebook = read_cbok(file(*m.codebook));
  bundle.assets = std::move(assets);
  return bundle;
}

void save_bundle(const AvatarBundle& bundle, const std::string& dir) {
  if (!bundle.assets) throw ValidationError("bundle has no assets");
  const AvatarAssets& a = *bundle.assets;
  a.validate();
  fs::create_directories(dir);
  const fs::path root(dir);
  BundleManifest m = bundle.manifest;
  m.face_roi = a.face_roi;
  std::vector<BlendshapeEntry> entries;
  for (const auto& b : a.blendshapes) {
    std::string file = "blend_" + b.name + ".uvam";
    for (const auto& e : m.blendshapes)
      if (e.name == b.name) file = e.file;
    entries.push_back({b.name, file, a.face_roi});
    write_uvam((root / file).string(), b.displacement);
  }
  m.blendshapes = entries;
  write_atlas((root / m.static_atlas).string(), a.static_atlas);
  write_atlas((root / m.dynamic_atlas).string(), a.dynamic_atlas);
  write_uvam((root / m.static_position).string(), a.static_position);
  write_uvam((root / m.offset_map).string(), a.offset);
  if (bundle.codebook) {
    if (!m.codebook) m.codebook = "codebook.cbok";
    write_cbok((root / *m.codebook).string(), *bundle.codebook);
  } else {
    m.codebook.reset();
  }
  std::ofstream out(root / "manifest.json");
  out << m.to_json().dump(2) << "\n";
  if (!out) throw ParseError((root / "manifest.json").string(), -1, "write failed");
}

Camera default_head_camera(int width, int height) {
  return orbit_camera(Vec3(0.0, -0.02, 0.0), 0.6, 0.0, 0.0, width, height, 30.0);
}

namespace {

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

// Central difference of the position map along one axis, falling back to a
// one-sided difference at invalid neighbours.
Vec3 position_derivative(const PositionMap& pos, int x, int y, int dx, int dy) {
  auto at = [&](int px, int py, Vec3& out) {
    if (px < 0 || py < 0 || px >= pos.width() || py >= pos.height() || !pos.valid(px, py)) return false;
    out = Vec3(pos.at(px, py, 0), pos.at(px, py, 1), pos.at(px, py, 2));
    return true;
  };
  Vec3 a, b, c;
  at(x, y, c);
  const bool ha = at(x - dx, y - dy, a);
  const bool hb = at(x + dx, y + dy, b);
  if (ha && hb) return 0.5 * (b - a);
  if (hb) return b - c;
  if (ha) return c - a;
  return Vec3::Zero();
}

struct Paint {
  Vec3 color;
  double weight;
};

void blend(Vec3& base, const Paint& p) { base = (1.0 - p.weight) * base + p.weight * p.color; }

double ellipse(double s, double t, double cs, double ct, double rs, double rt, double soft) {
  const double d = std::sqrt((s - cs) * (s - cs) / (rs * rs) + (t - ct) * (t - ct) / (rt * rt));
  return 1.0 - smoothstep(1.0 - soft, 1.0 + soft, d);
}

}  // namespace

AvatarBundle make_synthetic_bundle(const SyntheticParams& p) {
  if (p.atlas_size < 16) throw ValidationError("atlas_size must be >= 16");
  if (p.grid_step < 1 || p.roi_grid_step < 0) throw ValidationError("grid steps must be positive");
  if (p.render_size < 8) throw ValidationError("render_size must be >= 8");
  const int n = p.atlas_size;
  const int r = p.roi_size > 0 ? p.roi_size
                               : static_cast<int>(std::lround(n * double(kDynamicAtlasSize) / kStaticAtlasSize));

  HeadParams hp;
  hp.subdivision = p.subdivision;
  const HeadMesh mesh = generate_head(hp);
  const PositionMap pos = bake_position_map(mesh, n, p.threads);
  const NormalMap normals = bake_normal_map(mesh, n, p.threads).normals;
  const Rect roi = centered_roi(n, r);

  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> noise(0.0, 0.012);

  auto assets = std::make_shared<AvatarAssets>();
  assets->face_roi = roi;
  assets->static_position = pos;
  assets->static_atlas = AttributeAtlas(n, n, AtlasOrigin::Static);
  assets->offset = Raster(n, n, 3, 0.0);
  AttributeAtlas& sa = assets->static_atlas;

  const Vec3 skin(0.86, 0.66, 0.54);
  const Vec3 hair(0.22, 0.14, 0.09);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const bool valid = pos.valid(x, y);
      sa.data.set_valid(x, y, valid);
      assets->offset.set_valid(x, y, valid);
      const double jitter = noise(rng);
      if (!valid) continue;
      const Vec3 nrm(normals.at(x, y, 0), normals.at(x, y, 1), normals.at(x, y, 2));
      const Vec3 world(pos.at(x, y, 0), pos.at(x, y, 1), pos.at(x, y, 2));

      // Local frame: x along du, y along dv, z along the surface normal.
      Vec3 du = position_derivative(pos, x, y, 1, 0);
      const Vec3 dv = position_derivative(pos, x, y, 0, 1);
      Vec3 t = du - du.dot(nrm) * nrm;
      if (t.norm() < 1e-12) t = nrm.unitOrthogonal();
      t.normalize();
      const Vec3 b = nrm.cross(t);
      Mat3 frame;
      frame.col(0) = t;
      frame.col(1) = b;
      frame.col(2) = nrm;
      const Eigen::Quaterniond q(frame);

      const int step = (p.roi_grid_step > 0 && roi.contains(x, y)) ? p.roi_grid_step : p.grid_step;
      const double sv = std::max(0.6 * step * dv.norm(), 1e-5);
      const double su = std::max(0.6 * step * du.norm(), 0.25 * sv);
      const double sn = 0.15 * std::min(su, sv);

      const double h = smoothstep(0.45, 0.6, nrm.y() + 0.8 * std::max(0.0, -nrm.z()));
      Vec3 color = skin * (1.0 + 0.04 * std::sin(40.0 * world.x()) * std::sin(37.0 * world.y()));
      if (world.y() < -0.1) color *= 0.93;
      color = (1.0 - h) * color + h * hair * (1.0 + 0.3 * std::sin(300.0 * world.x() + 90.0 * world.y()));
      color += Vec3::Constant(jitter);
      const Vec3 offset = 0.004 * h * nrm;

      auto texel = sa.data.texel(x, y);
      for (int c = 0; c < 3; ++c) texel[channel::kColor + c] = std::clamp(color[c], 0.0, 1.0);
      texel[channel::kOpacity] = logit(0.97);
      texel[channel::kRotation] = q.w();
      texel[channel::kRotation + 1] = q.x();
      texel[channel::kRotation + 2] = q.y();
      texel[channel::kRotation + 3] = q.z();
      texel[channel::kScale] = std::log(su);
      texel[channel::kScale + 1] = std::log(sv);
      texel[channel::kScale + 2] = std::log(sn);
      for (int c = 0; c < 3; ++c) {
        texel[channel::kOffset + c] = offset[c];
        assets->offset.at(x, y, c) = offset[c];
      }
    }
  }

  // Dynamic layer: the static texels of the roi with facial features painted on.
  AttributeAtlas& da = assets->dynamic_atlas;
  da = AttributeAtlas(r, r, AtlasOrigin::Dynamic);
  da.data = extract_region(sa.data, roi);
  for (int y = 0; y < r; ++y) {
    for (int x = 0; x < r; ++x) {
      if (!da.data.valid(x, y)) continue;
      const double s = (x + 0.5) / r;
      const double t = (y + 0.5) / r;
      auto texel = da.data.texel(x, y);
      Vec3 c(texel[0], texel[1], texel[2]);
      blend(c, {Vec3(0.78, 0.56, 0.46), 0.5 * ellipse(s, t, 0.5, 0.58, 0.05, 0.06, 0.6)});
      for (double cs : {0.36, 0.64}) {
        blend(c, {Vec3(0.95, 0.95, 0.93), ellipse(s, t, cs, 0.40, 0.065, 0.04, 0.15)});
        blend(c, {Vec3(0.25, 0.16, 0.10), ellipse(s, t, cs, 0.40, 0.026, 0.026, 0.2)});
        blend(c, {Vec3(0.02, 0.02, 0.02), ellipse(s, t, cs, 0.40, 0.012, 0.012, 0.2)});
        const double arc = 0.30 + 6.0 * (s - cs) * (s - cs);
        blend(c, {hair, ellipse(s, t, cs, arc, 0.09, 0.014, 0.25)});
      }
      blend(c, {Vec3(0.72, 0.30, 0.32), ellipse(s, t, 0.5, 0.74, 0.11, 0.035, 0.2)});
      blend(c, {Vec3(0.35, 0.10, 0.12), ellipse(s, t, 0.5, 0.74, 0.10, 0.005, 0.5)});
      for (int k = 0; k < 3; ++k) texel[k] = std::clamp(c[k], 0.0, 1.0);
    }
  }

  assets->blendshapes = make_synthetic_blendshapes(r, p.blend_amplitude);
  assets->validate();

  AvatarBundle bundle;
  BundleManifest& m = bundle.manifest;
  m.name = "synthetic-" + std::to_string(p.seed);
  m.face_roi = roi;
  for (const auto& b : assets->blendshapes) m.blendshapes.push_back({b.name, "blend_" + b.name + ".uvam", roi});
  m.band_width = p.band_width;
  m.camera = default_head_camera(p.render_size, p.render_size);
  m.grid_step = p.grid_step;
  m.roi_grid_step = p.roi_grid_step;

  if (p.codebook_size > 0) {
    const int cell = std::max(1, r / 32);
    const int rows = r / cell;
    FeatureGrid grid(rows, rows, 3);
    for (int gy = 0; gy < rows; ++gy) {
      for (int gx = 0; gx < rows; ++gx) {
        double* out = grid.cell(static_cast<std::size_t>(gy) * rows + gx);
        int count = 0;
        for (int y = gy * cell; y < (gy + 1) * cell; ++y)
          for (int x = gx * cell; x < (gx + 1) * cell; ++x) {
            if (!da.data.valid(x, y)) continue;
            for (int c = 0; c < 3; ++c) out[c] += da.data.at(x, y, c);
            ++count;
          }
        for (int c = 0; c < 3 && count > 0; ++c) out[c] /= count;
      }
    }
    const int size = static_cast<int>(std::min<std::size_t>(p.codebook_size, grid.cells()));
    bundle.codebook = kmeans_codebook(grid, size, 12, p.seed);
    m.codebook = "codebook.cbok";
  }
  bundle.assets = std::move(assets);
  return bundle;
}

}  // namespace headsplat
