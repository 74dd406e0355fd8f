#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "headsplat/blender.hpp"
#include "headsplat/geom.hpp"
#include "headsplat/vq.hpp"

namespace headsplat {

inline constexpr int kBundleSchemaVersion = 1;

struct BlendshapeEntry {
  std::string name;
  std::string file;
  Rect roi;
};

/// manifest.json of an avatar bundle. File paths are relative to the bundle
/// directory.
struct BundleManifest {
  int schema_version = kBundleSchemaVersion;
  std::string name = "avatar";
  std::string static_atlas = "static_atlas.uvam";
  std::string static_position = "static_position.uvam";
  std::string offset_map = "offset.uvam";
  std::string dynamic_atlas = "dynamic_atlas.uvam";
  Rect face_roi;
  std::vector<BlendshapeEntry> blendshapes;
  int band_width = 16;
  Camera camera;
  std::optional<std::string> codebook;
  int grid_step = 4;
  int roi_grid_step = 2;

  nlohmann::json to_json() const;
  /// Throws ParseError (naming `source`) on missing or mistyped fields and
  /// on a schema version mismatch.
  static BundleManifest from_json(const nlohmann::json& j, const std::string& source);
};

struct AvatarBundle {
  BundleManifest manifest;
  std::shared_ptr<AvatarAssets> assets;
  std::optional<Codebook> codebook;
};

/// Loads `path` (a bundle directory or its manifest.json) and checks that
/// every referenced file parses and that resolutions agree.
AvatarBundle load_bundle(const std::string& path);

/// Writes the manifest and every referenced file into `dir` (created if
/// missing). Blendshape file names come from the manifest entries when they
/// match by name, otherwise "blend_<name>.uvam".
void save_bundle(const AvatarBundle& bundle, const std::string& dir);

struct SyntheticParams {
  int atlas_size = kStaticAtlasSize;
  /// 0 = round(atlas_size * 400 / 1024).
  int roi_size = 0;
  int subdivision = 4;
  int grid_step = 4;
  int roi_grid_step = 2;
  int band_width = 16;
  int render_size = 256;
  double blend_amplitude = 0.012;
  int codebook_size = 16;
  std::uint64_t seed = 7;
  int threads = 0;
};

/// Procedural avatar: an ellipsoidal head with skin and hair regions, a
/// dynamic layer carrying eyes, brows and lips, three expressions, a
/// k-means color codebook and a frontal camera. Deterministic in `params`.
AvatarBundle make_synthetic_bundle(const SyntheticParams& params);

/// Default frontal camera used by synthetic bundles.
Camera default_head_camera(int width, int height);

nlohmann::json rect_to_json(const Rect& r);
Rect rect_from_json(const nlohmann::json& j);

}  // namespace headsplat
