#pragma once

#include <array>
#include <string>
#include <vector>

#include "headsplat/atlas.hpp"
#include "headsplat/geom.hpp"

namespace headsplat {

/// Triangle mesh with positions and a separate UV index buffer (OBJ style),
/// so vertices on a UV seam keep one position and several UVs.
struct HeadMesh {
  std::vector<Vec3> positions;
  std::vector<std::array<int, 3>> faces;
  std::vector<Vec2> uvs;
  std::vector<std::array<int, 3>> uv_faces;

  std::size_t vertex_count() const { return positions.size(); }
  std::size_t face_count() const { return faces.size(); }

  /// Throws ValidationError on out-of-range indices, UVs outside [0,1]^2,
  /// degenerate faces (area <= 1e-12) or edges shared by more than 2 faces.
  void validate() const;
};

/// Mesh connectivity used by the regularizers.
struct MeshAdjacency {
  std::vector<std::vector<int>> vertex_neighbors;  // sorted, unique
  std::vector<std::vector<int>> edge_faces;        // per undirected edge
  std::vector<std::array<int, 2>> edges;           // (a < b)
  std::vector<std::uint8_t> boundary_vertex;       // touches an edge with 1 face
};

MeshAdjacency build_adjacency(const HeadMesh& mesh);

struct HeadParams {
  int subdivision = 4;
  double radius = 0.12;
  double neck_length = 0.06;
  /// Per-axis stretch applied to the sphere (x, y, z); (1,1,1) keeps it round.
  Vec3 aspect{0.88, 1.0, 0.95};
  /// Vertex UVs are snapped to texel centers of this grid (0 disables).
  int uv_grid = kStaticAtlasSize;
};

/// Subdivided icosahedron with an equirectangular UV layout centred on the
/// front (+z) of the head; the latitude band below the chin is pulled into a
/// neck. Deterministic: identical params give a bit-identical mesh.
HeadMesh generate_head(const HeadParams& params);

/// Rasterizes the UV layout at `resolution`^2; each covered texel holds the
/// barycentric interpolation of its triangle's vertex positions. Texels whose
/// centers fall within one texel of a triangle are filled by clamped
/// extrapolation (seam dilation); all others are invalid.
PositionMap bake_position_map(const HeadMesh& mesh, int resolution, int threads = 0);

struct NormalBakeResult {
  NormalMap normals;
  int degenerate_faces = 0;
};

/// Area-weighted vertex normals interpolated across the UV layout.
NormalBakeResult bake_normal_map(const HeadMesh& mesh, int resolution, int threads = 0);

struct Blendshape {
  std::string name;
  Raster displacement;  // roi-sized, 3 channels
};

struct WeightedBlendshape {
  const Blendshape* shape = nullptr;
  double weight = 0.0;
};

/// pos + sum(weight_i * displacement_i) inside `roi`; texels outside the roi
/// and the validity mask are unchanged.
PositionMap apply_displacement(const PositionMap& pos, std::span<const WeightedBlendshape> shapes,
                               const Rect& roi);

/// The three procedural expressions shipped with synthetic avatars:
/// "jaw-open", "smile" and "brow-raise", sampled on a `size`^2 grid with
/// amplitudes proportional to `amplitude` (world units).
std::vector<Blendshape> make_synthetic_blendshapes(int size, double amplitude);

void write_obj(const HeadMesh& mesh, const std::string& path);
HeadMesh read_obj(const std::string& path);

}  // namespace headsplat
