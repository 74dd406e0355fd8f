#include "headsplat/losses.hpp"

#include <algorithm>
#include <cmath>

namespace headsplat {

void LossWeights::validate() const {
  for (double l : {lambda1, lambda2, lambda3, lambda4, lambda5, lambda6, lambda7})
    if (!(l >= 0.0)) throw ValidationError("loss weights must be non-negative");
}

LatentSample::LatentSample(std::vector<double> mean, std::vector<double> log_var)
    : mean_(std::move(mean)), log_var_(std::move(log_var)) {
  if (mean_.size() != log_var_.size())
    throw ValidationError("latent mean and log-variance sizes differ");
  for (double m : mean_)
    if (!std::isfinite(m)) throw ValidationError("latent mean must be finite");
  for (double& lv : log_var_) {
    if (std::isnan(lv)) throw ValidationError("latent log-variance is NaN");
    lv = std::clamp(lv, -20.0, 20.0);
  }
}

double loss_l2_image(const Raster& render, const Raster& target) {
  if (!render.same_shape(target)) throw ValidationError("image dimensions differ");
  if (render.data().empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < render.data().size(); ++i) {
    const double d = render.data()[i] - target.data()[i];
    sum += d * d;
  }
  return sum / static_cast<double>(render.data().size());
}

double loss_normal(const NormalMap& pred, const NormalMap& gt) {
  if (!pred.same_shape(gt) || pred.channels() != 3) throw ValidationError("normal map shapes differ");
  if (pred.validity() != gt.validity()) throw ValidationError("normal map validity masks differ");
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < pred.height(); ++y) {
    for (int x = 0; x < pred.width(); ++x) {
      if (!pred.valid(x, y)) continue;
      for (int c = 0; c < 3; ++c) {
        const double d = pred.at(x, y, c) - gt.at(x, y, c);
        sum += d * d;
      }
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

double loss_laplacian(const HeadMesh& mesh) { return loss_laplacian(mesh, build_adjacency(mesh)); }

double loss_laplacian(const HeadMesh& mesh, const MeshAdjacency& adj) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t v = 0; v < mesh.positions.size(); ++v) {
    const auto& nb = adj.vertex_neighbors[v];
    if (nb.empty()) throw ValidationError("isolated vertex " + std::to_string(v));
    if (adj.boundary_vertex[v]) continue;
    Vec3 mean = Vec3::Zero();
    for (int u : nb) mean += mesh.positions[u];
    mean /= static_cast<double>(nb.size());
    sum += (mesh.positions[v] - mean).squaredNorm();
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

double loss_normal_consistency(const HeadMesh& mesh) {
  return loss_normal_consistency(mesh, build_adjacency(mesh));
}

double loss_normal_consistency(const HeadMesh& mesh, const MeshAdjacency& adj) {
  auto face_normal = [&](int f) {
    const auto& t = mesh.faces[f];
    return (mesh.positions[t[1]] - mesh.positions[t[0]])
        .cross(mesh.positions[t[2]] - mesh.positions[t[0]])
        .normalized();
  };
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t e = 0; e < adj.edges.size(); ++e) {
    const auto& faces = adj.edge_faces[e];
    if (faces.size() > 2) throw ValidationError("non-manifold edge " + std::to_string(e));
    if (faces.size() < 2) continue;
    sum += 1.0 - face_normal(faces[0]).dot(face_normal(faces[1]));
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

double loss_kl(const LatentSample& z) {
  double sum = 0.0;
  for (std::size_t i = 0; i < z.dim(); ++i) {
    const double mu = z.mean()[i];
    const double lv = z.log_var()[i];
    sum += mu * mu + std::exp(lv) - lv - 1.0;
  }
  return 0.5 * sum;
}

}  // namespace headsplat
