#pragma once

#include <vector>

#include "headsplat/atlas.hpp"
#include "headsplat/head_model.hpp"

namespace headsplat {

/// Weights of the training objective. Only lambda6 (photometric) is used by
/// the refinement loop; lambda5 has no associated term and is carried as-is.
struct LossWeights {
  double lambda1 = 1.0;     // normal map
  double lambda2 = 1.0;     // Laplacian smoothness
  double lambda3 = 0.1;     // normal consistency
  double lambda4 = 20.0;    // KL
  double lambda5 = 0.01;
  double lambda6 = 1000.0;  // L2 photometric
  double lambda7 = 1000.0;  // perceptual (not implemented)

  void validate() const;
};

/// Diagonal Gaussian posterior. log_var is clamped to [-20, 20].
class LatentSample {
 public:
  LatentSample(std::vector<double> mean, std::vector<double> log_var);
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& log_var() const { return log_var_; }
  std::size_t dim() const { return mean_.size(); }

 private:
  std::vector<double> mean_;
  std::vector<double> log_var_;
};

/// Mean over pixels and channels of the squared difference.
double loss_l2_image(const Raster& render, const Raster& target);

/// Mean over valid texels of |pred - gt|^2 (summed over xyz).
double loss_normal(const NormalMap& pred, const NormalMap& gt);

/// Mean over non-boundary vertices of |v - mean(neighbors)|^2.
double loss_laplacian(const HeadMesh& mesh);
double loss_laplacian(const HeadMesh& mesh, const MeshAdjacency& adj);

/// Mean over edges shared by two faces of (1 - cos) between face normals.
double loss_normal_consistency(const HeadMesh& mesh);
double loss_normal_consistency(const HeadMesh& mesh, const MeshAdjacency& adj);

/// KL(N(mu, sigma^2) || N(0, I)) = 1/2 sum(mu^2 + sigma^2 - log sigma^2 - 1).
double loss_kl(const LatentSample& z);

}  // namespace headsplat
