#pragma once

#include <cstdint>
#include <vector>

namespace headsplat {

struct Codebook {
  int size = 0;  // N_code
  int dim = 0;
  std::vector<double> entries;  // size x dim, row-major
  bool frozen = true;

  Codebook() = default;
  Codebook(int n, int d) : size(n), dim(d), entries(static_cast<std::size_t>(n) * d, 0.0) {}
  const double* entry(int k) const { return entries.data() + static_cast<std::size_t>(k) * dim; }
  double* entry(int k) { return entries.data() + static_cast<std::size_t>(k) * dim; }
};

/// m x n grid of d-dimensional features.
struct FeatureGrid {
  int rows = 0;
  int cols = 0;
  int dim = 0;
  std::vector<double> values;

  FeatureGrid() = default;
  FeatureGrid(int m, int n, int d)
      : rows(m), cols(n), dim(d), values(static_cast<std::size_t>(m) * n * d, 0.0) {}
  std::size_t cells() const { return static_cast<std::size_t>(rows) * cols; }
  const double* cell(std::size_t i) const { return values.data() + i * dim; }
  double* cell(std::size_t i) { return values.data() + i * dim; }

  bool operator==(const FeatureGrid&) const = default;
};

struct QuantizedGrid {
  std::vector<std::uint32_t> indices;  // per cell
  FeatureGrid vectors;                 // selected entries
};

/// Nearest codebook entry per cell by squared L2 distance; ties go to the
/// lowest index.
QuantizedGrid quantize(const FeatureGrid& grid, const Codebook& book, int threads = 0);

/// Mean over cells of the squared distance to the nearest entry.
double quantization_error(const FeatureGrid& grid, const Codebook& book, int threads = 0);

/// Lloyd's k-means over the grid cells with k-means++ seeding from a seeded
/// RNG. Used to build synthetic codebook fixtures.
Codebook kmeans_codebook(const FeatureGrid& samples, int size, int iterations, std::uint64_t seed);

}  // namespace headsplat
