#include "headsplat/vq.hpp"

#include <limits>
#include <random>

#include "headsplat/error.hpp"
#include "headsplat/parallel.hpp"

namespace headsplat {

namespace {

void check(const FeatureGrid& grid, const Codebook& book) {
  if (book.size < 1) throw ValidationError("codebook is empty");
  if (grid.dim != book.dim)
    throw ValidationError("feature dimension " + std::to_string(grid.dim) +
                          " does not match codebook dimension " + std::to_string(book.dim));
}

// Index and squared distance of the nearest entry; strict '<' keeps the
// lowest index on ties.
std::pair<std::uint32_t, double> nearest(const double* v, const Codebook& book) {
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < book.size; ++k) {
    const double* e = book.entry(k);
    double d = 0.0;
    for (int c = 0; c < book.dim; ++c) {
      const double diff = v[c] - e[c];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::uint32_t>(k);
    }
  }
  return {best, best_d};
}

}  // namespace

QuantizedGrid quantize(const FeatureGrid& grid, const Codebook& book, int threads) {
  check(grid, book);
  QuantizedGrid q;
  q.indices.resize(grid.cells());
  q.vectors = FeatureGrid(grid.rows, grid.cols, grid.dim);
  parallel_for(grid.cells(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto [k, d] = nearest(grid.cell(i), book);
      q.indices[i] = k;
      std::copy_n(book.entry(static_cast<int>(k)), book.dim, q.vectors.cell(i));
    }
  });
  return q;
}

double quantization_error(const FeatureGrid& grid, const Codebook& book, int threads) {
  check(grid, book);
  if (grid.cells() == 0) return 0.0;
  std::vector<double> d2(grid.cells());
  parallel_for(grid.cells(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) d2[i] = nearest(grid.cell(i), book).second;
  });
  double sum = 0.0;
  for (double d : d2) sum += d;
  return sum / static_cast<double>(grid.cells());
}

Codebook kmeans_codebook(const FeatureGrid& samples, int size, int iterations, std::uint64_t seed) {
  if (size < 1) throw ValidationError("codebook size must be >= 1");
  if (samples.cells() == 0) throw ValidationError("no samples for k-means");
  Codebook book(size, samples.dim);
  std::mt19937_64 rng(seed);
  // k-means++ seeding: each new center is drawn with probability
  // proportional to the squared distance to the nearest chosen one.
  std::uniform_int_distribution<std::size_t> pick(0, samples.cells() - 1);
  std::copy_n(samples.cell(pick(rng)), samples.dim, book.entry(0));
  std::vector<double> d2(samples.cells(), std::numeric_limits<double>::infinity());
  for (int k = 1; k < size; ++k) {
    double total = 0.0;
    for (std::size_t i = 0; i < samples.cells(); ++i) {
      double d = 0.0;
      for (int c = 0; c < samples.dim; ++c) {
        const double e = samples.cell(i)[c] - book.entry(k - 1)[c];
        d += e * e;
      }
      d2[i] = std::min(d2[i], d);
      total += d2[i];
    }
    const std::size_t next = total > 0 ? std::discrete_distribution<std::size_t>(d2.begin(), d2.end())(rng)
                                       : pick(rng);
    std::copy_n(samples.cell(next), samples.dim, book.entry(k));
  }
  std::vector<double> sums(book.entries.size());
  std::vector<std::size_t> counts(size);
  for (int it = 0; it < iterations; ++it) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < samples.cells(); ++i) {
      const auto k = nearest(samples.cell(i), book).first;
      ++counts[k];
      for (int c = 0; c < samples.dim; ++c) sums[k * samples.dim + c] += samples.cell(i)[c];
    }
    for (int k = 0; k < size; ++k) {
      if (counts[k] == 0) continue;  // keep the previous center
      for (int c = 0; c < samples.dim; ++c)
        book.entry(k)[c] = sums[k * samples.dim + c] / static_cast<double>(counts[k]);
    }
  }
  return book;
}

}  // namespace headsplat
