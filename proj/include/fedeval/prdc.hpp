#pragma once

// Precision / recall / density / coverage on exact k-NN manifolds.

#include <cstddef>
#include <vector>

#include "fedeval/statkit.hpp"

namespace fedeval {

inline constexpr std::size_t kDefaultPrdcNeighbors = 5;

struct PrdcResult {
  double precision = 0.0;
  double recall = 0.0;
  double density = 0.0;
  double coverage = 0.0;
};

/// Euclidean distance from each row to its k-th nearest other row.
std::vector<double> knn_radii(const EmbeddingMatrix& x, std::size_t k);

PrdcResult prdc_scores(const EmbeddingMatrix& ref, const EmbeddingMatrix& gen,
                       std::size_t k = kDefaultPrdcNeighbors);

struct PrdcAggregate {
  PrdcResult all;
  PrdcResult avg;
  std::vector<PrdcResult> per_client;
};

PrdcAggregate prdc_aggregate(const ClientSet& clients, const EmbeddingMatrix& gen,
                             std::size_t k = kDefaultPrdcNeighbors);

}  // namespace fedeval
