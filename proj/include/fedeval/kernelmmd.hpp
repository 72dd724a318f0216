#pragma once

// Kernel MMD (KID-style) scores and their all/avg aggregation.

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fedeval/statkit.hpp"

namespace fedeval {

enum class KernelKind { polynomial, rbf };

/// Polynomial: (scale <x,y> + offset)^degree, scale defaults to 1/d.
/// RBF: exp(-|x-y|^2 / (2 sigma^2)), sigma defaults to sqrt(d).
struct KernelSpec {
  KernelKind kind = KernelKind::polynomial;
  int degree = 3;
  std::optional<double> scale;
  double offset = 1.0;
  std::optional<double> sigma;

  static KernelSpec polynomial(int degree = 3, std::optional<double> scale = std::nullopt,
                               double offset = 1.0) {
    return {KernelKind::polynomial, degree, scale, offset, std::nullopt};
  }
  static KernelSpec rbf(std::optional<double> sigma = std::nullopt) {
    return {KernelKind::rbf, 3, std::nullopt, 1.0, sigma};
  }

  void validate() const;
};

/// A kernel with every default filled in for a fixed dimension.
struct ResolvedKernel {
  KernelKind kind;
  int degree;
  double scale;
  double offset;
  double sigma;

  static ResolvedKernel resolve(const KernelSpec& spec, std::size_t dim);
  double operator()(std::span<const double> x, std::span<const double> y) const;
};

double kernel_eval(const KernelSpec& spec, std::span<const double> x, std::span<const double> y);

enum class MmdEstimator { vstat, ustat };

/// Full Gram matrices are never materialized; samples are capped at this size.
inline constexpr std::size_t kMaxKernelSamples = 20000;

/// Sum of k(a_i, b_j) over the whole block; `diagonal` is sum_i k(a_i, b_i)
/// and only meaningful when a and b are the same sample.
struct KernelBlockSum {
  double total = 0.0;
  double diagonal = 0.0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  double mean() const { return total / (static_cast<double>(rows) * static_cast<double>(cols)); }
  /// Mean over off-diagonal entries of a square within-sample block.
  double offdiag_mean() const;
};

KernelBlockSum kernel_block_sum(const ResolvedKernel& kernel, const EmbeddingMatrix& a,
                                const EmbeddingMatrix& b, bool same_sample);

struct MmdResult {
  double value = 0.0;
  double within_ref = 0.0;
  double within_gen = 0.0;
  double cross = 0.0;
  MmdEstimator estimator = MmdEstimator::vstat;
};

MmdResult mmd2(const KernelSpec& spec, const EmbeddingMatrix& ref, const EmbeddingMatrix& gen,
               MmdEstimator estimator = MmdEstimator::vstat);

/// Assembles an MmdResult from precomputed block sums.
MmdResult mmd2_from_blocks(const KernelBlockSum& ref_ref, const KernelBlockSum& gen_gen,
                           const KernelBlockSum& ref_gen, MmdEstimator estimator);

struct KidAvg {
  double value = 0.0;
  std::vector<MmdResult> per_client;
};

KidAvg kid_avg(const ClientSet& clients, const EmbeddingMatrix& gen, const KernelSpec& spec,
               MmdEstimator estimator = MmdEstimator::vstat);

/// MMD between `gen` and the lambda-mixture of the clients. With vstat this is
/// |sum_i l_i m_i - m_G|^2 in feature space, equal to mmd2(pooled, gen) when
/// l_i = n_i / n. ustat requires proportional weights.
double kid_all(const ClientSet& clients, const EmbeddingMatrix& gen, const KernelSpec& spec,
               MmdEstimator estimator = MmdEstimator::vstat);

/// sum_i l_i MMD^2(mixture, client_i) with plug-in mean embeddings: the
/// generator-independent offset between kid_avg and kid_all.
double kid_gap(const ClientSet& clients, const KernelSpec& spec);

/// Mean kernel value E k(X, Y) for independent X ~ a, Y ~ b (closed form;
/// polynomial kernels up to degree 3).
double expected_kernel(const KernelSpec& spec, const GaussianModel& a, const GaussianModel& b);

using GaussianMixture = std::vector<std::pair<double, GaussianModel>>;

/// Population MMD^2 between two Gaussian mixtures.
double analytic_mmd2(const KernelSpec& spec, const GaussianMixture& a, const GaussianMixture& b);

}  // namespace fedeval
