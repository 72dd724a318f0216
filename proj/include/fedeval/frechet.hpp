#pragma once

// Fréchet (Gaussian 2-Wasserstein) distances, their all/avg aggregation over
// a client set, and the Bures-Wasserstein barycenter of client covariances.

#include <vector>

#include <Eigen/Dense>

#include "fedeval/statkit.hpp"

namespace fedeval {

/// Eigenvalues in [-kPsdTolerance * lambda_max, 0) are clamped to zero;
/// anything below is rejected as not PSD.
inline constexpr double kPsdTolerance = 1e-8;
inline constexpr double kSymmetryTolerance = 1e-10;

/// Throws NotPsdError unless `a` is square, symmetric and PSD within tolerance.
void check_psd(const Eigen::MatrixXd& a, const char* what = "matrix");

/// Principal square root of a symmetric PSD matrix via eigendecomposition.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a);

struct FrechetResult {
  double value = 0.0;
  double mean_term = 0.0;   // |mu_a - mu_b|^2
  double trace_term = 0.0;  // Tr(C_a + C_b - 2 (C_a^1/2 C_b C_a^1/2)^1/2)
};

FrechetResult frechet_distance(const Eigen::VectorXd& mean_a, const Eigen::MatrixXd& cov_a,
                               const Eigen::VectorXd& mean_b, const Eigen::MatrixXd& cov_b);

template <MeanCovariance A, MeanCovariance B>
FrechetResult frechet_distance(const A& a, const B& b) {
  return frechet_distance(a.mean, a.cov, b.mean, b.cov);
}

/// Distance from `g` to the Gaussian with the pooled client moments.
template <MeanCovariance G>
FrechetResult fid_all(const ClientSet& clients, const G& g) {
  return frechet_distance(pool_moments(clients), g);
}

struct FidAvg {
  double value = 0.0;
  std::vector<FrechetResult> per_client;
};

FidAvg fid_avg(const ClientSet& clients, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);

template <MeanCovariance G>
FidAvg fid_avg(const ClientSet& clients, const G& g) {
  return fid_avg(clients, g.mean, g.cov);
}

struct BarycenterOptions {
  double tol = 1e-10;
  int max_iter = 1000;
};

struct BarycenterSolution {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  int iterations = 0;
  /// Relative fixed-point defect |C - sum_i l_i (C^1/2 C_i C^1/2)^1/2|_F / |C|_F.
  double residual = 0.0;
  std::vector<double> residual_history;

  GaussianModel model() const { return {mean, cov}; }
};

/// Fixed-point iteration
///   C <- C^-1/2 (sum_i l_i (C^1/2 C_i C^1/2)^1/2)^2 C^-1/2,  C_0 = sum_i l_i C_i.
/// Throws ConvergenceError if the defect is still above `tol` after max_iter.
BarycenterSolution barycenter(const ClientSet& clients, const BarycenterOptions& options = {});

/// Closed form (sum_i l_i C_i^1/2)^2, valid when all C_i commute.
Eigen::MatrixXd commuting_barycenter(const ClientSet& clients);

/// Relative fixed-point defect of `cov` as a barycenter of the client covariances.
double barycenter_residual(const ClientSet& clients, const Eigen::MatrixXd& cov);

struct FidAvgDecomposition {
  double barycenter_part = 0.0;  // FD(N(mu_hat, C_tilde), g)
  double const_part = 0.0;       // sum_i l_i FD(N(mu_hat, C_tilde), client_i)
  BarycenterSolution barycenter;
};

FidAvgDecomposition fid_avg_decomposition(const ClientSet& clients, const Eigen::VectorXd& mean,
                                          const Eigen::MatrixXd& cov,
                                          const BarycenterOptions& options = {});

template <MeanCovariance G>
FidAvgDecomposition fid_avg_decomposition(const ClientSet& clients, const G& g,
                                          const BarycenterOptions& options = {}) {
  return fid_avg_decomposition(clients, g.mean, g.cov, options);
}

}  // namespace fedeval
