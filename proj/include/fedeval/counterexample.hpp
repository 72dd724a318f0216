#pragma once

// Construction and measurement of a generator pair that is meant to receive
// identical per-client Fréchet scores while differing in the pooled score.
// Every reported number comes from a direct frechet_distance evaluation.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "fedeval/statkit.hpp"

namespace fedeval {

struct CounterexampleReport {
  GaussianModel g_hat;    // (mu_hat, C_hat): the pooled-moment Gaussian
  GaussianModel g_prime;  // (mu_hat + sqrt(u) beta, sum_i l_i C_i) for construct()
  double u = 0.0;         // Tr(sum_i l_i (mu_i mu_i^T - mu_hat mu_hat^T))
  Eigen::VectorXd beta;   // unit vector orthogonal to every client mean
  std::vector<double> per_client_fid_hat;
  std::vector<double> per_client_fid_prime;
  std::vector<double> per_client_residuals;  // fid_prime - fid_hat, per client
  double fid_all_hat = 0.0;
  double fid_all_prime = 0.0;
  double measured_gap = 0.0;                 // fid_all_prime - fid_all_hat
  double claimed_gap_lower_bound = 0.0;      // 2u

  // Populated by search_matched_pair only.
  bool converged = true;
  int evaluations = 0;
  double gap_target = 0.0;
};

/// Unit vector orthogonal to span{means}: the last column of the Q factor of
/// a column-pivoted QR, sign fixed so the first non-negligible entry is positive.
Eigen::VectorXd orthogonal_direction(const std::vector<Eigen::VectorXd>& means);

/// Requires k < d and at least two distinct client means.
CounterexampleReport construct_counterexample(const ClientSet& clients);

struct MatchedPairSearch {
  std::uint64_t seed = 0;
  /// Maximum number of objective evaluations.
  int budget = 10000;
  /// The search asks for fid_all(G') - fid_all(G_hat) >= gap_fraction * u.
  double gap_fraction = 0.25;
  double residual_tolerance = 1e-6;
};

/// Levenberg-Marquardt search over (mean, lower-triangular factor of the
/// covariance) minimizing the per-client score mismatch against G_hat with a
/// hinge penalty that keeps the pooled-score gap above the target. Returns
/// the best iterate; `converged` is false if the budget ran out first.
CounterexampleReport search_matched_pair(const ClientSet& clients, const MatchedPairSearch& options = {});

}  // namespace fedeval
