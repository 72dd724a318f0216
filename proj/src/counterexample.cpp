#include "fedeval/counterexample.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "fedeval/frechet.hpp"

namespace fedeval {

namespace {

constexpr double kDistinctMeans = 1e-10;

std::vector<Eigen::VectorXd> client_means(const ClientSet& clients) {
  std::vector<Eigen::VectorXd> means;
  for (const auto& c : clients) means.push_back(c.stats->mean);
  return means;
}

void require_distinct_means(const std::vector<Eigen::VectorXd>& means) {
  double spread = 0.0;
  for (const auto& a : means)
    for (const auto& b : means) spread = std::max(spread, (a - b).norm());
  if (spread <= kDistinctMeans) throw PreconditionError("u = 0, construction degenerate: all client means are equal");
}

Eigen::MatrixXd mixture_of_covariances(const ClientSet& clients) {
  const auto d = static_cast<Eigen::Index>(clients.dim());
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d, d);
  for (const auto& client : clients) c += client.weight * client.stats->cov;
  return c;
}

// Fills every measured field of `r` from r.g_hat and r.g_prime.
void measure(const ClientSet& clients, const GaussianStats& pooled, CounterexampleReport& r) {
  r.per_client_fid_hat.clear();
  r.per_client_fid_prime.clear();
  r.per_client_residuals.clear();
  for (const auto& c : clients) {
    r.per_client_fid_hat.push_back(frechet_distance(*c.stats, r.g_hat).value);
    r.per_client_fid_prime.push_back(frechet_distance(*c.stats, r.g_prime).value);
    r.per_client_residuals.push_back(r.per_client_fid_prime.back() - r.per_client_fid_hat.back());
  }
  r.fid_all_hat = frechet_distance(pooled, r.g_hat).value;
  r.fid_all_prime = frechet_distance(pooled, r.g_prime).value;
  r.measured_gap = r.fid_all_prime - r.fid_all_hat;
  r.claimed_gap_lower_bound = 2.0 * r.u;
}

// Everything construct() does except the distinct-means precondition.
CounterexampleReport build(const ClientSet& clients) {
  const auto means = client_means(clients);
  if (clients.size() >= clients.dim()) {
    throw PreconditionError("no orthogonal direction: need fewer clients than dimensions");
  }
  const GaussianStats pooled = pool_moments(clients);
  CounterexampleReport r;
  r.g_hat = pooled.model();
  r.beta = orthogonal_direction(means);
  for (const auto& c : clients) r.u += c.weight * c.stats->mean.squaredNorm();
  r.u -= pooled.mean.squaredNorm();
  r.u = std::max(r.u, 0.0);
  r.g_prime.mean = pooled.mean + std::sqrt(r.u) * r.beta;
  r.g_prime.cov = mixture_of_covariances(clients);
  measure(clients, pooled, r);
  return r;
}

}  // namespace

Eigen::VectorXd orthogonal_direction(const std::vector<Eigen::VectorXd>& means) {
  if (means.empty()) throw PreconditionError("no client means");
  const auto d = means.front().size();
  Eigen::MatrixXd m(d, static_cast<Eigen::Index>(means.size()));
  for (std::size_t i = 0; i < means.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = means[i];
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
  const auto rank = qr.rank();
  if (rank >= d) throw PreconditionError("no orthogonal direction: client means span the space");
  const Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd beta = q.col(d - 1).normalized();
  for (Eigen::Index i = 0; i < d; ++i) {
    if (std::abs(beta(i)) > 1e-12) {
      if (beta(i) < 0.0) beta = -beta;
      break;
    }
  }
  return beta;
}

CounterexampleReport construct_counterexample(const ClientSet& clients) {
  require_distinct_means(client_means(clients));
  return build(clients);
}

namespace {

class MatchedPairProblem {
 public:
  MatchedPairProblem(const ClientSet& clients, const CounterexampleReport& start, double gap_target)
      : clients_(clients), pooled_(pool_moments(clients)), d_(static_cast<Eigen::Index>(clients.dim())),
        gap_target_(gap_target), fid_all_hat_(start.fid_all_hat), fid_hat_(start.per_client_fid_hat) {}

  Eigen::Index parameters() const { return d_ + d_ * (d_ + 1) / 2; }
  Eigen::Index outputs() const { return static_cast<Eigen::Index>(clients_.size()) + 1; }

  Eigen::VectorXd encode(const GaussianModel& g) const {
    Eigen::VectorXd theta(parameters());
    theta.head(d_) = g.mean - pooled_.mean;
    const Eigen::LLT<Eigen::MatrixXd> llt(g.cov + 1e-12 * Eigen::MatrixXd::Identity(d_, d_));
    const Eigen::MatrixXd factor = llt.matrixL();
    Eigen::Index at = d_;
    for (Eigen::Index i = 0; i < d_; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) theta(at++) = factor(i, j);
    return theta;
  }

  GaussianModel decode(const Eigen::VectorXd& theta) const {
    Eigen::MatrixXd factor = Eigen::MatrixXd::Zero(d_, d_);
    Eigen::Index at = d_;
    for (Eigen::Index i = 0; i < d_; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) factor(i, j) = theta(at++);
    Eigen::MatrixXd cov = factor * factor.transpose();
    return {pooled_.mean + theta.head(d_), 0.5 * (cov + cov.transpose())};
  }

  /// Per-client score mismatches followed by the gap hinge.
  Eigen::VectorXd residuals(const Eigen::VectorXd& theta) {
    ++evaluations;
    const GaussianModel g = decode(theta);
    Eigen::VectorXd r(outputs());
    for (std::size_t i = 0; i < clients_.size(); ++i) {
      r(static_cast<Eigen::Index>(i)) = frechet_distance(*clients_[i].stats, g).value - fid_hat_[i];
    }
    const double gap = frechet_distance(pooled_, g).value - fid_all_hat_;
    r(outputs() - 1) = std::max(0.0, gap_target_ - gap);
    return r;
  }

  bool acceptable(const Eigen::VectorXd& r, double tol) const {
    return r.head(outputs() - 1).cwiseAbs().sum() <= tol && r(outputs() - 1) <= 1e-12;
  }

  int evaluations = 0;

 private:
  const ClientSet& clients_;
  GaussianStats pooled_;
  Eigen::Index d_;
  double gap_target_;
  double fid_all_hat_;
  std::vector<double> fid_hat_;
};

}  // namespace

CounterexampleReport search_matched_pair(const ClientSet& clients, const MatchedPairSearch& options) {
  if (clients.size() > 1) require_distinct_means(client_means(clients));
  CounterexampleReport report = build(clients);
  const double gap_target = options.gap_fraction * report.u;
  MatchedPairProblem problem(clients, report, gap_target);

  const Eigen::VectorXd origin = problem.encode(report.g_prime);
  const double scale = std::sqrt(std::max(report.g_hat.cov.trace(), 1e-12) / static_cast<double>(clients.dim()));
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Eigen::VectorXd best_theta = origin;
  Eigen::VectorXd best_r = problem.residuals(origin);
  bool found = problem.acceptable(best_r, options.residual_tolerance);
  auto consider = [&](const Eigen::VectorXd& theta, const Eigen::VectorXd& r) {
    const bool ok = problem.acceptable(r, options.residual_tolerance);
    if ((ok && !found) || (ok == found && r.squaredNorm() < best_r.squaredNorm())) {
      best_theta = theta;
      best_r = r;
      found = found || ok;
    }
  };

  const Eigen::Index p = problem.parameters();
  const int per_iteration = static_cast<int>(2 * p + 1);
  for (int restart = 0; !found && problem.evaluations + per_iteration < options.budget; ++restart) {
    Eigen::VectorXd theta = origin;
    if (restart > 0) {
      for (Eigen::Index j = 0; j < p; ++j) theta(j) += 0.5 * scale * normal(rng);
    }
    Eigen::VectorXd r = problem.residuals(theta);
    double damping = 1e-3;
    for (int iter = 0; iter < 200 && problem.evaluations + per_iteration < options.budget; ++iter) {
      consider(theta, r);
      if (problem.acceptable(r, options.residual_tolerance) && r.squaredNorm() < 1e-24) break;

      Eigen::MatrixXd jac(problem.outputs(), p);
      for (Eigen::Index j = 0; j < p; ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(theta(j)));
        Eigen::VectorXd up = theta, down = theta;
        up(j) += h;
        down(j) -= h;
        jac.col(j) = (problem.residuals(up) - problem.residuals(down)) / (2.0 * h);
      }
      const Eigen::MatrixXd normal_matrix = jac.transpose() * jac;
      const Eigen::VectorXd gradient = jac.transpose() * r;
      bool improved = false;
      while (damping < 1e12 && problem.evaluations < options.budget) {
        Eigen::MatrixXd damped = normal_matrix;
        damped.diagonal().array() += damping;
        const Eigen::VectorXd step = damped.ldlt().solve(-gradient);
        const Eigen::VectorXd candidate = theta + step;
        const Eigen::VectorXd r_candidate = problem.residuals(candidate);
        if (r_candidate.squaredNorm() < r.squaredNorm()) {
          theta = candidate;
          r = r_candidate;
          damping = std::max(damping / 3.0, 1e-15);
          improved = true;
          break;
        }
        damping *= 4.0;
      }
      if (!improved) break;
    }
    consider(theta, r);
  }

  report.g_prime = problem.decode(best_theta);
  measure(clients, pool_moments(clients), report);
  report.converged = found;
  report.evaluations = problem.evaluations;
  report.gap_target = gap_target;
  return report;
}

}  // namespace fedeval
