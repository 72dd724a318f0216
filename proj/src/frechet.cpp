#include "fedeval/frechet.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fedeval {

namespace {

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> checked_eigen(const Eigen::MatrixXd& a, const char* what) {
  if (a.rows() != a.cols()) throw NotPsdError(std::string(what) + " is not square");
  const double norm = a.norm();
  if ((a - a.transpose()).norm() > kSymmetryTolerance * norm) {
    throw NotPsdError(std::string(what) + " is not PSD: asymmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (a + a.transpose()));
  if (eig.info() != Eigen::Success) throw NumericalError(std::string(what) + ": eigendecomposition failed");
  const auto& w = eig.eigenvalues();
  const double lmax = std::max(w.maxCoeff(), 0.0);
  if (w.minCoeff() < -kPsdTolerance * lmax) {
    throw NotPsdError(std::string(what) + " is not PSD: eigenvalue " + std::to_string(w.minCoeff()));
  }
  return eig;
}

Eigen::MatrixXd sqrt_from(const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& eig) {
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Eigen::MatrixXd s = eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (s + s.transpose());
}

// Tr((A^1/2 B A^1/2)^1/2) given A^1/2.
double cross_trace(const Eigen::MatrixXd& sqrt_a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd m = sqrt_a * b * sqrt_a;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

}  // namespace

void check_psd(const Eigen::MatrixXd& a, const char* what) { (void)checked_eigen(a, what); }

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a) { return sqrt_from(checked_eigen(a, "matrix")); }

FrechetResult frechet_distance(const Eigen::VectorXd& mean_a, const Eigen::MatrixXd& cov_a,
                               const Eigen::VectorXd& mean_b, const Eigen::MatrixXd& cov_b) {
  const auto d = mean_a.size();
  if (mean_b.size() != d || cov_a.rows() != d || cov_b.rows() != d) {
    throw PreconditionError("dimension mismatch between Gaussian statistics");
  }
  const Eigen::MatrixXd sqrt_a = sqrt_from(checked_eigen(cov_a, "covariance"));
  check_psd(cov_b, "covariance");

  FrechetResult r;
  r.mean_term = (mean_a - mean_b).squaredNorm();
  const double traces = cov_a.trace() + cov_b.trace();
  r.trace_term = traces - 2.0 * cross_trace(sqrt_a, cov_b);
  if (r.trace_term < 0.0) {
    if (r.trace_term < -kPsdTolerance * std::max(1.0, traces)) {
      throw NumericalError("negative Fréchet trace term " + std::to_string(r.trace_term));
    }
    r.trace_term = 0.0;
  }
  r.value = r.mean_term + r.trace_term;
  return r;
}

FidAvg fid_avg(const ClientSet& clients, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  FidAvg out;
  for (const auto& c : clients) {
    out.per_client.push_back(frechet_distance(c.stats->mean, c.stats->cov, mean, cov));
    out.value += c.weight * out.per_client.back().value;
  }
  return out;
}

double barycenter_residual(const ClientSet& clients, const Eigen::MatrixXd& cov) {
  const Eigen::MatrixXd root = psd_sqrt(cov);
  Eigen::MatrixXd mapped = Eigen::MatrixXd::Zero(cov.rows(), cov.cols());
  for (const auto& c : clients) mapped += c.weight * psd_sqrt(root * c.stats->cov * root);
  return (cov - mapped).norm() / cov.norm();
}

BarycenterSolution barycenter(const ClientSet& clients, const BarycenterOptions& options) {
  const auto d = static_cast<Eigen::Index>(clients.dim());
  BarycenterSolution sol;
  sol.mean = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& c : clients) {
    check_psd(c.stats->cov, "client covariance");
    sol.mean += c.weight * c.stats->mean;
    cov += c.weight * c.stats->cov;
  }

  for (int it = 0;; ++it) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (cov + cov.transpose()));
    Eigen::VectorXd w = eig.eigenvalues();
    const double eps = 1e-12 * std::max(cov.trace(), 0.0) / static_cast<double>(d);
    if (w.minCoeff() <= eps) {
      // Singular iterate: shift the spectrum by eps * I.
      w = (w.cwiseMax(0.0).array() + std::max(eps, 1e-300)).matrix();
      cov = eig.eigenvectors() * w.asDiagonal() * eig.eigenvectors().transpose();
    }
    const Eigen::MatrixXd& v = eig.eigenvectors();
    const Eigen::MatrixXd root = v * w.cwiseSqrt().asDiagonal() * v.transpose();
    const Eigen::MatrixXd inv_root = v * w.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();

    Eigen::MatrixXd mapped = Eigen::MatrixXd::Zero(d, d);
    for (const auto& c : clients) {
      Eigen::MatrixXd m = root * c.stats->cov * root;
      mapped += c.weight * sqrt_from(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(0.5 * (m + m.transpose())));
    }
    const double residual = (cov - mapped).norm() / cov.norm();
    sol.residual_history.push_back(residual);
    if (residual <= options.tol) {
      sol.cov = 0.5 * (cov + cov.transpose());
      sol.iterations = it;
      sol.residual = residual;
      return sol;
    }
    if (it >= options.max_iter) {
      throw ConvergenceError("barycenter did not converge in " + std::to_string(options.max_iter) +
                                 " iterations (residual " + std::to_string(residual) + ")",
                             cov, residual, it);
    }
    cov = inv_root * mapped * mapped * inv_root;
    cov = 0.5 * (cov + cov.transpose());
  }
}

Eigen::MatrixXd commuting_barycenter(const ClientSet& clients) {
  const auto d = static_cast<Eigen::Index>(clients.dim());
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(d, d);
  for (const auto& c : clients) s += c.weight * psd_sqrt(c.stats->cov);
  return s * s;
}

FidAvgDecomposition fid_avg_decomposition(const ClientSet& clients, const Eigen::VectorXd& mean,
                                          const Eigen::MatrixXd& cov, const BarycenterOptions& options) {
  FidAvgDecomposition out;
  out.barycenter = barycenter(clients, options);
  out.barycenter_part = frechet_distance(out.barycenter.mean, out.barycenter.cov, mean, cov).value;
  for (const auto& c : clients) {
    out.const_part += c.weight *
                      frechet_distance(out.barycenter.mean, out.barycenter.cov, c.stats->mean, c.stats->cov).value;
  }
  return out;
}

}  // namespace fedeval
