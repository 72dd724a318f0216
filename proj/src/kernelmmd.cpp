#include "fedeval/kernelmmd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fedeval {

namespace {

constexpr Eigen::Index kChunkRows = 256;

void check_dims(std::size_t a, std::size_t b) {
  if (a != b) throw PreconditionError("dimension mismatch in kernel evaluation");
}

void check_size(const EmbeddingMatrix& m) {
  if (m.rows() > kMaxKernelSamples) {
    throw PreconditionError("kernel scores are capped at " + std::to_string(kMaxKernelSamples) + " samples");
  }
}

double int_pow(double x, int p) {
  double r = 1.0;
  for (int i = 0; i < p; ++i) r *= x;
  return r;
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

void KernelSpec::validate() const {
  if (kind == KernelKind::polynomial) {
    if (degree < 1) throw PreconditionError("polynomial degree must be >= 1");
    if (scale && !(*scale > 0.0)) throw PreconditionError("polynomial scale must be > 0");
    if (!std::isfinite(offset)) throw PreconditionError("polynomial offset must be finite");
  } else if (sigma && !(*sigma > 0.0)) {
    throw PreconditionError("rbf bandwidth must be > 0");
  }
}

ResolvedKernel ResolvedKernel::resolve(const KernelSpec& spec, std::size_t dim) {
  spec.validate();
  if (dim == 0) throw PreconditionError("kernel dimension must be positive");
  const double d = static_cast<double>(dim);
  return {spec.kind, spec.degree, spec.scale.value_or(1.0 / d), spec.offset,
          spec.sigma.value_or(std::sqrt(d))};
}

double ResolvedKernel::operator()(std::span<const double> x, std::span<const double> y) const {
  check_dims(x.size(), y.size());
  if (kind == KernelKind::polynomial) {
    double dot = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * y[i];
    return int_pow(scale * dot + offset, degree);
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - y[i]) * (x[i] - y[i]);
  return std::exp(-sq / (2.0 * sigma * sigma));
}

double kernel_eval(const KernelSpec& spec, std::span<const double> x, std::span<const double> y) {
  check_dims(x.size(), y.size());
  return ResolvedKernel::resolve(spec, x.size())(x, y);
}

double KernelBlockSum::offdiag_mean() const {
  if (rows < 2) throw PreconditionError("ustat requires >= 2 samples");
  return (total - diagonal) / (static_cast<double>(rows) * static_cast<double>(rows - 1));
}

KernelBlockSum kernel_block_sum(const ResolvedKernel& kernel, const EmbeddingMatrix& a,
                                const EmbeddingMatrix& b, bool same_sample) {
  check_dims(a.cols(), b.cols());
  check_size(a);
  check_size(b);
  if (same_sample && a.rows() != b.rows()) throw PreconditionError("same-sample block must be square");
  const RowMatrix& x = a.data();
  const RowMatrix& y = b.data();

  Eigen::VectorXd y_sq;
  if (kernel.kind == KernelKind::rbf) y_sq = y.rowwise().squaredNorm();
  const double inv_two_sigma_sq = 1.0 / (2.0 * kernel.sigma * kernel.sigma);

  KernelBlockSum out{0.0, 0.0, a.rows(), b.rows()};
  Eigen::MatrixXd gram;
  for (Eigen::Index start = 0; start < x.rows(); start += kChunkRows) {
    const Eigen::Index len = std::min(kChunkRows, x.rows() - start);
    gram.noalias() = x.middleRows(start, len) * y.transpose();
    if (kernel.kind == KernelKind::polynomial) {
      gram = (kernel.scale * gram.array() + kernel.offset).matrix();
      const Eigen::ArrayXXd base = gram.array();
      for (int p = 1; p < kernel.degree; ++p) gram.array() *= base;
    } else {
      const Eigen::VectorXd x_sq = x.middleRows(start, len).rowwise().squaredNorm();
      Eigen::ArrayXXd sq = (-2.0 * gram).array();
      sq.colwise() += x_sq.array();
      sq.rowwise() += y_sq.transpose().array();
      gram = (-(sq.max(0.0)) * inv_two_sigma_sq).exp().matrix();
    }
    // Row-major accumulation keeps the reduction order fixed.
    for (Eigen::Index r = 0; r < len; ++r) {
      double row_sum = 0.0;
      for (Eigen::Index c = 0; c < gram.cols(); ++c) row_sum += gram(r, c);
      out.total += row_sum;
      if (same_sample) out.diagonal += gram(r, start + r);
    }
  }
  return out;
}

MmdResult mmd2_from_blocks(const KernelBlockSum& ref_ref, const KernelBlockSum& gen_gen,
                           const KernelBlockSum& ref_gen, MmdEstimator estimator) {
  MmdResult r;
  r.estimator = estimator;
  r.cross = ref_gen.mean();
  if (estimator == MmdEstimator::ustat) {
    if (ref_ref.rows < 2 || gen_gen.rows < 2) throw PreconditionError("ustat requires >= 2 samples");
    r.within_ref = ref_ref.offdiag_mean();
    r.within_gen = gen_gen.offdiag_mean();
    r.value = r.within_ref + r.within_gen - 2.0 * r.cross;
    return r;
  }
  r.within_ref = ref_ref.mean();
  r.within_gen = gen_gen.mean();
  r.value = r.within_ref + r.within_gen - 2.0 * r.cross;
  if (r.value < 0.0) {
    if (r.value < -1e-10 * std::max(1.0, r.within_ref + r.within_gen)) {
      throw NumericalError("negative plug-in MMD " + std::to_string(r.value) + "; kernel is not PSD");
    }
    r.value = 0.0;
  }
  return r;
}

MmdResult mmd2(const KernelSpec& spec, const EmbeddingMatrix& ref, const EmbeddingMatrix& gen,
               MmdEstimator estimator) {
  check_dims(ref.cols(), gen.cols());
  if (estimator == MmdEstimator::ustat && (ref.rows() < 2 || gen.rows() < 2)) {
    throw PreconditionError("ustat requires >= 2 samples");
  }
  const auto kernel = ResolvedKernel::resolve(spec, ref.cols());
  return mmd2_from_blocks(kernel_block_sum(kernel, ref, ref, true), kernel_block_sum(kernel, gen, gen, true),
                          kernel_block_sum(kernel, ref, gen, false), estimator);
}

KidAvg kid_avg(const ClientSet& clients, const EmbeddingMatrix& gen, const KernelSpec& spec,
               MmdEstimator estimator) {
  check_dims(clients.dim(), gen.cols());
  const auto kernel = ResolvedKernel::resolve(spec, gen.cols());
  if (estimator == MmdEstimator::ustat && gen.rows() < 2) throw PreconditionError("ustat requires >= 2 samples");
  const auto gen_gen = kernel_block_sum(kernel, gen, gen, true);
  KidAvg out;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    const auto& x = clients.embeddings(i);
    if (estimator == MmdEstimator::ustat && x.rows() < 2) throw PreconditionError("ustat requires >= 2 samples");
    out.per_client.push_back(mmd2_from_blocks(kernel_block_sum(kernel, x, x, true), gen_gen,
                                              kernel_block_sum(kernel, x, gen, false), estimator));
    out.value += clients[i].weight * out.per_client.back().value;
  }
  return out;
}

namespace {
// Matrix of mean kernel values between client samples.
Eigen::MatrixXd client_block_means(const ResolvedKernel& kernel, const ClientSet& clients) {
  const auto k = static_cast<Eigen::Index>(clients.size());
  Eigen::MatrixXd means(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i; j < k; ++j) {
      const auto& a = clients.embeddings(static_cast<std::size_t>(i));
      const auto& b = clients.embeddings(static_cast<std::size_t>(j));
      means(i, j) = kernel_block_sum(kernel, a, b, i == j).mean();
      means(j, i) = means(i, j);
    }
  }
  return means;
}

Eigen::VectorXd weight_vector(const ClientSet& clients) {
  const auto w = clients.weights();
  return Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
}
}  // namespace

double kid_all(const ClientSet& clients, const EmbeddingMatrix& gen, const KernelSpec& spec,
               MmdEstimator estimator) {
  check_dims(clients.dim(), gen.cols());
  if (estimator == MmdEstimator::ustat) {
    if (!clients.weights_proportional()) {
      throw PreconditionError("ustat kid_all requires weights proportional to client sample counts");
    }
    return mmd2(spec, clients.pooled_embeddings(), gen, MmdEstimator::ustat).value;
  }
  const auto kernel = ResolvedKernel::resolve(spec, gen.cols());
  const Eigen::MatrixXd means = client_block_means(kernel, clients);
  const Eigen::VectorXd lambda = weight_vector(clients);
  double cross = 0.0;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    cross += lambda(static_cast<Eigen::Index>(i)) * kernel_block_sum(kernel, clients.embeddings(i), gen, false).mean();
  }
  const double within_ref = lambda.dot(means * lambda);
  const double within_gen = kernel_block_sum(kernel, gen, gen, true).mean();
  const double value = within_ref + within_gen - 2.0 * cross;
  if (value < -1e-10 * std::max(1.0, within_ref + within_gen)) {
    throw NumericalError("negative plug-in MMD; kernel is not PSD");
  }
  return std::max(value, 0.0);
}

double kid_gap(const ClientSet& clients, const KernelSpec& spec) {
  const auto kernel = ResolvedKernel::resolve(spec, clients.dim());
  const Eigen::MatrixXd means = client_block_means(kernel, clients);
  const Eigen::VectorXd lambda = weight_vector(clients);
  const Eigen::VectorXd mixed = means * lambda;  // <m_i, m_mix>
  const double mix_sq = lambda.dot(mixed);       // |m_mix|^2
  double gap = 0.0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    const double dist = mix_sq + means(i, i) - 2.0 * mixed(i);
    gap += lambda(i) * std::max(dist, 0.0);
  }
  return gap;
}

namespace {
// Third-moment tensor E[x_i x_j x_k] of N(mu, C), flattened.
Eigen::VectorXd third_moment(const GaussianModel& g) {
  const auto d = g.mean.size();
  Eigen::VectorXd t(d * d * d);
  const auto& m = g.mean;
  const auto& c = g.cov;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index k = 0; k < d; ++k)
        t((i * d + j) * d + k) = m(i) * m(j) * m(k) + m(i) * c(j, k) + m(j) * c(i, k) + m(k) * c(i, j);
  return t;
}
}  // namespace

double expected_kernel(const KernelSpec& spec, const GaussianModel& a, const GaussianModel& b) {
  const auto d = a.mean.size();
  if (b.mean.size() != d || a.cov.rows() != d || b.cov.rows() != d) {
    throw PreconditionError("dimension mismatch in expected kernel");
  }
  const auto kernel = ResolvedKernel::resolve(spec, static_cast<std::size_t>(d));
  if (kernel.kind == KernelKind::rbf) {
    const double s2 = kernel.sigma * kernel.sigma;
    const Eigen::MatrixXd sum = a.cov + b.cov;
    const Eigen::MatrixXd shifted = sum + s2 * Eigen::MatrixXd::Identity(d, d);
    const Eigen::LLT<Eigen::MatrixXd> llt(shifted);
    if (llt.info() != Eigen::Success) throw NumericalError("covariance sum is not PSD");
    const Eigen::VectorXd delta = a.mean - b.mean;
    const double quad = delta.dot(llt.solve(delta));
    // det(I + sum / s2) = det(shifted) / s2^d
    const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum() -
                           static_cast<double>(d) * std::log(s2);
    return std::exp(-0.5 * log_det - 0.5 * quad);
  }
  if (kernel.degree > 3) throw PreconditionError("closed-form polynomial kernel means support degree <= 3");
  double moments[4] = {1.0, a.mean.dot(b.mean), 0.0, 0.0};
  const Eigen::MatrixXd sa = a.cov + a.mean * a.mean.transpose();
  const Eigen::MatrixXd sb = b.cov + b.mean * b.mean.transpose();
  moments[2] = (sa.array() * sb.array()).sum();
  if (kernel.degree == 3) moments[3] = third_moment(a).dot(third_moment(b));
  double out = 0.0;
  for (int m = 0; m <= kernel.degree; ++m) {
    out += binomial(kernel.degree, m) * int_pow(kernel.scale, m) *
           int_pow(kernel.offset, kernel.degree - m) * moments[m];
  }
  return out;
}

double analytic_mmd2(const KernelSpec& spec, const GaussianMixture& a, const GaussianMixture& b) {
  auto cross = [&](const GaussianMixture& p, const GaussianMixture& q) {
    double s = 0.0;
    for (const auto& [wp, gp] : p)
      for (const auto& [wq, gq] : q) s += wp * wq * expected_kernel(spec, gp, gq);
    return s;
  };
  return cross(a, a) + cross(b, b) - 2.0 * cross(a, b);
}

}  // namespace fedeval
