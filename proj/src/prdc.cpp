#include "fedeval/prdc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace fedeval {

namespace {

// Pairwise Euclidean distances, rows of a against rows of b.
Eigen::MatrixXd distances(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  if (a.cols() != b.cols()) throw PreconditionError("dimension mismatch");
  Eigen::MatrixXd out(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = (a.data().row(i) - b.data().row(j)).norm();
  }
  return out;
}

std::vector<double> radii_from(const Eigen::MatrixXd& self_dist, std::size_t k) {
  const auto n = static_cast<std::size_t>(self_dist.rows());
  std::vector<double> radii(n);
  std::vector<double> row;
  for (std::size_t i = 0; i < n; ++i) {
    row.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) row.push_back(self_dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k - 1), row.end());
    radii[i] = row[k - 1];
  }
  return radii;
}

void require_neighbors(std::size_t n, std::size_t k, const char* what) {
  if (k < 1) throw PreconditionError("k must be >= 1");
  if (n <= k) {
    throw PreconditionError(std::string(what) + " needs more than k=" + std::to_string(k) + " samples (got " +
                            std::to_string(n) + ")");
  }
}

}  // namespace

std::vector<double> knn_radii(const EmbeddingMatrix& x, std::size_t k) {
  require_neighbors(x.rows(), k, "k-NN radius");
  return radii_from(distances(x, x), k);
}

PrdcResult prdc_scores(const EmbeddingMatrix& ref, const EmbeddingMatrix& gen, std::size_t k) {
  require_neighbors(ref.rows(), k, "reference set");
  require_neighbors(gen.rows(), k, "generated set");
  const auto ref_radii = knn_radii(ref, k);
  const auto gen_radii = knn_radii(gen, k);
  const Eigen::MatrixXd cross = distances(ref, gen);  // ref x gen
  const auto n = cross.rows();
  const auto m = cross.cols();

  std::size_t precise = 0;
  std::size_t memberships = 0;
  for (Eigen::Index j = 0; j < m; ++j) {
    std::size_t inside = 0;
    for (Eigen::Index i = 0; i < n; ++i) inside += cross(i, j) <= ref_radii[static_cast<std::size_t>(i)];
    memberships += inside;
    precise += inside > 0;
  }
  std::size_t recalled = 0;
  std::size_t covered = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    bool in_gen_ball = false;
    for (Eigen::Index j = 0; j < m && !in_gen_ball; ++j) in_gen_ball = cross(i, j) <= gen_radii[static_cast<std::size_t>(j)];
    recalled += in_gen_ball;
    covered += cross.row(i).minCoeff() <= ref_radii[static_cast<std::size_t>(i)];
  }
  PrdcResult r;
  r.precision = static_cast<double>(precise) / static_cast<double>(m);
  r.recall = static_cast<double>(recalled) / static_cast<double>(n);
  r.density = static_cast<double>(memberships) / (static_cast<double>(k) * static_cast<double>(m));
  r.coverage = static_cast<double>(covered) / static_cast<double>(n);
  return r;
}

PrdcAggregate prdc_aggregate(const ClientSet& clients, const EmbeddingMatrix& gen, std::size_t k) {
  PrdcAggregate out;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    const PrdcResult r = prdc_scores(clients.embeddings(i), gen, k);
    const double w = clients[i].weight;
    out.avg.precision += w * r.precision;
    out.avg.recall += w * r.recall;
    out.avg.density += w * r.density;
    out.avg.coverage += w * r.coverage;
    out.per_client.push_back(r);
  }
  out.all = prdc_scores(clients.pooled_embeddings(), gen, k);
  return out;
}

}  // namespace fedeval
