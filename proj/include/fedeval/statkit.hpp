#pragma once

// Embedding containers, moment estimation, mixture pooling and Gaussian
// log-likelihood scoring.

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fedeval/error.hpp"

namespace fedeval {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// n x d matrix of per-sample embeddings. Always non-empty and finite.
class EmbeddingMatrix {
 public:
  explicit EmbeddingMatrix(RowMatrix data);
  EmbeddingMatrix(std::size_t rows, std::size_t cols, std::span<const double> row_major);

  std::size_t rows() const noexcept { return static_cast<std::size_t>(data_.rows()); }
  std::size_t cols() const noexcept { return static_cast<std::size_t>(data_.cols()); }
  const RowMatrix& data() const noexcept { return data_; }
  auto row(std::size_t i) const { return data_.row(static_cast<Eigen::Index>(i)); }

  /// Rows of `parts` stacked in order.
  static EmbeddingMatrix concat(std::span<const EmbeddingMatrix* const> parts);

  friend bool operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
    return a.data_.rows() == b.data_.rows() && a.data_.cols() == b.data_.cols() &&
           a.data_ == b.data_;
  }

 private:
  RowMatrix data_;
};

enum class EmbeddingFormat { csv, binary };
enum class BinaryDtype : std::uint8_t { f32 = 0x00, f64 = 0x01 };

EmbeddingMatrix parse_csv(std::string_view text);
std::string format_csv(const EmbeddingMatrix& m);

/// Binary layout: "FEVB", version 0x01, dtype byte, u32 rows, u32 cols
/// (little endian), row-major payload.
EmbeddingMatrix decode_binary(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_binary(const EmbeddingMatrix& m, BinaryDtype dtype);
BinaryDtype binary_dtype(std::span<const std::uint8_t> bytes);

EmbeddingMatrix ingest(const std::filesystem::path& path, EmbeddingFormat format);
/// Picks the format from the extension: ".csv" is text, anything else binary.
EmbeddingMatrix ingest(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m,
                      EmbeddingFormat format, BinaryDtype dtype = BinaryDtype::f64);

enum class Estimator { population, unbiased };

/// A Gaussian surrogate: mean and covariance only.
struct GaussianModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Sufficient statistics of a sample: count, mean and covariance.
struct GaussianStats {
  std::size_t n = 0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  /// S = C + mu mu^T
  Eigen::MatrixXd second_moment() const { return cov + mean * mean.transpose(); }
  GaussianModel model() const { return {mean, cov}; }
};

template <class T>
concept MeanCovariance = requires(const T& t) {
  { t.mean } -> std::convertible_to<Eigen::VectorXd>;
  { t.cov } -> std::convertible_to<Eigen::MatrixXd>;
};

GaussianStats moments(const EmbeddingMatrix& x, Estimator estimator = Estimator::population);

/// Draws `n` samples from N(mean, cov). `cov` may be singular.
EmbeddingMatrix sample_gaussian(const GaussianModel& model, std::size_t n, std::mt19937_64& rng);

struct Client {
  std::string id;
  double weight = 0.0;
  std::optional<EmbeddingMatrix> data;
  std::optional<GaussianStats> stats;
};

/// Clients sorted by id with weights summing to one. A client that only
/// carries raw data gets population moments filled in on construction.
class ClientSet {
 public:
  static constexpr double kWeightTolerance = 1e-12;

  explicit ClientSet(std::vector<Client> clients);

  /// Weights default to n_i / n.
  static ClientSet from_embeddings(std::vector<std::pair<std::string, EmbeddingMatrix>> data);
  static ClientSet from_stats(std::vector<std::pair<std::string, GaussianStats>> stats);

  std::size_t size() const noexcept { return clients_.size(); }
  const Client& operator[](std::size_t i) const { return clients_[i]; }
  auto begin() const noexcept { return clients_.begin(); }
  auto end() const noexcept { return clients_.end(); }

  std::size_t dim() const noexcept { return dim_; }
  bool has_embeddings() const noexcept;
  std::size_t total_samples() const noexcept;
  std::vector<double> weights() const;
  /// True when every lambda_i equals n_i / n to within the weight tolerance.
  bool weights_proportional() const noexcept;

  /// Client embeddings stacked in id order. Requires raw data.
  EmbeddingMatrix pooled_embeddings() const;
  const EmbeddingMatrix& embeddings(std::size_t i) const;

 private:
  std::vector<Client> clients_;
  std::size_t dim_ = 0;
};

/// Moments of the lambda-mixture of the clients:
///   mean = sum_i l_i mu_i,  cov = sum_i l_i (C_i + (mu_i - mean)(mu_i - mean)^T).
GaussianStats pool_moments(const ClientSet& clients);

double log_density(const GaussianModel& model, std::span<const double> x);

struct LogLikelihoodScores {
  std::vector<double> per_client;
  double avg = 0.0;
  double all = 0.0;
};

/// Mean log-density of each client's samples under `model`. `ridge` is added
/// to the model covariance diagonal before factorization.
LogLikelihoodScores log_likelihood_scores(const ClientSet& clients, const GaussianModel& model,
                                          double ridge = 0.0);

}  // namespace fedeval
