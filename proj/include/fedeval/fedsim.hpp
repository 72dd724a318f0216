#pragma once

// In-process simulation of federated score evaluation: a deterministic
// message queue with byte accounting, plus synthetic scenario generators
// and ranking analytics built on top of the score library.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "fedeval/kernelmmd.hpp"
#include "fedeval/statkit.hpp"

namespace fedeval {

enum class MessageKind { gen_ref_broadcast, score_reply, moments_reply, raw_data_reply, kernel_block_reply };
enum class AggregationMode { scores, moments, raw, kernel_blocks };
enum class Metric { fid_avg, fid_all, kid_avg, kid_all };

std::string_view to_string(MessageKind kind);
std::string_view to_string(AggregationMode mode);
std::string_view to_string(Metric metric);
AggregationMode parse_aggregation_mode(std::string_view text);
Metric parse_metric(std::string_view text);

inline constexpr std::string_view kServerId = "server";
inline constexpr std::string_view kBroadcastId = "*";
inline constexpr std::size_t kMessageHeaderBytes = 16;

struct Message {
  std::string from;
  std::string to;
  MessageKind kind = MessageKind::gen_ref_broadcast;
  std::vector<double> body;  // every real that crosses the wire
  std::size_t payload_bytes = kMessageHeaderBytes;

  static Message make(std::string from, std::string to, MessageKind kind, std::vector<double> body);
};

struct ProtocolTrace {
  AggregationMode mode = AggregationMode::raw;
  std::vector<Message> messages;

  std::size_t total_bytes() const;
  std::size_t count(MessageKind kind) const;
};

/// True when `mode` can produce `metric` exactly.
bool supports(AggregationMode mode, Metric metric);

struct ScoreReport {
  std::optional<double> fid_avg;
  std::optional<double> fid_all;
  std::optional<double> kid_avg;
  std::optional<double> kid_all;
};

/// A generator is known either by samples or by its moments.
using Generator = std::variant<EmbeddingMatrix, GaussianStats>;

struct RoundOptions {
  KernelSpec kernel = KernelSpec::polynomial();
  MmdEstimator estimator = MmdEstimator::vstat;
};

struct RoundResult {
  ScoreReport scores;
  ProtocolTrace trace;
};

/// One evaluation round. The server broadcasts the requested metric set
/// (the generator itself is treated as public), clients reply in id order
/// with whatever `mode` allows them to send, and the server aggregates.
/// Throws CapabilityError for a metric the mode cannot produce.
RoundResult run_round(const ClientSet& clients, const Generator& generator, AggregationMode mode,
                      const std::vector<Metric>& metrics, const RoundOptions& options = {});

// ---------------------------------------------------------------------------
// Scenarios

struct GaussianClientSpec {
  std::string id;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::size_t n = 0;
  std::uint64_t seed = 0;
};

/// Samples every client from its own seed; weights are n_i / n.
ClientSet make_clients(const std::vector<GaussianClientSpec>& specs);

struct ToySweepRow {
  double var_x = 0.0;
  double fd_avg = 0.0;
  double fd_all = 0.0;
  double fd_avg_const = 0.0;  // sum_i l_i FD(barycenter, client_i)
  double kd_avg = 0.0;
  double kd_all = 0.0;
  double fd_avg_sampled = 0.0;
  double fd_all_sampled = 0.0;
  double kd_avg_sampled = 0.0;
  double kd_all_sampled = 0.0;
};

struct ToySweepOptions {
  KernelSpec kernel = KernelSpec::polynomial();
  /// Kernel columns use the first min(n, kd_samples) rows of each dataset.
  std::size_t kd_samples = 1000;
};

/// Two clients N((+-1, 0), I) with weight 1/2 against generators
/// N(0, diag(v, 1)). Analytic columns come from population moments, sampled
/// columns from n_per_client draws per client and per generator (the
/// generator draws share one standard-normal sample across the grid).
std::vector<ToySweepRow> toy_mixture_sweep(const std::vector<double>& var_grid, std::size_t n_per_client,
                                           std::uint64_t seed, const ToySweepOptions& options = {});

struct ScoreRow {
  double fid_avg = 0.0;
  double fid_all = 0.0;
  double kid_avg = 0.0;
  double kid_all = 0.0;
};

struct VarianceSweepOptions {
  std::size_t dim = 4;
  std::size_t n_per_client = 50;
  std::size_t n_gen = 500;
  KernelSpec kernel = KernelSpec::polynomial();
};

struct VarianceSweepRow {
  double v = 0.0;
  ScoreRow scores;
};

/// Clients N(m_i, w I) with m_i ~ N(0, b I); generators N(0, (v + w) I).
std::vector<VarianceSweepRow> variance_limited_sweep(std::size_t k_clients, double within_var, double between_var,
                                                     const std::vector<double>& generator_var_grid,
                                                     std::uint64_t seed, const VarianceSweepOptions& options = {});

struct CollapseOptions {
  KernelSpec kernel = KernelSpec::rbf();
  double detection_threshold = 2.0;
};

struct CollapseTimeline {
  std::vector<ScoreRow> steps;
  std::size_t collapse_step = 0;
  ScoreRow ratio;     // score(t*) / score(t* - 1)
  ScoreRow detected;  // 1 where the ratio exceeds the threshold, else 0
};

CollapseTimeline mode_collapse_timeline(const ClientSet& clients, const std::vector<EmbeddingMatrix>& timeline,
                                        std::size_t collapse_step, const CollapseOptions& options = {});

struct CollapseScenario {
  ClientSet clients;
  std::vector<EmbeddingMatrix> timeline;
  std::size_t collapse_step = 0;
};

/// A reproducible batch of rounds: every generator is sampled from its spec
/// and evaluated against the same sampled clients.
struct Scenario {
  std::string name;
  std::vector<GaussianClientSpec> clients;
  std::vector<GaussianClientSpec> generators;
  std::vector<Metric> metrics;
  AggregationMode mode = AggregationMode::raw;
  RoundOptions options;
};

struct ScenarioRound {
  std::string generator;
  RoundResult result;
};

std::vector<ScenarioRound> run_scenario(const Scenario& scenario);

/// Ten far-apart unit-covariance Gaussian clients in eight dimensions; the
/// generator matches the pooled moments for the first steps and collapses
/// onto a single point (with 1e-6 jitter) from `collapse_step` on.
CollapseScenario builtin_collapse_scenario(std::uint64_t seed, std::size_t steps = 6, std::size_t collapse_step = 3);

// ---------------------------------------------------------------------------
// Rankings

using ScoreTable = std::map<std::string, double>;

struct RankingComparison {
  double kendall_tau = 0.0;  // tau-b; NaN when either table is constant
  std::size_t concordant = 0;
  std::size_t discordant = 0;
  std::size_t ties_a = 0;
  std::size_t ties_b = 0;
  std::string argmin_a;
  std::string argmin_b;
  double spread_a = 0.0;  // max - min
  double spread_b = 0.0;
};

inline constexpr double kTieTolerance = 1e-12;

RankingComparison compare_rankings(const ScoreTable& a, const ScoreTable& b);

}  // namespace fedeval
