#include "fedeval/fedsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <random>
#include <set>

#include "fedeval/frechet.hpp"

namespace fedeval {

std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::gen_ref_broadcast: return "GenRefBroadcast";
    case MessageKind::score_reply: return "ScoreReply";
    case MessageKind::moments_reply: return "MomentsReply";
    case MessageKind::raw_data_reply: return "RawDataReply";
    case MessageKind::kernel_block_reply: return "KernelBlockReply";
  }
  return "?";
}

std::string_view to_string(AggregationMode mode) {
  switch (mode) {
    case AggregationMode::scores: return "scores";
    case AggregationMode::moments: return "moments";
    case AggregationMode::raw: return "raw";
    case AggregationMode::kernel_blocks: return "kernel-blocks";
  }
  return "?";
}

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::fid_avg: return "fid_avg";
    case Metric::fid_all: return "fid_all";
    case Metric::kid_avg: return "kid_avg";
    case Metric::kid_all: return "kid_all";
  }
  return "?";
}

AggregationMode parse_aggregation_mode(std::string_view text) {
  for (auto mode : {AggregationMode::scores, AggregationMode::moments, AggregationMode::raw,
                    AggregationMode::kernel_blocks}) {
    if (text == to_string(mode)) return mode;
  }
  throw FormatError("unknown aggregation mode '" + std::string(text) + "'");
}

Metric parse_metric(std::string_view text) {
  for (auto metric : {Metric::fid_avg, Metric::fid_all, Metric::kid_avg, Metric::kid_all}) {
    if (text == to_string(metric)) return metric;
  }
  throw FormatError("unknown metric '" + std::string(text) + "'");
}

Message Message::make(std::string from, std::string to, MessageKind kind, std::vector<double> body) {
  Message m;
  m.from = std::move(from);
  m.to = std::move(to);
  m.kind = kind;
  m.payload_bytes = body.size() * sizeof(double) + kMessageHeaderBytes;
  m.body = std::move(body);
  return m;
}

std::size_t ProtocolTrace::total_bytes() const {
  std::size_t total = 0;
  for (const auto& m : messages) total += m.payload_bytes;
  return total;
}

std::size_t ProtocolTrace::count(MessageKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(messages.begin(), messages.end(), [kind](const Message& m) { return m.kind == kind; }));
}

bool supports(AggregationMode mode, Metric metric) {
  switch (mode) {
    case AggregationMode::scores: return metric == Metric::fid_avg || metric == Metric::kid_avg;
    case AggregationMode::moments: return metric == Metric::fid_avg || metric == Metric::fid_all;
    case AggregationMode::raw: return true;
    case AggregationMode::kernel_blocks: return metric == Metric::kid_avg || metric == Metric::kid_all;
  }
  return false;
}

namespace {

// Deterministic in-process transport: every message is recorded in the trace
// and delivered to its recipient's inbox in send order.
class Network {
 public:
  explicit Network(ProtocolTrace& trace) : trace_(trace) {}

  void send(Message m) {
    inboxes_[m.to].push_back(trace_.messages.size());
    trace_.messages.push_back(std::move(m));
  }

  std::vector<const Message*> receive(const std::string& node) {
    std::vector<const Message*> out;
    for (auto index : inboxes_[node]) out.push_back(&trace_.messages[index]);
    inboxes_[node].clear();
    return out;
  }

 private:
  ProtocolTrace& trace_;
  std::map<std::string, std::deque<std::size_t>> inboxes_;
};

std::vector<double> flatten(const RowMatrix& m) { return {m.data(), m.data() + m.size()}; }

EmbeddingMatrix unflatten(std::span<const double> body, std::size_t rows, std::size_t cols) {
  return EmbeddingMatrix(rows, cols, body);
}

bool wants(const std::vector<Metric>& metrics, Metric m) {
  return std::find(metrics.begin(), metrics.end(), m) != metrics.end();
}

const EmbeddingMatrix& client_data(const Client& c) {
  if (!c.data) throw PreconditionError("client '" + c.id + "' has no raw embeddings");
  return *c.data;
}

double vstat_value(double within_ref, double within_gen, double cross) {
  const double value = within_ref + within_gen - 2.0 * cross;
  if (value < -1e-10 * std::max(1.0, within_ref + within_gen)) {
    throw NumericalError("negative plug-in MMD; kernel is not PSD");
  }
  return std::max(value, 0.0);
}

}  // namespace

RoundResult run_round(const ClientSet& clients, const Generator& generator, AggregationMode mode,
                      const std::vector<Metric>& metrics, const RoundOptions& options) {
  for (auto metric : metrics) {
    if (!supports(mode, metric)) {
      throw CapabilityError(std::string(to_string(mode)) + " mode cannot produce " + std::string(to_string(metric)));
    }
  }
  const bool kernel_scores = wants(metrics, Metric::kid_avg) || wants(metrics, Metric::kid_all);
  const auto* gen_samples = std::get_if<EmbeddingMatrix>(&generator);
  if (kernel_scores && !gen_samples) throw PreconditionError("kernel scores need generator samples");
  const GaussianStats gen_stats =
      gen_samples ? moments(*gen_samples) : std::get<GaussianStats>(generator);
  if (gen_stats.mean.size() != static_cast<Eigen::Index>(clients.dim())) {
    throw PreconditionError("generator dimension does not match the clients");
  }
  const std::string server(kServerId);
  const auto d = clients.dim();

  RoundResult result;
  result.trace.mode = mode;
  Network net(result.trace);

  std::vector<double> requested;
  for (auto metric : metrics) requested.push_back(static_cast<double>(metric));
  net.send(Message::make(server, std::string(kBroadcastId), MessageKind::gen_ref_broadcast, requested));

  // Client side, in id order.
  if (mode == AggregationMode::kernel_blocks && wants(metrics, Metric::kid_all)) {
    // Cross-client blocks need one party to see the other's raw samples.
    for (std::size_t i = 0; i < clients.size(); ++i) {
      for (std::size_t j = i + 1; j < clients.size(); ++j) {
        net.send(Message::make(clients[j].id, clients[i].id, MessageKind::raw_data_reply,
                               flatten(client_data(clients[j]).data())));
      }
    }
  }
  std::optional<ResolvedKernel> kernel;
  if (kernel_scores) kernel = ResolvedKernel::resolve(options.kernel, d);
  for (std::size_t i = 0; i < clients.size(); ++i) {
    const Client& c = clients[i];
    std::vector<double> body;
    switch (mode) {
      case AggregationMode::scores:
        for (auto metric : metrics) {
          if (metric == Metric::fid_avg) body.push_back(frechet_distance(*c.stats, gen_stats).value);
          if (metric == Metric::kid_avg) {
            body.push_back(mmd2(options.kernel, client_data(c), *gen_samples, options.estimator).value);
          }
        }
        net.send(Message::make(c.id, server, MessageKind::score_reply, std::move(body)));
        break;
      case AggregationMode::moments: {
        body.push_back(static_cast<double>(c.stats->n));
        body.insert(body.end(), c.stats->mean.data(), c.stats->mean.data() + c.stats->mean.size());
        const Eigen::MatrixXd s = c.stats->second_moment();
        body.insert(body.end(), s.data(), s.data() + s.size());
        net.send(Message::make(c.id, server, MessageKind::moments_reply, std::move(body)));
        break;
      }
      case AggregationMode::raw:
        net.send(Message::make(c.id, server, MessageKind::raw_data_reply, flatten(client_data(c).data())));
        break;
      case AggregationMode::kernel_blocks: {
        const auto& x = client_data(c);
        if (options.estimator == MmdEstimator::ustat && x.rows() < 2) {
          throw PreconditionError("ustat requires >= 2 samples");
        }
        const auto within = kernel_block_sum(*kernel, x, x, true);
        const auto cross = kernel_block_sum(*kernel, x, *gen_samples, false);
        body = {static_cast<double>(x.rows()), within.total, within.diagonal, cross.total};
        for (const Message* m : net.receive(c.id)) {
          const auto rows = m->body.size() / d;
          body.push_back(kernel_block_sum(*kernel, x, unflatten(m->body, rows, d), false).total);
        }
        net.send(Message::make(c.id, server, MessageKind::kernel_block_reply, std::move(body)));
        break;
      }
    }
  }

  // Server side: aggregate what arrived.
  const auto inbox = net.receive(server);
  const std::vector<double> lambda = clients.weights();
  ScoreReport& out = result.scores;
  switch (mode) {
    case AggregationMode::scores: {
      for (std::size_t slot = 0; slot < metrics.size(); ++slot) {
        double avg = 0.0;
        for (std::size_t i = 0; i < inbox.size(); ++i) avg += lambda[i] * inbox[i]->body[slot];
        (metrics[slot] == Metric::fid_avg ? out.fid_avg : out.kid_avg) = avg;
      }
      break;
    }
    case AggregationMode::moments: {
      std::vector<Client> received;
      for (std::size_t i = 0; i < inbox.size(); ++i) {
        const auto& body = inbox[i]->body;
        const auto dim = static_cast<Eigen::Index>(d);
        GaussianStats s;
        s.n = static_cast<std::size_t>(body[0]);
        s.mean = Eigen::Map<const Eigen::VectorXd>(body.data() + 1, dim);
        const Eigen::Map<const Eigen::MatrixXd> second(body.data() + 1 + d, dim, dim);
        s.cov = second - s.mean * s.mean.transpose();
        received.push_back({inbox[i]->from, lambda[i], std::nullopt, std::move(s)});
      }
      const ClientSet set(std::move(received));
      if (wants(metrics, Metric::fid_avg)) out.fid_avg = fid_avg(set, gen_stats).value;
      if (wants(metrics, Metric::fid_all)) out.fid_all = fid_all(set, gen_stats).value;
      break;
    }
    case AggregationMode::raw: {
      std::vector<Client> received;
      for (std::size_t i = 0; i < inbox.size(); ++i) {
        const auto& body = inbox[i]->body;
        received.push_back({inbox[i]->from, lambda[i], unflatten(body, body.size() / d, d), std::nullopt});
      }
      const ClientSet set(std::move(received));
      if (wants(metrics, Metric::fid_avg)) out.fid_avg = fid_avg(set, gen_stats).value;
      if (wants(metrics, Metric::fid_all)) out.fid_all = fid_all(set, gen_stats).value;
      if (wants(metrics, Metric::kid_avg)) {
        out.kid_avg = kid_avg(set, *gen_samples, options.kernel, options.estimator).value;
      }
      if (wants(metrics, Metric::kid_all)) {
        out.kid_all = kid_all(set, *gen_samples, options.kernel, options.estimator);
      }
      break;
    }
    case AggregationMode::kernel_blocks: {
      if (options.estimator == MmdEstimator::ustat && gen_samples->rows() < 2) {
        throw PreconditionError("ustat requires >= 2 samples");
      }
      const auto gen_gen = kernel_block_sum(*kernel, *gen_samples, *gen_samples, true);
      const auto k = inbox.size();
      const auto ng = gen_samples->rows();
      std::vector<KernelBlockSum> within(k), cross(k);
      for (std::size_t i = 0; i < k; ++i) {
        const auto& b = inbox[i]->body;
        const auto n = static_cast<std::size_t>(b[0]);
        within[i] = {b[1], b[2], n, n};
        cross[i] = {b[3], 0.0, n, ng};
      }
      if (wants(metrics, Metric::kid_avg)) {
        double avg = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
          avg += lambda[i] * mmd2_from_blocks(within[i], gen_gen, cross[i], options.estimator).value;
        }
        out.kid_avg = avg;
      }
      if (wants(metrics, Metric::kid_all)) {
        const auto size = static_cast<Eigen::Index>(k);
        Eigen::MatrixXd means(size, size);
        for (std::size_t i = 0; i < k; ++i) {
          const auto& b = inbox[i]->body;
          means(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = within[i].mean();
          for (std::size_t j = i + 1; j < k; ++j) {
            const double m = b[4 + (j - i - 1)] / (static_cast<double>(within[i].rows) * static_cast<double>(within[j].rows));
            means(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m;
            means(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = m;
          }
        }
        if (options.estimator == MmdEstimator::ustat) {
          if (!clients.weights_proportional()) {
            throw PreconditionError("ustat kid_all requires weights proportional to client sample counts");
          }
          KernelBlockSum pooled{0.0, 0.0, 0, 0};
          KernelBlockSum pooled_cross{0.0, 0.0, 0, ng};
          for (std::size_t i = 0; i < k; ++i) {
            pooled.rows += within[i].rows;
            pooled.diagonal += within[i].diagonal;
            pooled_cross.total += cross[i].total;
            for (std::size_t j = 0; j < k; ++j) {
              pooled.total += means(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) *
                              static_cast<double>(within[i].rows) * static_cast<double>(within[j].rows);
            }
          }
          pooled.cols = pooled.rows;
          pooled_cross.rows = pooled.rows;
          out.kid_all = mmd2_from_blocks(pooled, gen_gen, pooled_cross, MmdEstimator::ustat).value;
        } else {
          const Eigen::Map<const Eigen::VectorXd> l(lambda.data(), size);
          double cross_mean = 0.0;
          for (std::size_t i = 0; i < k; ++i) cross_mean += lambda[i] * cross[i].mean();
          out.kid_all = vstat_value(l.dot(means * l), gen_gen.mean(), cross_mean);
        }
      }
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

ClientSet make_clients(const std::vector<GaussianClientSpec>& specs) {
  std::vector<std::pair<std::string, EmbeddingMatrix>> data;
  for (const auto& s : specs) {
    std::mt19937_64 rng(s.seed);
    data.emplace_back(s.id, sample_gaussian({s.mean, s.cov}, s.n, rng));
  }
  return ClientSet::from_embeddings(std::move(data));
}

namespace {

EmbeddingMatrix head_rows(const EmbeddingMatrix& m, std::size_t rows) {
  rows = std::min(rows, m.rows());
  return EmbeddingMatrix(RowMatrix(m.data().topRows(static_cast<Eigen::Index>(rows))));
}

ClientSet truncated(const ClientSet& clients, std::size_t rows) {
  std::vector<std::pair<std::string, EmbeddingMatrix>> data;
  for (std::size_t i = 0; i < clients.size(); ++i) data.emplace_back(clients[i].id, head_rows(clients.embeddings(i), rows));
  return ClientSet::from_embeddings(std::move(data));
}

ScoreRow all_scores(const ClientSet& clients, const EmbeddingMatrix& gen, const KernelSpec& kernel) {
  const GaussianStats g = moments(gen);
  ScoreRow row;
  row.fid_avg = fid_avg(clients, g).value;
  row.fid_all = fid_all(clients, g).value;
  row.kid_avg = kid_avg(clients, gen, kernel).value;
  row.kid_all = kid_all(clients, gen, kernel);
  return row;
}

}  // namespace

std::vector<ToySweepRow> toy_mixture_sweep(const std::vector<double>& var_grid, std::size_t n_per_client,
                                           std::uint64_t seed, const ToySweepOptions& options) {
  if (n_per_client < 2) throw PreconditionError("toy sweep needs at least 2 samples per client");
  for (double v : var_grid) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw PreconditionError("variance grid values must be >= 0");
  }
  options.kernel.validate();
  const Eigen::Vector2d offset(1.0, 0.0);
  const GaussianModel left{-offset, Eigen::Matrix2d::Identity()};
  const GaussianModel right{offset, Eigen::Matrix2d::Identity()};
  const ClientSet population({{"left", 0.5, std::nullopt, GaussianStats{n_per_client, left.mean, left.cov}},
                              {"right", 0.5, std::nullopt, GaussianStats{n_per_client, right.mean, right.cov}}});
  const GaussianMixture mixture{{0.5, left}, {0.5, right}};

  std::mt19937_64 rng(seed);
  const ClientSet sampled = ClientSet::from_embeddings(
      {{"left", sample_gaussian(left, n_per_client, rng)}, {"right", sample_gaussian(right, n_per_client, rng)}});
  const EmbeddingMatrix z = sample_gaussian({Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()}, n_per_client, rng);
  const ClientSet kd_clients = truncated(sampled, options.kd_samples);

  std::vector<ToySweepRow> rows;
  for (double v : var_grid) {
    ToySweepRow r;
    r.var_x = v;
    const GaussianModel g{Eigen::Vector2d::Zero(), Eigen::Vector2d(v, 1.0).asDiagonal()};
    r.fd_avg = fid_avg(population, g).value;
    r.fd_all = fid_all(population, g).value;
    r.fd_avg_const = fid_avg_decomposition(population, g).const_part;
    r.kd_avg = 0.5 * analytic_mmd2(options.kernel, {{1.0, left}}, {{1.0, g}}) +
               0.5 * analytic_mmd2(options.kernel, {{1.0, right}}, {{1.0, g}});
    r.kd_all = analytic_mmd2(options.kernel, mixture, {{1.0, g}});

    RowMatrix scaled = z.data();
    scaled.col(0) *= std::sqrt(v);
    const EmbeddingMatrix gen(std::move(scaled));
    const GaussianStats gs = moments(gen);
    r.fd_avg_sampled = fid_avg(sampled, gs).value;
    r.fd_all_sampled = fid_all(sampled, gs).value;
    const EmbeddingMatrix kd_gen = head_rows(gen, options.kd_samples);
    r.kd_avg_sampled = kid_avg(kd_clients, kd_gen, options.kernel).value;
    r.kd_all_sampled = kid_all(kd_clients, kd_gen, options.kernel);
    rows.push_back(r);
  }
  return rows;
}

std::vector<VarianceSweepRow> variance_limited_sweep(std::size_t k_clients, double within_var, double between_var,
                                                     const std::vector<double>& generator_var_grid,
                                                     std::uint64_t seed, const VarianceSweepOptions& options) {
  if (k_clients < 1) throw PreconditionError("need at least one client");
  if (!(within_var >= 0.0) || !(within_var <= between_var)) {
    throw PreconditionError("variance-limited sweep requires 0 <= withinVar <= betweenVar");
  }
  if (generator_var_grid.empty()) throw PreconditionError("generator variance grid is empty");
  for (double v : generator_var_grid) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw PreconditionError("variance grid values must be >= 0");
  }
  const auto d = static_cast<Eigen::Index>(options.dim);
  std::mt19937_64 rng(seed);
  const GaussianModel standard{Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d)};
  const EmbeddingMatrix centers = sample_gaussian(standard, k_clients, rng);

  std::vector<std::pair<std::string, EmbeddingMatrix>> data;
  for (std::size_t i = 0; i < k_clients; ++i) {
    const GaussianModel client{std::sqrt(between_var) * centers.row(i).transpose(),
                               within_var * Eigen::MatrixXd::Identity(d, d)};
    char id[32];
    std::snprintf(id, sizeof id, "client%03zu", i);
    data.emplace_back(id, sample_gaussian(client, options.n_per_client, rng));
  }
  const ClientSet clients = ClientSet::from_embeddings(std::move(data));
  const EmbeddingMatrix z = sample_gaussian(standard, options.n_gen, rng);

  std::vector<VarianceSweepRow> rows;
  for (double v : generator_var_grid) {
    const EmbeddingMatrix gen(RowMatrix(std::sqrt(v + within_var) * z.data()));
    rows.push_back({v, all_scores(clients, gen, options.kernel)});
  }
  return rows;
}

CollapseTimeline mode_collapse_timeline(const ClientSet& clients, const std::vector<EmbeddingMatrix>& timeline,
                                        std::size_t collapse_step, const CollapseOptions& options) {
  if (timeline.size() < 2) throw PreconditionError("timeline needs at least 2 steps");
  if (collapse_step == 0) throw PreconditionError("collapse at step 0 leaves no pre-collapse baseline");
  if (collapse_step >= timeline.size()) throw PreconditionError("collapse step lies outside the timeline");
  CollapseTimeline out;
  out.collapse_step = collapse_step;
  for (const auto& gen : timeline) out.steps.push_back(all_scores(clients, gen, options.kernel));
  const ScoreRow& before = out.steps[collapse_step - 1];
  const ScoreRow& after = out.steps[collapse_step];
  auto ratio = [](double a, double b) { return b == 0.0 ? (a == 0.0 ? 1.0 : std::numeric_limits<double>::infinity()) : a / b; };
  out.ratio = {ratio(after.fid_avg, before.fid_avg), ratio(after.fid_all, before.fid_all),
               ratio(after.kid_avg, before.kid_avg), ratio(after.kid_all, before.kid_all)};
  auto flag = [&](double r) { return r > options.detection_threshold ? 1.0 : 0.0; };
  out.detected = {flag(out.ratio.fid_avg), flag(out.ratio.fid_all), flag(out.ratio.kid_avg), flag(out.ratio.kid_all)};
  return out;
}

std::vector<ScenarioRound> run_scenario(const Scenario& scenario) {
  if (scenario.generators.empty()) throw PreconditionError("scenario has no generators");
  const ClientSet clients = make_clients(scenario.clients);
  std::vector<ScenarioRound> rounds;
  for (const auto& g : scenario.generators) {
    std::mt19937_64 rng(g.seed);
    const EmbeddingMatrix samples = sample_gaussian({g.mean, g.cov}, g.n, rng);
    rounds.push_back({g.id, run_round(clients, samples, scenario.mode, scenario.metrics, scenario.options)});
  }
  return rounds;
}

CollapseScenario builtin_collapse_scenario(std::uint64_t seed, std::size_t steps, std::size_t collapse_step) {
  constexpr Eigen::Index d = 8;
  constexpr std::size_t k = 10;
  constexpr std::size_t n_client = 100;
  constexpr std::size_t n_gen = 500;
  constexpr double mean_scale = 3.0;
  constexpr double jitter = 1e-6;
  if (collapse_step == 0 || collapse_step >= steps) throw PreconditionError("collapse step must lie in [1, steps)");

  std::mt19937_64 rng(seed);
  const GaussianModel standard{Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d)};
  const EmbeddingMatrix centers = sample_gaussian(standard, k, rng);
  std::vector<std::pair<std::string, EmbeddingMatrix>> data;
  for (std::size_t i = 0; i < k; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "client%02zu", i);
    data.emplace_back(id, sample_gaussian({mean_scale * centers.row(i).transpose(), standard.cov}, n_client, rng));
  }
  CollapseScenario s{ClientSet::from_embeddings(std::move(data)), {}, collapse_step};
  const GaussianModel pooled = pool_moments(s.clients).model();
  const Eigen::RowVectorXd point = s.clients.embeddings(0).row(0);
  for (std::size_t t = 0; t < steps; ++t) {
    if (t < collapse_step) {
      s.timeline.push_back(sample_gaussian(pooled, n_gen, rng));
    } else {
      RowMatrix noise = sample_gaussian(standard, n_gen, rng).data();
      noise = (jitter * noise).rowwise() + point;
      s.timeline.emplace_back(std::move(noise));
    }
  }
  return s;
}

RankingComparison compare_rankings(const ScoreTable& a, const ScoreTable& b) {
  if (a.empty()) throw PreconditionError("score tables are empty");
  if (a.size() != b.size() || !std::equal(a.begin(), a.end(), b.begin(), [](const auto& x, const auto& y) {
        return x.first == y.first;
      })) {
    throw PreconditionError("score tables cover different generator ids");
  }
  std::vector<double> va, vb;
  for (const auto& [id, v] : a) va.push_back(v);
  for (const auto& [id, v] : b) vb.push_back(v);

  RankingComparison r;
  for (std::size_t i = 0; i < va.size(); ++i) {
    for (std::size_t j = i + 1; j < va.size(); ++j) {
      const double da = va[i] - va[j];
      const double db = vb[i] - vb[j];
      const bool tie_a = std::abs(da) <= kTieTolerance;
      const bool tie_b = std::abs(db) <= kTieTolerance;
      r.ties_a += tie_a;
      r.ties_b += tie_b;
      if (tie_a || tie_b) continue;
      ((da > 0) == (db > 0) ? r.concordant : r.discordant) += 1;
    }
  }
  const double pairs = static_cast<double>(va.size() * (va.size() - 1) / 2);
  const double denom = std::sqrt((pairs - static_cast<double>(r.ties_a)) * (pairs - static_cast<double>(r.ties_b)));
  r.kendall_tau = denom > 0.0 ? (static_cast<double>(r.concordant) - static_cast<double>(r.discordant)) / denom
                              : std::numeric_limits<double>::quiet_NaN();

  auto summarize = [](const ScoreTable& t, std::string& argmin, double& spread) {
    auto lo = t.begin();
    double hi = lo->second;
    for (auto it = t.begin(); it != t.end(); ++it) {
      if (it->second < lo->second) lo = it;
      hi = std::max(hi, it->second);
    }
    argmin = lo->first;
    spread = hi - lo->second;
  };
  summarize(a, r.argmin_a, r.spread_a);
  summarize(b, r.argmin_b, r.spread_b);
  return r;
}

}  // namespace fedeval
