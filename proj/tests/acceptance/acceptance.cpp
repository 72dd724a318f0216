// Acceptance suite: one pass/fail line per criterion. With no arguments every
// criterion runs; otherwise only the named ones. The exit code is non-zero if
// any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fedeval/counterexample.hpp"
#include "fedeval/fedsim.hpp"
#include "fedeval/frechet.hpp"
#include "fedeval/kernelmmd.hpp"
#include "fedeval/prdc.hpp"
#include "fedeval/statkit.hpp"
#include "oracles.hpp"

using namespace fedeval;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [violated: " << what << "]";
    }
  }
};

double rel(double got, double want) { return std::abs(got - want) / std::max(1.0, std::abs(want)); }

std::size_t argmin(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
}

ClientSet random_stats_clients(std::size_t k, std::size_t d, std::mt19937_64& rng) {
  std::vector<std::pair<std::string, GaussianStats>> stats;
  for (std::size_t i = 0; i < k; ++i) {
    stats.emplace_back("c" + std::to_string(i), GaussianStats{10 + i, oracle::random_vector(Eigen::Index(d), rng),
                                                              oracle::random_spd(Eigen::Index(d), rng)});
  }
  return ClientSet::from_stats(stats);
}

// --- criteria ----------------------------------------------------------------

void kernel_constant_gap(Outcome& o) {
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<std::size_t> kdist(1, 6), ddist(1, 8);
  double worst = 0.0;
  int instances = 0, tau_failures = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto set = oracle::random_client_data(kdist(rng), ddist(rng), 2, 64, rng);
    for (const auto& spec : {KernelSpec::polynomial(), KernelSpec::rbf()}) {
      const double gap = kid_gap(set, spec);
      ScoreTable avg, all;
      for (int g = 0; g < 3; ++g) {
        const auto gen = oracle::random_embeddings(8 + 8 * g, set.dim(), rng, 0.4 * g, 0.8 + 0.3 * g);
        const double a = kid_avg(set, gen, spec).value;
        const double b = kid_all(set, gen, spec);
        worst = std::max(worst, std::abs((a - b) - gap) / (1.0 + std::abs(gap)));
        avg["g" + std::to_string(g)] = a;
        all["g" + std::to_string(g)] = b;
      }
      tau_failures += compare_rankings(avg, all).kendall_tau != 1.0;
      ++instances;
    }
  }
  o.detail << instances << " instances, max relative deviation " << worst << ", tau != 1 on " << tau_failures;
  o.require(worst <= 1e-9, "deviation <= 1e-9");
  o.require(tau_failures == 0, "tau == 1");
}

void moment_pooling(Outcome& o) {
  std::mt19937_64 rng(1002);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto set = oracle::random_client_data(1 + trial % 8, 1 + trial % 12, 2, 50, rng);
    const GaussianModel g{oracle::random_vector(Eigen::Index(set.dim()), rng), oracle::random_spd(Eigen::Index(set.dim()), rng)};
    const double via_pool = fid_all(set, g).value;
    const double direct = frechet_distance(oracle::naive_moments(set.pooled_embeddings()), g).value;
    worst = std::max(worst, rel(via_pool, direct));
  }
  o.detail << "200 instances, max relative deviation " << worst;
  o.require(worst <= 1e-8, "deviation <= 1e-8");
}

void fid_avg_decomposition(Outcome& o) {
  std::mt19937_64 rng(1003);
  std::uniform_int_distribution<std::size_t> kdist(1, 5), ddist(1, 8);
  double worst = 0.0, worst_commuting = 0.0;
  int violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto set = random_stats_clients(kdist(rng), ddist(rng), rng);
    const GaussianModel g{oracle::random_vector(Eigen::Index(set.dim()), rng), oracle::random_spd(Eigen::Index(set.dim()), rng)};
    const double avg = fid_avg(set, g).value;
    const auto dec = fid_avg_decomposition(set, g);
    const double dev = rel(avg, dec.barycenter_part + dec.const_part);
    violations += dev > 1e-7;
    worst = std::max(worst, dev);

    // Commuting family: diagonal covariances in a shared random basis.
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(oracle::random_spd(Eigen::Index(set.dim()), rng));
    const Eigen::MatrixXd q = qr.householderQ();
    std::vector<std::pair<std::string, GaussianStats>> diag;
    for (std::size_t i = 0; i < set.size(); ++i) {
      const Eigen::VectorXd ev = oracle::random_vector(Eigen::Index(set.dim()), rng).array().abs() + 0.1;
      diag.emplace_back(set[i].id, GaussianStats{10, set[i].stats->mean, q * ev.asDiagonal() * q.transpose()});
    }
    const auto commuting = ClientSet::from_stats(diag);
    const auto fixed = barycenter(commuting).cov;
    const auto closed = commuting_barycenter(commuting);
    worst_commuting = std::max(worst_commuting, (fixed - closed).norm() / std::max(1.0, closed.norm()));
  }
  o.detail << "100 instances, identity violated on " << violations << ", max relative deviation " << worst
           << "; commuting barycenter max deviation " << worst_commuting;
  o.require(worst <= 1e-7, "fid_avg == barycenter_part + const_part to 1e-7");
  o.require(worst_commuting <= 1e-8, "commuting barycenter to 1e-8");
}

void toy_mixture(Outcome& o) {
  std::vector<double> grid;
  for (int i = 0; i <= 40; ++i) grid.push_back(i / 10.0);
  const auto rows = toy_mixture_sweep(grid, 10000, 0);
  std::vector<double> fa, fl, fas, fls;
  double const_dev = 0.0;
  for (const auto& r : rows) {
    fa.push_back(r.fd_avg);
    fl.push_back(r.fd_all);
    fas.push_back(r.fd_avg_sampled);
    fls.push_back(r.fd_all_sampled);
    const_dev = std::max(const_dev, std::abs(r.fd_avg_const - 1.0));
  }
  const double v_all = grid[argmin(fl)], v_avg = grid[argmin(fa)];
  const double s_all = grid[argmin(fls)], s_avg = grid[argmin(fas)];
  o.detail << "analytic argmins fd_all " << v_all << " fd_avg " << v_avg << ", sampled argmins fd_all " << s_all
           << " fd_avg " << s_avg << ", const_part deviation " << const_dev;
  o.require(v_all == 2.0 && v_avg == 1.0, "analytic argmins");
  o.require(std::abs(rows[20].fd_all) <= 1e-9 && std::abs(rows[10].fd_avg - 1.0) <= 1e-9, "minimum values");
  o.require(const_dev <= 1e-9, "const_part == 1");
  o.require(std::abs(s_all - 2.0) <= 0.1 + 1e-12 && std::abs(s_avg - 1.0) <= 0.1 + 1e-12, "sampled argmins within one step");
}

void matched_pair_instrumentation(Outcome& o) {
  const Eigen::Vector3d e1(1, 0, 0);
  const ClientSet toy({{"a", 0.5, std::nullopt, GaussianStats{10, e1, Eigen::Matrix3d::Identity()}},
                       {"b", 0.5, std::nullopt, GaussianStats{10, -e1, Eigen::Matrix3d::Identity()}}});
  const auto r = construct_counterexample(toy);
  const double low = 4.0 - 2.0 * std::sqrt(2.0);
  o.detail << std::setprecision(12) << "u " << r.u << ", fid_all_hat " << r.fid_all_hat << ", fid_all_prime "
           << r.fid_all_prime << ", residuals [" << r.per_client_residuals[0] << ", " << r.per_client_residuals[1]
           << "], claimed gap bound " << r.claimed_gap_lower_bound;
  o.require(std::abs(r.u - 1.0) <= 1e-10, "u == 1");
  o.require((r.g_hat.cov - Eigen::Vector3d(2, 1, 1).asDiagonal().toDenseMatrix()).norm() <= 1e-10, "C_hat");
  o.require((r.g_prime.cov - Eigen::Matrix3d::Identity()).norm() <= 1e-10, "C_prime");
  o.require(std::abs(r.fid_all_hat) <= 1e-10, "fid_all_hat == 0");
  o.require(std::abs(r.fid_all_prime - low) <= 1e-10, "fid_all_prime");
  for (double res : r.per_client_residuals) o.require(std::abs(res - (2.0 - low)) <= 1e-10, "measured residual");
}

void loglik_identity(Outcome& o) {
  std::mt19937_64 rng(1006);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto set = oracle::random_client_data(1 + trial % 6, 1 + trial % 5, 2, 40, rng);
    const GaussianModel g{oracle::random_vector(Eigen::Index(set.dim()), rng), oracle::random_spd(Eigen::Index(set.dim()), rng)};
    const auto ll = log_likelihood_scores(set, g);
    worst = std::max(worst, std::abs(ll.avg - ll.all) / (1.0 + std::abs(ll.all)));
  }
  o.detail << "100 instances, max deviation " << worst;
  o.require(worst <= 1e-12, "avg == all");
}

void score_table_comparator(Outcome& o) {
  const ScoreTable avg{{"generator1", 195.04}, {"generator2", 195.37}};
  const ScoreTable all{{"generator1", 100.49}, {"generator2", 190.93}};
  const auto r = compare_rankings(avg, all);
  const double da = std::round(r.spread_a * 100.0) / 100.0;
  const double dl = std::round(r.spread_b * 100.0) / 100.0;
  o.detail << "tau " << r.kendall_tau << ", fid_avg difference " << da << ", fid_all difference " << dl;
  o.require(r.kendall_tau == 1.0, "same ordering");
  o.require(da == 0.33 && dl == 90.44, "differences 0.33 and 90.44");
}

void mode_collapse(Outcome& o) {
  const auto s = builtin_collapse_scenario(0);
  const auto t = mode_collapse_timeline(s.clients, s.timeline, s.collapse_step);
  o.detail << "ratios kid_avg " << t.ratio.kid_avg << ", kid_all " << t.ratio.kid_all << ", fid_all " << t.ratio.fid_all
           << ", fid_avg " << t.ratio.fid_avg;
  o.require(t.ratio.kid_avg > 2.0, "kid_avg ratio > 2");
  o.require(t.ratio.kid_all > 2.0, "kid_all ratio > 2");
  o.require(t.ratio.fid_all > 2.0, "fid_all ratio > 2");
}

void protocol_soundness(Outcome& o) {
  std::mt19937_64 rng(1009);
  const std::vector<std::pair<AggregationMode, std::vector<Metric>>> modes{
      {AggregationMode::scores, {Metric::fid_avg, Metric::kid_avg}},
      {AggregationMode::moments, {Metric::fid_avg, Metric::fid_all}},
      {AggregationMode::raw, {Metric::fid_avg, Metric::fid_all, Metric::kid_avg, Metric::kid_all}},
      {AggregationMode::kernel_blocks, {Metric::kid_avg, Metric::kid_all}}};
  double worst = 0.0;
  int hard_errors = 0, monotone = 0, rounds = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 2 + trial % 4;
    const auto set = oracle::random_client_data(1 + trial % 5, d, d + 2, 40, rng);
    const auto gen = oracle::random_embeddings(30, d, rng, 0.3);
    const auto gm = moments(gen);
    const double fa = fid_avg(set, gm).value, fl = fid_all(set, gm).value;
    const double ka = kid_avg(set, gen, KernelSpec::polynomial()).value;
    const double kl = kid_all(set, gen, KernelSpec::polynomial());
    std::vector<std::size_t> bytes;
    for (const auto& [mode, metrics] : modes) {
      const auto r = run_round(set, gen, mode, metrics);
      ++rounds;
      if (r.scores.fid_avg) worst = std::max(worst, rel(*r.scores.fid_avg, fa));
      if (r.scores.fid_all) worst = std::max(worst, rel(*r.scores.fid_all, fl));
      if (r.scores.kid_avg) worst = std::max(worst, rel(*r.scores.kid_avg, ka));
      if (r.scores.kid_all) worst = std::max(worst, rel(*r.scores.kid_all, kl));
    }
    for (auto mode : {AggregationMode::scores, AggregationMode::moments, AggregationMode::raw}) {
      bytes.push_back(run_round(set, gen, mode, {Metric::fid_avg}).trace.total_bytes());
    }
    monotone += bytes[0] < bytes[1] && bytes[1] < bytes[2];
    for (auto metric : {Metric::fid_all, Metric::kid_all}) {
      try {
        run_round(set, gen, AggregationMode::scores, {metric});
      } catch (const CapabilityError&) {
        ++hard_errors;
      }
    }
  }
  o.detail << rounds << " rounds, max deviation " << worst << ", scores-mode *-all rejections " << hard_errors
           << "/100, byte ordering held on " << monotone << "/50";
  o.require(worst <= 1e-9, "library equivalence");
  o.require(hard_errors == 100, "scores mode rejects *-all");
  o.require(monotone == 50, "scores < moments < raw bytes");
}

void prdc_properties(Outcome& o) {
  std::mt19937_64 rng(1010);
  int violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + trial % 6, k = 1 + trial % 5;
    const auto ref = oracle::random_embeddings(k + 5 + trial % 30, d, rng);
    const auto gen = oracle::random_embeddings(k + 5 + trial % 20, d, rng, 0.1 * (trial % 7));
    const auto r = prdc_scores(ref, gen, k);
    const bool bounded = r.precision >= 0 && r.precision <= 1 && r.recall >= 0 && r.recall <= 1 && r.coverage >= 0 &&
                         r.coverage <= 1 && r.density >= 0;
    const auto dup = prdc_scores(ref, ref, k);
    violations += !bounded || dup.precision != 1.0 || dup.recall != 1.0 || dup.coverage != 1.0;
  }
  RowMatrix ref(3, 1), gen(2, 1);
  ref << 0, 1, 2;
  gen << 0.1, 10;
  const auto f = prdc_scores(EmbeddingMatrix(ref), EmbeddingMatrix(gen), 1);
  o.detail << "100 instances, violations " << violations << "; fixture precision " << f.precision << " recall "
           << f.recall << " density " << f.density << " coverage " << f.coverage;
  o.require(violations == 0, "bounds and duplication");
  o.require(f.precision == 0.5 && f.recall == 1.0 && f.density == 1.0 && f.coverage == 2.0 / 3.0, "fixture");
}

struct Criterion {
  std::string name;
  double budget_seconds;
  std::function<void(Outcome&)> body;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {"kernel_constant_gap", 60, kernel_constant_gap},
      {"moment_pooling", 30, moment_pooling},
      {"fid_avg_decomposition", 60, fid_avg_decomposition},
      {"toy_mixture", 5, toy_mixture},
      {"matched_pair_instrumentation", 1, matched_pair_instrumentation},
      {"loglik_identity", 10, loglik_identity},
      {"score_table_comparator", 1, score_table_comparator},
      {"mode_collapse", 30, mode_collapse},
      {"protocol_soundness", 30, protocol_soundness},
      {"prdc_properties", 30, prdc_properties},
  };
  return all;
}

bool run(const Criterion& c) {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  try {
    c.body(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << " [exception: " << e.what() << "]";
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.require(seconds <= c.budget_seconds, "runtime budget");
  std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << c.name << ": " << o.detail.str() << " (" << std::fixed
            << std::setprecision(2) << seconds << " s)" << std::defaultfloat << std::endl;
  return o.pass;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> selected(argv + 1, argv + argc);
  bool ok = true;
  int matched = 0;
  for (const auto& c : criteria()) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.name) == selected.end()) continue;
    ++matched;
    ok = run(c) && ok;
  }
  if (matched == 0) {
    std::cerr << "unknown criterion\n";
    return 2;
  }
  return ok ? 0 : 1;
}
