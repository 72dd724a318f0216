#include "cli.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "fedeval/counterexample.hpp"
#include "fedeval/fedsim.hpp"
#include "fedeval/frechet.hpp"
#include "fedeval/json_io.hpp"
#include "fedeval/kernelmmd.hpp"
#include "fedeval/prdc.hpp"
#include "fedeval/statkit.hpp"

namespace fedeval::cli {

const std::vector<CommandEntry>& command_table() {
  static const std::vector<CommandEntry> table = {
      {"stats", {"ingest", "moments", "poolMoments", "logLikelihoodScores", "psdSqrt"}},
      {"fid", {"frechetDistance", "fidAll", "fidAvg"}},
      {"barycenter", {"barycenter", "fidAvgDecomposition"}},
      {"kid", {"kernelEval", "mmd2", "kidAvg", "kidAll", "kidGap"}},
      {"prdc", {"knnRadii", "prdcScores", "prdcAggregate"}},
      {"counterexample", {"construct", "searchMatchedPair"}},
      {"simulate", {"runRound", "modeCollapseTimeline"}},
      {"sweep", {"toyMixtureSweep", "varianceLimitedSweep"}},
      {"rank", {"compareRankings"}},
  };
  return table;
}

std::vector<double> parse_grid(std::string_view text) {
  auto number = [](std::string_view s) {
    double v = 0.0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v)) {
      throw FormatError("bad grid value '" + std::string(s) + "'");
    }
    return v;
  };
  std::vector<std::string_view> parts;
  for (std::size_t start = 0;;) {
    const auto colon = text.find(':', start);
    parts.push_back(text.substr(start, colon == std::string_view::npos ? colon : colon - start));
    if (colon == std::string_view::npos) break;
    start = colon + 1;
  }
  if (parts.size() == 1) return {number(parts[0])};
  if (parts.size() != 3) throw FormatError("grid must be start:stop:step");
  const double start = number(parts[0]);
  const double stop = number(parts[1]);
  const double step = number(parts[2]);
  if (!(step > 0.0)) throw FormatError("grid step must be positive");
  if (stop < start) throw FormatError("grid stop is below start");
  std::vector<double> grid;
  const double slack = 1e-12 * std::max(1.0, std::abs(stop));
  for (std::size_t i = 0;; ++i) {
    const double v = start + static_cast<double>(i) * step;
    if (v > stop + slack) break;
    grid.push_back(v);
  }
  return grid;
}

namespace {

struct Options {
  std::string clients, gen, ref, kernel, estimator = "vstat", agg = "both", mode = "raw", out;
  std::uint64_t seed = 0;
  double tol = 1e-10;
  int max_iter = 1000;
  std::size_t k = kDefaultPrdcNeighbors;

  std::string input, format, write, write_format = "binary", dtype = "f64", divisor = "population", matrix;
  double ridge = 0.0;
  std::string x, y;
  bool gap = false;
  std::string radii;
  bool search = false;
  int budget = 10000;
  double gap_fraction = 0.25;
  double residual_tol = 1e-6;
  std::string metrics = "fid_avg,fid_all", trace, scenario, csv;
  std::vector<std::string> timeline;
  std::size_t steps = 6, collapse_step = 3;
  double threshold = 2.0;
  std::string grid;
  std::optional<std::size_t> n;
  std::size_t kd_samples = 1000, num_clients = 20, dim = 4, n_gen = 500;
  double within = 0.05, between = 1.0;
  std::string table_a, table_b;
};

std::string real(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

void write_text(std::ostream& out, const std::string& path, const std::string& s) {
  if (path.empty()) {
    out << s;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path);
  f << s;
}

std::string csv_table(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows,
                      const std::vector<std::string>& labels = {}) {
  std::ostringstream s;
  for (std::size_t i = 0; i < header.size(); ++i) s << (i ? "," : "") << header[i];
  s << "\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    bool first = true;
    if (!labels.empty()) {
      s << labels[r];
      first = false;
    }
    for (double v : rows[r]) {
      s << (first ? "" : ",") << (std::isnan(v) ? std::string() : real(v));
      first = false;
    }
    s << "\n";
  }
  return s.str();
}

MmdEstimator estimator_of(const Options& o) {
  return o.estimator == "ustat" ? MmdEstimator::ustat : MmdEstimator::vstat;
}

KernelSpec kernel_of(const Options& o, KernelSpec fallback = KernelSpec::polynomial()) {
  return o.kernel.empty() ? fallback : parse_kernel_argument(o.kernel);
}

GaussianStats stats_of(const Generator& g) {
  if (const auto* m = std::get_if<EmbeddingMatrix>(&g)) return moments(*m);
  return std::get<GaussianStats>(g);
}

EmbeddingMatrix samples_of(const Generator& g) {
  if (const auto* m = std::get_if<EmbeddingMatrix>(&g)) return *m;
  throw PreconditionError("kernel scores need generator samples, not moments");
}

std::vector<double> parse_vector(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    double x = 0.0;
    const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), x);
    if (ec != std::errc() || end != item.data() + item.size()) throw FormatError("bad number '" + item + "'");
    v.push_back(x);
  }
  if (v.empty()) throw FormatError("empty vector");
  return v;
}

std::vector<Metric> parse_metrics(const std::string& text) {
  std::vector<Metric> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(parse_metric(item));
  return out;
}

bool want_avg(const Options& o) { return o.agg == "avg" || o.agg == "both"; }
bool want_all(const Options& o) { return o.agg == "all" || o.agg == "both"; }

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw FormatError(std::string(flag) + " is required");
}

using Handler = std::function<void(const Options&, std::ostream&)>;

void emit(const Options& o, std::ostream& out, const Json& j) { write_text(out, o.out, j.dump(2) + "\n"); }

// --- stats -----------------------------------------------------------------

void stats_ingest(const Options& o, std::ostream& out) {
  require(o.input, "--input");
  const EmbeddingMatrix m =
      o.format.empty() ? ingest(o.input)
                       : ingest(o.input, o.format == "csv" ? EmbeddingFormat::csv : EmbeddingFormat::binary);
  Json j{{"rows", m.rows()}, {"cols", m.cols()}};
  if (!o.write.empty()) {
    write_embeddings(o.write, m, o.write_format == "csv" ? EmbeddingFormat::csv : EmbeddingFormat::binary,
                     o.dtype == "f32" ? BinaryDtype::f32 : BinaryDtype::f64);
    j["written"] = o.write;
  }
  emit(o, out, j);
}

void stats_moments(const Options& o, std::ostream& out) {
  require(o.input, "--input");
  emit(o, out, to_json(moments(ingest(o.input), o.divisor == "unbiased" ? Estimator::unbiased : Estimator::population)));
}

void stats_pool(const Options& o, std::ostream& out) {
  require(o.clients, "--clients");
  emit(o, out, to_json(pool_moments(load_client_set(o.clients))));
}

void stats_loglik(const Options& o, std::ostream& out) {
  require(o.clients, "--clients");
  require(o.gen, "--gen");
  const GaussianStats g = stats_of(load_generator(o.gen));
  emit(o, out, to_json(log_likelihood_scores(load_client_set(o.clients), g.model(), o.ridge)));
}

void stats_psd_sqrt(const Options& o, std::ostream& out) {
  require(o.matrix, "--matrix");
  const Json doc = read_json_file(o.matrix);
  const Eigen::MatrixXd a = matrix_from_json(doc.is_object() ? doc.at("matrix") : doc);
  emit(o, out, Json{{"sqrt", to_json(psd_sqrt(a))}});
}

// --- scores ----------------------------------------------------------------

void fid(const Options& o, std::ostream& out) {
  require(o.gen, "--gen");
  const GaussianStats g = stats_of(load_generator(o.gen));
  if (!o.ref.empty()) {
    emit(o, out, to_json(frechet_distance(stats_of(load_generator(o.ref)), g)));
    return;
  }
  require(o.clients, "--clients");
  const ClientSet clients = load_client_set(o.clients);
  Json j = Json::object();
  if (want_avg(o)) {
    const FidAvg avg = fid_avg(clients, g);
    j["fid_avg"] = avg.value;
    Json per = Json::array();
    for (const auto& r : avg.per_client) per.push_back(to_json(r));
    j["per_client"] = per;
  }
  if (want_all(o)) j["fid_all"] = fid_all(clients, g).value;
  emit(o, out, j);
}

void barycenter_cmd(const Options& o, std::ostream& out) {
  require(o.clients, "--clients");
  const ClientSet clients = load_client_set(o.clients);
  const BarycenterOptions opts{o.tol, o.max_iter};
  if (o.gen.empty()) {
    emit(o, out, to_json(barycenter(clients, opts)));
    return;
  }
  const GaussianStats g = stats_of(load_generator(o.gen));
  Json j = to_json(fid_avg_decomposition(clients, g, opts));
  j["fid_avg"] = fid_avg(clients, g).value;
  emit(o, out, j);
}

void kid(const Options& o, std::ostream& out) {
  const KernelSpec spec = kernel_of(o);
  if (!o.x.empty() || !o.y.empty()) {
    const auto x = parse_vector(o.x);
    const auto y = parse_vector(o.y);
    emit(o, out, Json{{"value", kernel_eval(spec, x, y)}});
    return;
  }
  const auto est = estimator_of(o);
  if (!o.ref.empty()) {
    require(o.gen, "--gen");
    emit(o, out, to_json(mmd2(spec, ingest(o.ref), samples_of(load_generator(o.gen)), est)));
    return;
  }
  require(o.clients, "--clients");
  const ClientSet clients = load_client_set(o.clients);
  Json j = Json::object();
  if (!o.gen.empty()) {
    const EmbeddingMatrix gen = samples_of(load_generator(o.gen));
    if (want_avg(o)) {
      const KidAvg avg = kid_avg(clients, gen, spec, est);
      j["kid_avg"] = avg.value;
      Json per = Json::array();
      for (const auto& r : avg.per_client) per.push_back(to_json(r));
      j["per_client"] = per;
    }
    if (want_all(o)) j["kid_all"] = kid_all(clients, gen, spec, est);
  } else if (!o.gap) {
    throw FormatError("--gen is required");
  }
  if (o.gap) j["kid_gap"] = kid_gap(clients, spec);
  emit(o, out, j);
}

void prdc(const Options& o, std::ostream& out) {
  if (!o.radii.empty()) {
    emit(o, out, Json{{"radii", knn_radii(ingest(o.radii), o.k)}});
    return;
  }
  require(o.gen, "--gen");
  const EmbeddingMatrix gen = samples_of(load_generator(o.gen));
  if (!o.ref.empty()) {
    emit(o, out, to_json(prdc_scores(ingest(o.ref), gen, o.k)));
    return;
  }
  require(o.clients, "--clients");
  const PrdcAggregate agg = prdc_aggregate(load_client_set(o.clients), gen, o.k);
  Json per = Json::array();
  for (const auto& r : agg.per_client) per.push_back(to_json(r));
  emit(o, out, Json{{"all", to_json(agg.all)}, {"avg", to_json(agg.avg)}, {"per_client", per}});
}

void counterexample(const Options& o, std::ostream& out) {
  require(o.clients, "--clients");
  const ClientSet clients = load_client_set(o.clients);
  if (!o.search) {
    emit(o, out, to_json(construct_counterexample(clients)));
    return;
  }
  MatchedPairSearch search;
  search.seed = o.seed;
  search.budget = o.budget;
  search.gap_fraction = o.gap_fraction;
  search.residual_tolerance = o.residual_tol;
  emit(o, out, to_json(search_matched_pair(clients, search)));
}

// --- simulation ------------------------------------------------------------

void simulate_round(const Options& o, std::ostream& out) {
  require(o.clients, "--clients");
  require(o.gen, "--gen");
  const RoundResult r = run_round(load_client_set(o.clients), load_generator(o.gen), parse_aggregation_mode(o.mode),
                                  parse_metrics(o.metrics), {kernel_of(o), estimator_of(o)});
  Json j{{"scores", to_json(r.scores)}, {"total_bytes", r.trace.total_bytes()}};
  if (o.trace.empty()) {
    j["trace"] = to_json(r.trace);
  } else {
    write_text(out, o.trace, to_json(r.trace).dump(2) + "\n");
  }
  emit(o, out, j);
}

void simulate_scenario(const Options& o, std::ostream& out) {
  require(o.scenario, "--scenario");
  const Scenario s = scenario_from_json(read_json_file(o.scenario));
  const auto rounds = run_scenario(s);
  std::vector<std::vector<double>> rows;
  std::vector<std::string> labels;
  Json traces = Json::array();
  const double nan = std::nan("");
  for (const auto& r : rounds) {
    const auto& sc = r.result.scores;
    rows.push_back({sc.fid_avg.value_or(nan), sc.fid_all.value_or(nan), sc.kid_avg.value_or(nan),
                    sc.kid_all.value_or(nan), static_cast<double>(r.result.trace.total_bytes())});
    labels.push_back(r.generator);
    traces.push_back(Json{{"generator", r.generator}, {"trace", to_json(r.result.trace)}});
  }
  write_text(out, o.out, csv_table({"generator", "fid_avg", "fid_all", "kid_avg", "kid_all", "total_bytes"}, rows, labels));
  if (!o.trace.empty()) write_text(out, o.trace, Json{{"name", s.name}, {"rounds", traces}}.dump(2) + "\n");
}

void simulate_collapse(const Options& o, std::ostream& out) {
  CollapseOptions opts;
  opts.kernel = kernel_of(o, KernelSpec::rbf());
  opts.detection_threshold = o.threshold;
  CollapseTimeline t;
  if (o.clients.empty()) {
    const CollapseScenario s = builtin_collapse_scenario(o.seed, o.steps, o.collapse_step);
    t = mode_collapse_timeline(s.clients, s.timeline, s.collapse_step, opts);
  } else {
    std::vector<EmbeddingMatrix> timeline;
    for (const auto& path : o.timeline) timeline.push_back(ingest(path));
    t = mode_collapse_timeline(load_client_set(o.clients), timeline, o.collapse_step, opts);
  }
  auto row_json = [](const ScoreRow& r) {
    return Json{{"fid_avg", r.fid_avg}, {"fid_all", r.fid_all}, {"kid_avg", r.kid_avg}, {"kid_all", r.kid_all}};
  };
  std::vector<std::vector<double>> rows;
  Json steps = Json::array();
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    const auto& r = t.steps[i];
    rows.push_back({static_cast<double>(i), r.fid_avg, r.fid_all, r.kid_avg, r.kid_all});
    steps.push_back(row_json(r));
  }
  if (!o.csv.empty()) write_text(out, o.csv, csv_table({"step", "fid_avg", "fid_all", "kid_avg", "kid_all"}, rows));
  emit(o, out,
       Json{{"collapse_step", t.collapse_step},
            {"threshold", o.threshold},
            {"ratio", row_json(t.ratio)},
            {"detected",
             {{"fid_avg", t.detected.fid_avg > 0}, {"fid_all", t.detected.fid_all > 0},
              {"kid_avg", t.detected.kid_avg > 0}, {"kid_all", t.detected.kid_all > 0}}},
            {"steps", steps}});
}

void sweep_toy(const Options& o, std::ostream& out) {
  ToySweepOptions opts;
  opts.kernel = kernel_of(o);
  opts.kd_samples = o.kd_samples;
  const auto table = toy_mixture_sweep(parse_grid(o.grid.empty() ? "0:4:0.1" : o.grid), o.n.value_or(1000), o.seed, opts);
  std::vector<std::vector<double>> rows;
  for (const auto& r : table) {
    rows.push_back({r.var_x, r.fd_avg, r.fd_all, r.fd_avg_const, r.kd_avg, r.kd_all, r.fd_avg_sampled,
                    r.fd_all_sampled, r.kd_avg_sampled, r.kd_all_sampled});
  }
  write_text(out, o.out,
             csv_table({"var_x", "fd_avg", "fd_all", "fd_avg_const", "kd_avg", "kd_all", "fd_avg_sampled",
                        "fd_all_sampled", "kd_avg_sampled", "kd_all_sampled"},
                       rows));
}

void sweep_variance(const Options& o, std::ostream& out) {
  VarianceSweepOptions opts;
  opts.kernel = kernel_of(o);
  opts.dim = o.dim;
  if (o.n) opts.n_per_client = *o.n;
  opts.n_gen = o.n_gen;
  const auto table = variance_limited_sweep(o.num_clients, o.within, o.between,
                                            parse_grid(o.grid.empty() ? "0:2:0.1" : o.grid), o.seed, opts);
  std::vector<std::vector<double>> rows;
  for (const auto& r : table) rows.push_back({r.v, r.scores.fid_avg, r.scores.fid_all, r.scores.kid_avg, r.scores.kid_all});
  write_text(out, o.out, csv_table({"v", "fid_avg", "fid_all", "kid_avg", "kid_all"}, rows));
}

void rank(const Options& o, std::ostream& out) {
  require(o.table_a, "--a");
  require(o.table_b, "--b");
  emit(o, out, to_json(compare_rankings(load_score_table(o.table_a), load_score_table(o.table_b))));
}

// --- parser ----------------------------------------------------------------

struct Parser {
  CLI::App app{"Federated evaluation of generative models: score-avg vs score-all", "fedeval"};
  Options o;
  std::map<const CLI::App*, Handler> handlers;

  Parser() {
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Expand all help");

    auto* stats = app.add_subcommand("stats", "Embedding ingest, moments, pooling, log-likelihood, PSD square root");
    stats->require_subcommand(1);
    auto* ingest_cmd = leaf(stats, "ingest", "Read an embedding file; optionally convert it", stats_ingest);
    ingest_cmd->add_option("--input", o.input, "Embedding file")->required();
    ingest_cmd->add_option("--format", o.format, "Input format")->check(CLI::IsMember({"csv", "binary"}));
    ingest_cmd->add_option("--write", o.write, "Write the matrix to this path");
    ingest_cmd->add_option("--write-format", o.write_format, "Format for --write")->check(CLI::IsMember({"csv", "binary"}));
    ingest_cmd->add_option("--dtype", o.dtype, "Binary dtype for --write")->check(CLI::IsMember({"f32", "f64"}));
    auto* moments_cmd = leaf(stats, "moments", "Mean and covariance of an embedding file", stats_moments);
    moments_cmd->add_option("--input", o.input, "Embedding file")->required();
    moments_cmd->add_option("--divisor", o.divisor, "Covariance divisor")->check(CLI::IsMember({"population", "unbiased"}));
    clients(leaf(stats, "pool", "Moments of the client mixture", stats_pool));
    auto* ll = leaf(stats, "loglik", "Gaussian log-likelihood, per client / avg / all", stats_loglik);
    clients(ll);
    gen(ll);
    ll->add_option("--ridge", o.ridge, "Diagonal ridge added to the model covariance");
    leaf(stats, "psd-sqrt", "Principal square root of a PSD matrix", stats_psd_sqrt)
        ->add_option("--matrix", o.matrix, "JSON matrix file")
        ->required();

    auto* fid_cmd = leaf(&app, "fid", "Frechet distance; fid_avg / fid_all over clients", fid);
    clients(fid_cmd);
    gen(fid_cmd);
    fid_cmd->add_option("--ref", o.ref, "Single reference file (embeddings or moments)");
    agg(fid_cmd);

    auto* bary = leaf(&app, "barycenter", "Wasserstein barycenter; with --gen the fid_avg decomposition", barycenter_cmd);
    clients(bary);
    gen(bary);
    bary->add_option("--tol", o.tol, "Relative fixed-point tolerance");
    bary->add_option("--max-iter", o.max_iter, "Iteration cap");

    auto* kid_cmd = leaf(&app, "kid", "Kernel MMD scores", kid);
    clients(kid_cmd);
    gen(kid_cmd);
    kernel(kid_cmd);
    estimator(kid_cmd);
    agg(kid_cmd);
    kid_cmd->add_option("--ref", o.ref, "Single reference embedding file");
    kid_cmd->add_flag("--gap", o.gap, "Also report the generator-independent avg/all offset");
    kid_cmd->add_option("--x", o.x, "Comma-separated vector (kernel evaluation)");
    kid_cmd->add_option("--y", o.y, "Comma-separated vector (kernel evaluation)");

    auto* prdc_cmd = leaf(&app, "prdc", "Precision / recall / density / coverage", prdc);
    clients(prdc_cmd);
    gen(prdc_cmd);
    prdc_cmd->add_option("--ref", o.ref, "Single reference embedding file");
    prdc_cmd->add_option("--radii", o.radii, "Report k-NN radii of this embedding file");
    prdc_cmd->add_option("--k", o.k, "Neighbor count")->check(CLI::PositiveNumber);

    auto* ce = leaf(&app, "counterexample", "Matched per-client scores with a pooled-score gap", counterexample);
    clients(ce);
    ce->add_flag("--search", o.search, "Numerically search for a matched pair");
    ce->add_option("--seed", o.seed, "Search seed");
    ce->add_option("--budget", o.budget, "Objective evaluation budget");
    ce->add_option("--gap-fraction", o.gap_fraction, "Required gap as a fraction of u");
    ce->add_option("--residual-tol", o.residual_tol, "Summed per-client mismatch tolerance");

    auto* sim = app.add_subcommand("simulate", "Federated protocol simulation");
    sim->require_subcommand(1);
    auto* round = leaf(sim, "round", "One evaluation round with byte accounting", simulate_round);
    clients(round);
    gen(round);
    kernel(round);
    estimator(round);
    round->add_option("--mode", o.mode, "Aggregation mode")
        ->check(CLI::IsMember({"scores", "moments", "raw", "kernel-blocks"}));
    round->add_option("--metrics", o.metrics, "Comma-separated fid_avg,fid_all,kid_avg,kid_all");
    round->add_option("--trace", o.trace, "Write the protocol trace here instead of inline");
    auto* scen = leaf(sim, "scenario", "Run a scenario file; CSV scores to --out", simulate_scenario);
    scen->add_option("--scenario", o.scenario, "Scenario JSON")->required();
    scen->add_option("--trace", o.trace, "Protocol trace JSON output");
    auto* collapse = leaf(sim, "collapse", "Mode-collapse timeline (built-in scenario unless --clients)", simulate_collapse);
    clients(collapse);
    kernel(collapse);
    collapse->add_option("--seed", o.seed, "Seed of the built-in scenario");
    collapse->add_option("--timeline", o.timeline, "Generator embedding files, one per step");
    collapse->add_option("--steps", o.steps, "Built-in scenario length");
    collapse->add_option("--collapse-step", o.collapse_step, "Index of the first collapsed step");
    collapse->add_option("--threshold", o.threshold, "Detection ratio threshold");
    collapse->add_option("--csv", o.csv, "Also write the per-step table as CSV");

    auto* sweep = app.add_subcommand("sweep", "Score sweeps (CSV)");
    sweep->require_subcommand(1);
    auto* toy = leaf(sweep, "toy-mixture", "Two-Gaussian toy mixture against N(0, diag(v, 1))", sweep_toy);
    toy->add_option("--grid", o.grid, "start:stop:step over v");
    toy->add_option("--n", o.n, "Samples per client (default 1000)");
    toy->add_option("--seed", o.seed, "Seed");
    toy->add_option("--kd-samples", o.kd_samples, "Rows per dataset for the kernel columns");
    kernel(toy);
    auto* var = leaf(sweep, "variance-limited", "Heterogeneous clients against N(0, (v + w) I)", sweep_variance);
    var->add_option("--grid", o.grid, "start:stop:step over v");
    var->add_option("--num-clients", o.num_clients, "Number of clients");
    var->add_option("--within", o.within, "Within-client variance w");
    var->add_option("--between", o.between, "Variance of client means b");
    var->add_option("--dim", o.dim, "Dimension");
    var->add_option("--n", o.n, "Samples per client (default 50)");
    var->add_option("--n-gen", o.n_gen, "Generator samples");
    var->add_option("--seed", o.seed, "Seed");
    kernel(var);

    auto* rank_cmd = leaf(&app, "rank", "Compare two score tables", rank);
    rank_cmd->add_option("--a", o.table_a, "Score table JSON")->required();
    rank_cmd->add_option("--b", o.table_b, "Score table JSON")->required();
  }

  CLI::App* leaf(CLI::App* parent, const std::string& name, const std::string& help, Handler h) {
    auto* sub = parent->add_subcommand(name, help);
    sub->add_option("--out", o.out, "Write output here instead of stdout");
    handlers[sub] = std::move(h);
    return sub;
  }
  void clients(CLI::App* a) { a->add_option("--clients", o.clients, "ClientSet JSON"); }
  void gen(CLI::App* a) { a->add_option("--gen", o.gen, "Generator embeddings or moments JSON"); }
  void kernel(CLI::App* a) { a->add_option("--kernel", o.kernel, "KernelSpec JSON (inline or file)"); }
  void estimator(CLI::App* a) {
    a->add_option("--estimator", o.estimator, "MMD estimator")->check(CLI::IsMember({"vstat", "ustat"}));
  }
  void agg(CLI::App* a) { a->add_option("--agg", o.agg, "Aggregation")->check(CLI::IsMember({"avg", "all", "both"})); }

  const Handler& selected() const {
    const CLI::App* node = &app;
    while (!node->get_subcommands().empty()) node = node->get_subcommands().front();
    return handlers.at(node);
  }
};

}  // namespace

std::vector<std::string> registered_subcommands() {
  Parser p;
  std::vector<std::string> names;
  for (const auto* sub : p.app.get_subcommands({})) names.push_back(sub->get_name());
  return names;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Parser p;
  try {
    p.app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return p.app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  try {
    p.selected()(p.o, out);
    return kOk;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
}

}  // namespace fedeval::cli
