#include "fedeval/json_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace fedeval {

namespace {

template <class T>
T field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad field '") + key + "': " + e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base.parent_path() / path;
}

}  // namespace

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Json to_json(const Eigen::VectorXd& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Json to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::VectorXd vector_from_json(const Json& j) {
  if (!j.is_array()) throw FormatError("expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw FormatError("expected an array of numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  if (!j.is_array() || j.empty()) throw FormatError("expected a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Eigen::VectorXd row = vector_from_json(j[static_cast<std::size_t>(i)]);
    if (row.size() != cols) throw FormatError("ragged matrix");
    m.row(i) = row.transpose();
  }
  return m;
}

Json to_json(const GaussianStats& s) {
  return Json{{"n", s.n}, {"mean", to_json(s.mean)}, {"cov", to_json(s.cov)}, {"second_moment", to_json(s.second_moment())}};
}

GaussianStats stats_from_json(const Json& j) {
  GaussianStats s;
  const auto n = field<long long>(j, "n");
  if (n < 1) throw FormatError("moments: n must be positive");
  s.n = static_cast<std::size_t>(n);
  s.mean = vector_from_json(field<Json>(j, "mean"));
  s.cov = matrix_from_json(field<Json>(j, "cov"));
  if (s.cov.rows() != s.mean.size() || s.cov.cols() != s.mean.size()) {
    throw FormatError("moments: cov must be d x d for a d-dimensional mean");
  }
  if (!s.mean.allFinite() || !s.cov.allFinite()) throw FormatError("moments: non-finite entry");
  if (j.contains("second_moment")) {
    const Eigen::MatrixXd given = matrix_from_json(j.at("second_moment"));
    const Eigen::MatrixXd expected = s.second_moment();
    if (given.rows() != expected.rows() || given.cols() != expected.cols() ||
        (given - expected).norm() > 1e-9 * std::max(1.0, expected.norm())) {
      throw FormatError("moments: second_moment disagrees with cov + mean mean^T");
    }
  }
  return s;
}

Json to_json(const KernelSpec& spec) {
  if (spec.kind == KernelKind::rbf) {
    return Json{{"kind", "rbf"}, {"sigma", spec.sigma ? Json(*spec.sigma) : Json(nullptr)}};
  }
  return Json{{"kind", "polynomial"},
              {"degree", spec.degree},
              {"scale", spec.scale ? Json(*spec.scale) : Json(nullptr)},
              {"offset", spec.offset}};
}

KernelSpec kernel_from_json(const Json& j) {
  const auto kind = field<std::string>(j, "kind");
  auto optional_real = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return field<double>(j, key);
  };
  KernelSpec spec;
  if (kind == "polynomial") {
    spec = KernelSpec::polynomial(j.contains("degree") ? field<int>(j, "degree") : 3, optional_real("scale"),
                                  j.contains("offset") ? field<double>(j, "offset") : 1.0);
  } else if (kind == "rbf") {
    spec = KernelSpec::rbf(optional_real("sigma"));
  } else {
    throw FormatError("unknown kernel kind '" + kind + "'");
  }
  spec.validate();
  return spec;
}

KernelSpec parse_kernel_argument(std::string_view text) {
  const auto start = text.find_first_not_of(" \t\n");
  if (start != std::string_view::npos && text[start] == '{') {
    try {
      return kernel_from_json(Json::parse(text));
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(std::string("kernel: ") + e.what());
    }
  }
  return kernel_from_json(read_json_file(std::string(text)));
}

Json to_json(const FrechetResult& r) {
  return Json{{"value", r.value}, {"mean_term", r.mean_term}, {"trace_term", r.trace_term}};
}

Json to_json(const BarycenterSolution& s) {
  return Json{{"mean", to_json(s.mean)},
              {"cov", to_json(s.cov)},
              {"iterations", s.iterations},
              {"residual", s.residual},
              {"residual_history", s.residual_history}};
}

Json to_json(const FidAvgDecomposition& d) {
  return Json{{"barycenter_part", d.barycenter_part},
              {"const_part", d.const_part},
              {"sum", d.barycenter_part + d.const_part},
              {"barycenter", to_json(d.barycenter)}};
}

Json to_json(const MmdResult& r) {
  return Json{{"value", r.value},
              {"within_ref", r.within_ref},
              {"within_gen", r.within_gen},
              {"cross", r.cross},
              {"estimator", r.estimator == MmdEstimator::vstat ? "vstat" : "ustat"}};
}

Json to_json(const PrdcResult& r) {
  return Json{{"precision", r.precision}, {"recall", r.recall}, {"density", r.density}, {"coverage", r.coverage}};
}

Json to_json(const CounterexampleReport& r) {
  return Json{{"g_hat", {{"mean", to_json(r.g_hat.mean)}, {"cov", to_json(r.g_hat.cov)}}},
              {"g_prime", {{"mean", to_json(r.g_prime.mean)}, {"cov", to_json(r.g_prime.cov)}}},
              {"u", r.u},
              {"beta", to_json(r.beta)},
              {"per_client_fid_hat", r.per_client_fid_hat},
              {"per_client_fid_prime", r.per_client_fid_prime},
              {"per_client_residuals", r.per_client_residuals},
              {"fid_all_hat", r.fid_all_hat},
              {"fid_all_prime", r.fid_all_prime},
              {"measured_gap", r.measured_gap},
              {"claimed_gap_lower_bound", r.claimed_gap_lower_bound},
              {"converged", r.converged},
              {"evaluations", r.evaluations},
              {"gap_target", r.gap_target}};
}

Json to_json(const ScoreReport& r) {
  Json j = Json::object();
  if (r.fid_avg) j["fid_avg"] = *r.fid_avg;
  if (r.fid_all) j["fid_all"] = *r.fid_all;
  if (r.kid_avg) j["kid_avg"] = *r.kid_avg;
  if (r.kid_all) j["kid_all"] = *r.kid_all;
  return j;
}

Json to_json(const ProtocolTrace& t) {
  Json messages = Json::array();
  for (const auto& m : t.messages) {
    messages.push_back(Json{{"from", m.from},
                            {"to", m.to},
                            {"kind", std::string(to_string(m.kind))},
                            {"reals", m.body.size()},
                            {"payload_bytes", m.payload_bytes}});
  }
  return Json{{"mode", std::string(to_string(t.mode))}, {"total_bytes", t.total_bytes()}, {"messages", messages}};
}

Json to_json(const RankingComparison& r) {
  return Json{{"kendall_tau", std::isnan(r.kendall_tau) ? Json(nullptr) : Json(r.kendall_tau)},
              {"concordant", r.concordant},
              {"discordant", r.discordant},
              {"ties_a", r.ties_a},
              {"ties_b", r.ties_b},
              {"argmin_a", r.argmin_a},
              {"argmin_b", r.argmin_b},
              {"spread_a", r.spread_a},
              {"spread_b", r.spread_b}};
}

Json to_json(const LogLikelihoodScores& s) {
  return Json{{"per_client", s.per_client}, {"avg", s.avg}, {"all", s.all}};
}

ClientSet load_client_set(const std::filesystem::path& path) {
  const Json doc = read_json_file(path);
  const Json entries = field<Json>(doc, "clients");
  if (!entries.is_array() || entries.empty()) throw FormatError("clients: expected a non-empty array");
  std::vector<Client> clients;
  std::size_t weighted = 0;
  for (const auto& e : entries) {
    Client c;
    c.id = field<std::string>(e, "id");
    if (e.contains("weight")) {
      c.weight = field<double>(e, "weight");
      ++weighted;
    }
    if (e.contains("embeddings")) {
      c.data = ingest(resolve(path, field<std::string>(e, "embeddings")));
    } else if (e.contains("moments")) {
      const Json& m = e.at("moments");
      c.stats = stats_from_json(m.is_string() ? read_json_file(resolve(path, m.get<std::string>())) : m);
    } else {
      throw FormatError("client '" + c.id + "' needs \"embeddings\" or \"moments\"");
    }
    clients.push_back(std::move(c));
  }
  if (weighted != 0 && weighted != clients.size()) {
    throw FormatError("clients: give a weight for every client or for none");
  }
  if (weighted == 0) {
    double total = 0.0;
    for (const auto& c : clients) total += static_cast<double>(c.data ? c.data->rows() : c.stats->n);
    for (auto& c : clients) c.weight = static_cast<double>(c.data ? c.data->rows() : c.stats->n) / total;
  }
  return ClientSet(std::move(clients));
}

Generator load_generator(const std::filesystem::path& path) {
  if (path.extension() == ".json") return stats_from_json(read_json_file(path));
  return ingest(path);
}

namespace {
GaussianClientSpec spec_from_json(const Json& j) {
  GaussianClientSpec s;
  s.id = field<std::string>(j, "id");
  s.mean = vector_from_json(field<Json>(j, "mean"));
  s.cov = matrix_from_json(field<Json>(j, "cov"));
  const auto n = field<long long>(j, "n");
  if (n < 1) throw FormatError("scenario: n must be positive");
  s.n = static_cast<std::size_t>(n);
  s.seed = j.contains("seed") ? field<std::uint64_t>(j, "seed") : 0;
  return s;
}
}  // namespace

Scenario scenario_from_json(const Json& j) {
  Scenario s;
  s.name = j.contains("name") ? field<std::string>(j, "name") : "";
  s.mode = parse_aggregation_mode(field<std::string>(j, "mode"));
  for (const auto& m : field<Json>(j, "metrics")) s.metrics.push_back(parse_metric(m.get<std::string>()));
  if (j.contains("kernel")) s.options.kernel = kernel_from_json(j.at("kernel"));
  if (j.contains("estimator")) {
    const auto e = field<std::string>(j, "estimator");
    if (e != "vstat" && e != "ustat") throw FormatError("unknown estimator '" + e + "'");
    s.options.estimator = e == "vstat" ? MmdEstimator::vstat : MmdEstimator::ustat;
  }
  for (const auto& c : field<Json>(j, "clients")) s.clients.push_back(spec_from_json(c));
  for (const auto& g : field<Json>(j, "generators")) s.generators.push_back(spec_from_json(g));
  return s;
}

ScoreTable load_score_table(const std::filesystem::path& path) {
  const Json doc = read_json_file(path);
  if (!doc.is_object()) throw FormatError("score table: expected an object of id -> score");
  ScoreTable t;
  for (const auto& [id, v] : doc.items()) {
    if (!v.is_number()) throw FormatError("score table: '" + id + "' is not a number");
    t[id] = v.get<double>();
  }
  return t;
}

}  // namespace fedeval
