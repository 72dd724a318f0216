#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fedeval/counterexample.hpp"
#include "fedeval/fedsim.hpp"
#include "fedeval/frechet.hpp"
#include "fedeval/kernelmmd.hpp"
#include "fedeval/prdc.hpp"
#include "fedeval/statkit.hpp"

namespace py = pybind11;
using namespace fedeval;

namespace {

using Array = Eigen::Ref<const RowMatrix>;

EmbeddingMatrix embeddings(const Array& x) { return EmbeddingMatrix(RowMatrix(x)); }

// Clients are given as a list of (id, samples) pairs; weights default to n_i / n.
ClientSet client_set(const std::vector<std::pair<std::string, RowMatrix>>& data,
                     const std::optional<std::vector<double>>& weights) {
  if (!weights) {
    std::vector<std::pair<std::string, EmbeddingMatrix>> parts;
    for (const auto& [id, x] : data) parts.emplace_back(id, EmbeddingMatrix(x));
    return ClientSet::from_embeddings(std::move(parts));
  }
  if (weights->size() != data.size()) throw PreconditionError("one weight per client is required");
  std::vector<Client> clients;
  for (std::size_t i = 0; i < data.size(); ++i) {
    clients.push_back({data[i].first, (*weights)[i], EmbeddingMatrix(data[i].second), std::nullopt});
  }
  return ClientSet(std::move(clients));
}

KernelSpec kernel(const std::string& kind, std::optional<double> bandwidth) {
  if (kind == "polynomial") return KernelSpec::polynomial();
  if (kind == "rbf") return KernelSpec::rbf(bandwidth);
  throw FormatError("unknown kernel '" + kind + "'");
}

MmdEstimator estimator(const std::string& name) {
  if (name == "vstat") return MmdEstimator::vstat;
  if (name == "ustat") return MmdEstimator::ustat;
  throw FormatError("unknown estimator '" + name + "'");
}

py::dict stats_dict(const GaussianStats& s) {
  py::dict d;
  d["n"] = s.n;
  d["mean"] = s.mean;
  d["cov"] = s.cov;
  return d;
}

py::dict prdc_dict(const PrdcResult& r) {
  py::dict d;
  d["precision"] = r.precision;
  d["recall"] = r.recall;
  d["density"] = r.density;
  d["coverage"] = r.coverage;
  return d;
}

}  // namespace

PYBIND11_MODULE(_fedeval, m) {
  m.doc() = "Aggregated generative-model scores over multi-client reference data";

  // Translators are tried newest first, so the base class is registered first.
  const auto base = py::register_exception<Error>(m, "FedevalError", PyExc_ValueError);
  py::register_exception<CapabilityError>(m, "CapabilityError", base.ptr());
  py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  m.def("moments", [](const Array& x, bool unbiased) {
    return stats_dict(moments(embeddings(x), unbiased ? Estimator::unbiased : Estimator::population));
  }, py::arg("x"), py::arg("unbiased") = false);

  m.def("pool_moments", [](const std::vector<std::pair<std::string, RowMatrix>>& clients,
                           std::optional<std::vector<double>> weights) {
    return stats_dict(pool_moments(client_set(clients, weights)));
  }, py::arg("clients"), py::arg("weights") = py::none());

  m.def("psd_sqrt", &psd_sqrt, py::arg("a"));

  m.def("frechet_distance", [](const Eigen::VectorXd& ma, const Eigen::MatrixXd& ca, const Eigen::VectorXd& mb,
                               const Eigen::MatrixXd& cb) { return frechet_distance(ma, ca, mb, cb).value; },
        py::arg("mean_a"), py::arg("cov_a"), py::arg("mean_b"), py::arg("cov_b"));

  m.def("fid_avg", [](const std::vector<std::pair<std::string, RowMatrix>>& clients, const Eigen::VectorXd& mean,
                      const Eigen::MatrixXd& cov, std::optional<std::vector<double>> weights) {
    return fid_avg(client_set(clients, weights), mean, cov).value;
  }, py::arg("clients"), py::arg("mean"), py::arg("cov"), py::arg("weights") = py::none());

  m.def("fid_all", [](const std::vector<std::pair<std::string, RowMatrix>>& clients, const Eigen::VectorXd& mean,
                      const Eigen::MatrixXd& cov, std::optional<std::vector<double>> weights) {
    return fid_all(client_set(clients, weights), GaussianModel{mean, cov}).value;
  }, py::arg("clients"), py::arg("mean"), py::arg("cov"), py::arg("weights") = py::none());

  m.def("barycenter", [](const std::vector<std::pair<std::string, RowMatrix>>& clients,
                         std::optional<std::vector<double>> weights, double tol, int max_iter) {
    const auto s = barycenter(client_set(clients, weights), {tol, max_iter});
    py::dict d;
    d["mean"] = s.mean;
    d["cov"] = s.cov;
    d["iterations"] = s.iterations;
    d["residual"] = s.residual;
    return d;
  }, py::arg("clients"), py::arg("weights") = py::none(), py::arg("tol") = 1e-10, py::arg("max_iter") = 1000);

  m.def("fid_avg_decomposition", [](const std::vector<std::pair<std::string, RowMatrix>>& clients,
                                    const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                    std::optional<std::vector<double>> weights) {
    const auto r = fid_avg_decomposition(client_set(clients, weights), mean, cov);
    return std::make_pair(r.barycenter_part, r.const_part);
  }, py::arg("clients"), py::arg("mean"), py::arg("cov"), py::arg("weights") = py::none());

  m.def("mmd2", [](const Array& ref, const Array& gen, const std::string& k, std::optional<double> bandwidth,
                   const std::string& est) {
    return mmd2(kernel(k, bandwidth), embeddings(ref), embeddings(gen), estimator(est)).value;
  }, py::arg("ref"), py::arg("gen"), py::arg("kernel") = "polynomial", py::arg("sigma") = py::none(),
        py::arg("estimator") = "vstat");

  m.def("kid_avg", [](const std::vector<std::pair<std::string, RowMatrix>>& clients, const Array& gen,
                      const std::string& k, std::optional<double> bandwidth, const std::string& est) {
    return kid_avg(client_set(clients, std::nullopt), embeddings(gen), kernel(k, bandwidth), estimator(est)).value;
  }, py::arg("clients"), py::arg("gen"), py::arg("kernel") = "polynomial", py::arg("sigma") = py::none(),
        py::arg("estimator") = "vstat");

  m.def("kid_all", [](const std::vector<std::pair<std::string, RowMatrix>>& clients, const Array& gen,
                      const std::string& k, std::optional<double> bandwidth, const std::string& est) {
    return kid_all(client_set(clients, std::nullopt), embeddings(gen), kernel(k, bandwidth), estimator(est));
  }, py::arg("clients"), py::arg("gen"), py::arg("kernel") = "polynomial", py::arg("sigma") = py::none(),
        py::arg("estimator") = "vstat");

  m.def("kid_gap", [](const std::vector<std::pair<std::string, RowMatrix>>& clients, const std::string& k,
                      std::optional<double> bandwidth) {
    return kid_gap(client_set(clients, std::nullopt), kernel(k, bandwidth));
  }, py::arg("clients"), py::arg("kernel") = "polynomial", py::arg("sigma") = py::none());

  m.def("knn_radii", [](const Array& x, std::size_t k) { return knn_radii(embeddings(x), k); }, py::arg("x"),
        py::arg("k") = kDefaultPrdcNeighbors);

  m.def("prdc", [](const Array& ref, const Array& gen, std::size_t k) {
    return prdc_dict(prdc_scores(embeddings(ref), embeddings(gen), k));
  }, py::arg("ref"), py::arg("gen"), py::arg("k") = kDefaultPrdcNeighbors);

  m.def("construct_counterexample", [](const std::vector<Eigen::VectorXd>& means, const std::vector<Eigen::MatrixXd>& covs,
                                       const std::vector<double>& weights) {
    if (means.size() != covs.size() || means.size() != weights.size()) {
      throw PreconditionError("means, covs and weights must have the same length");
    }
    std::vector<Client> clients;
    for (std::size_t i = 0; i < means.size(); ++i) {
      clients.push_back({"c" + std::to_string(i), weights[i], std::nullopt, GaussianStats{1, means[i], covs[i]}});
    }
    const auto r = construct_counterexample(ClientSet(std::move(clients)));
    py::dict d;
    d["u"] = r.u;
    d["beta"] = r.beta;
    d["g_prime_mean"] = r.g_prime.mean;
    d["g_prime_cov"] = r.g_prime.cov;
    d["per_client_residuals"] = r.per_client_residuals;
    d["fid_all_hat"] = r.fid_all_hat;
    d["fid_all_prime"] = r.fid_all_prime;
    d["measured_gap"] = r.measured_gap;
    return d;
  }, py::arg("means"), py::arg("covs"), py::arg("weights"));

  m.def("run_round", [](const std::vector<std::pair<std::string, RowMatrix>>& clients, const Array& gen,
                        const std::string& mode, const std::vector<std::string>& metrics) {
    std::vector<Metric> parsed;
    for (const auto& name : metrics) parsed.push_back(parse_metric(name));
    const auto r = run_round(client_set(clients, std::nullopt), embeddings(gen), parse_aggregation_mode(mode), parsed);
    py::dict scores;
    if (r.scores.fid_avg) scores["fid_avg"] = *r.scores.fid_avg;
    if (r.scores.fid_all) scores["fid_all"] = *r.scores.fid_all;
    if (r.scores.kid_avg) scores["kid_avg"] = *r.scores.kid_avg;
    if (r.scores.kid_all) scores["kid_all"] = *r.scores.kid_all;
    py::dict d;
    d["scores"] = scores;
    d["total_bytes"] = r.trace.total_bytes();
    d["messages"] = r.trace.messages.size();
    return d;
  }, py::arg("clients"), py::arg("gen"), py::arg("mode"), py::arg("metrics"));

  m.def("toy_mixture_sweep", [](const std::vector<double>& grid, std::size_t n, std::uint64_t seed) {
    py::list rows;
    for (const auto& r : toy_mixture_sweep(grid, n, seed)) {
      py::dict d;
      d["var_x"] = r.var_x;
      d["fd_avg"] = r.fd_avg;
      d["fd_all"] = r.fd_all;
      d["kd_avg"] = r.kd_avg;
      d["kd_all"] = r.kd_all;
      d["fd_avg_sampled"] = r.fd_avg_sampled;
      d["fd_all_sampled"] = r.fd_all_sampled;
      rows.append(d);
    }
    return rows;
  }, py::arg("grid"), py::arg("n_per_client") = 1000, py::arg("seed") = 0);

  m.def("compare_rankings", [](const ScoreTable& a, const ScoreTable& b) {
    const auto r = compare_rankings(a, b);
    py::dict d;
    d["kendall_tau"] = r.kendall_tau;
    d["argmin_a"] = r.argmin_a;
    d["argmin_b"] = r.argmin_b;
    d["spread_a"] = r.spread_a;
    d["spread_b"] = r.spread_b;
    return d;
  }, py::arg("a"), py::arg("b"));
}
