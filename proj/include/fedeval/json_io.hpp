#pragma once

// JSON encodings of the library's inputs and results.

#include <filesystem>
#include <string_view>

#include "json.hpp"

#include "fedeval/counterexample.hpp"
#include "fedeval/fedsim.hpp"
#include "fedeval/frechet.hpp"
#include "fedeval/kernelmmd.hpp"
#include "fedeval/prdc.hpp"
#include "fedeval/statkit.hpp"

namespace fedeval {

using Json = nlohmann::ordered_json;

Json read_json_file(const std::filesystem::path& path);

Json to_json(const Eigen::VectorXd& v);
Json to_json(const Eigen::MatrixXd& m);
Eigen::VectorXd vector_from_json(const Json& j);
Eigen::MatrixXd matrix_from_json(const Json& j);

/// {"n", "mean", "cov", "second_moment"}; on input "second_moment" is
/// optional and checked against cov + mu mu^T when present.
Json to_json(const GaussianStats& s);
GaussianStats stats_from_json(const Json& j);

Json to_json(const KernelSpec& spec);
KernelSpec kernel_from_json(const Json& j);
/// Accepts either inline JSON text or a path to a JSON file.
KernelSpec parse_kernel_argument(std::string_view text);

Json to_json(const FrechetResult& r);
Json to_json(const BarycenterSolution& s);
Json to_json(const FidAvgDecomposition& d);
Json to_json(const MmdResult& r);
Json to_json(const PrdcResult& r);
Json to_json(const CounterexampleReport& r);
Json to_json(const ScoreReport& r);
Json to_json(const ProtocolTrace& t);
Json to_json(const RankingComparison& r);
Json to_json(const LogLikelihoodScores& s);

/// {"clients": [{"id", "weight"?, "embeddings": path | "moments": path-or-object}]}.
/// Paths are relative to the JSON file. Weights are either given for every
/// client or for none (then n_i / n).
ClientSet load_client_set(const std::filesystem::path& path);

/// Moments JSON when the extension is ".json", otherwise an embedding file.
Generator load_generator(const std::filesystem::path& path);

/// {"name", "mode", "metrics", "kernel"?, "estimator"?, "clients": [spec],
/// "generators": [spec]} with spec = {"id", "mean", "cov", "n", "seed"}.
Scenario scenario_from_json(const Json& j);

/// {"generator id": score, ...}
ScoreTable load_score_table(const std::filesystem::path& path);

}  // namespace fedeval
