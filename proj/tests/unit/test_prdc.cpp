#include <random>

#include "doctest.h"
#include "fedeval/prdc.hpp"
#include "oracles.hpp"

using namespace fedeval;

namespace {

EmbeddingMatrix line(std::initializer_list<double> v) {
  RowMatrix m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return EmbeddingMatrix(std::move(m));
}

void check_bounds(const PrdcResult& r) {
  CHECK(r.precision >= 0.0);
  CHECK(r.precision <= 1.0);
  CHECK(r.recall >= 0.0);
  CHECK(r.recall <= 1.0);
  CHECK(r.coverage >= 0.0);
  CHECK(r.coverage <= 1.0);
  CHECK(r.density >= 0.0);
}

}  // namespace

TEST_CASE("knn radii") {
  CHECK(knn_radii(line({0, 1, 3}), 1) == std::vector<double>{1, 1, 2});
  CHECK(knn_radii(line({0, 1, 3}), 2) == std::vector<double>{3, 2, 3});
  CHECK(knn_radii(line({4, 4}), 1) == std::vector<double>{0, 0});
  CHECK_THROWS_AS(knn_radii(line({0, 1}), 2), PreconditionError);
  CHECK_THROWS_AS(knn_radii(line({0, 1}), 0), PreconditionError);

  std::mt19937_64 rng(50);
  const auto x = oracle::random_embeddings(40, 3, rng);
  for (std::size_t k : {1u, 3u, 7u}) CHECK(knn_radii(x, k) == oracle::sorted_radii(x, k));
}

TEST_CASE("prdc one-dimensional fixture") {
  // ref radii (k=1) are [1, 1, 1]; 0.1 lies in the balls of 0 and 1, 10 in none.
  const auto r = prdc_scores(line({0, 1, 2}), line({0.1, 10}), 1);
  CHECK(r.precision == 0.5);
  CHECK(r.recall == 1.0);
  CHECK(r.density == 1.0);
  CHECK(r.coverage == 2.0 / 3.0);
}

TEST_CASE("prdc trivial cases") {
  std::mt19937_64 rng(51);
  const auto x = oracle::random_embeddings(30, 2, rng);
  const auto same = prdc_scores(x, x, 5);
  CHECK(same.precision == 1.0);
  CHECK(same.recall == 1.0);
  CHECK(same.coverage == 1.0);
  CHECK(same.density >= 1.0);

  const auto far = oracle::random_embeddings(30, 2, rng, 1e3);
  const auto disjoint = prdc_scores(x, far, 5);
  CHECK(disjoint.precision == 0.0);
  CHECK(disjoint.recall == 0.0);
  CHECK(disjoint.density == 0.0);
  CHECK(disjoint.coverage == 0.0);

  CHECK_THROWS_AS(prdc_scores(x, line({0, 1, 2}), 1), PreconditionError);
  CHECK_THROWS_AS(prdc_scores(line({0, 1}), line({0, 1, 2}), 2), PreconditionError);
}

TEST_CASE("prdc against the explicit definition") {
  std::mt19937_64 rng(52);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + trial % 4;
    const std::size_t k = 1 + trial % 5;
    const auto ref = oracle::random_embeddings(k + 5 + trial % 20, d, rng);
    const auto gen = oracle::random_embeddings(k + 3 + trial % 15, d, rng, 0.05 * (trial % 10), 1.0 + 0.1 * (trial % 3));
    const auto r = prdc_scores(ref, gen, k);
    const auto o = oracle::naive_prdc(ref, gen, k);
    CHECK(r.precision == o.precision);
    CHECK(r.recall == o.recall);
    CHECK(r.density == doctest::Approx(o.density).epsilon(1e-15));
    CHECK(r.coverage == o.coverage);
    check_bounds(r);
    const auto dup = prdc_scores(ref, ref, k);
    CHECK(dup.precision == 1.0);
    CHECK(dup.recall == 1.0);
    CHECK(dup.coverage == 1.0);
  }
}

TEST_CASE("adding a sample inside a reference ball") {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ref = oracle::random_embeddings(20, 2, rng);
    const auto gen = oracle::random_embeddings(12, 2, rng, 1.5);
    const std::size_t k = 3;
    // A copy of a reference point sits inside its own ball.
    RowMatrix grown(gen.rows() + 1, 2);
    grown.topRows(static_cast<Eigen::Index>(gen.rows())) = gen.data();
    grown.row(static_cast<Eigen::Index>(gen.rows())) = ref.row(std::size_t(trial));
    const EmbeddingMatrix gen2(std::move(grown));
    const auto before = prdc_scores(ref, gen, k);
    const auto after = prdc_scores(ref, gen2, k);
    CHECK(after.precision * double(gen2.rows()) >= before.precision * double(gen.rows()));
    CHECK(after.coverage >= before.coverage);
  }
}

TEST_CASE("prdc aggregation") {
  std::mt19937_64 rng(54);
  const auto set = oracle::random_client_data(3, 2, 8, 15, rng);
  const auto gen = oracle::random_embeddings(20, 2, rng, 0.3);
  const auto agg = prdc_aggregate(set, gen, 2);
  REQUIRE(agg.per_client.size() == 3);
  double precision = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto r = prdc_scores(set.embeddings(i), gen, 2);
    CHECK(agg.per_client[i].density == r.density);
    precision += set[i].weight * r.precision;
  }
  CHECK(agg.avg.precision == doctest::Approx(precision).epsilon(1e-14));
  const auto all = prdc_scores(set.pooled_embeddings(), gen, 2);
  CHECK(agg.all.recall == all.recall);
  CHECK(agg.all.coverage == all.coverage);
}
