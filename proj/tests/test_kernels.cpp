#include "fairrec/kernels.hpp"
#include "support.hpp"

#include <doctest.h>
#include <omp.h>

#include <numeric>
#include <random>

using namespace fairrec;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

// Runs f with 1 and with 4 threads and returns both results.
template <class F>
auto with_threads(F f) {
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  auto one = f();
  omp_set_num_threads(4);
  auto four = f();
  omp_set_num_threads(saved);
  return std::make_pair(one, four);
}

}  // namespace

TEST_CASE("aggregate layer: parallel equals serial and ignores thread count") {
  const auto s = fairrec::testing::small_synth(2, 15, 40);
  const auto nb = build_neighbor_table(s.graph, {40, 2, 5}, 1);
  const Matrix prev = random_matrix(40, 6, 3);
  const Matrix w = random_matrix(4, 12, 4);
  const Vector b = random_matrix(4, 1, 5).col(0);
  std::vector<TrackId> targets = {0, 7, 3, 39, 12};
  const auto ref = kernels::serial::aggregate_layer(prev, {}, targets, nb, w, b);
  const auto [one, four] = with_threads([&] { return kernels::aggregate_layer(prev, {}, targets, nb, w, b); });
  CHECK(one.pre == four.pre);
  CHECK(one.act == four.act);
  CHECK((one.pre - ref.pre).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((one.agg - ref.agg).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(one.act == one.pre.cwiseMax(0.0));
}

TEST_CASE("aggregate layer with an explicit row map") {
  const auto s = fairrec::testing::small_synth(2, 15, 40);
  const auto nb = build_neighbor_table(s.graph, {40, 2, 5}, 1);
  const Matrix full = random_matrix(40, 3, 8);
  std::vector<int> rows(40);
  std::iota(rows.rbegin(), rows.rend(), 0);  // track t lives in row 39 - t
  Matrix reversed(40, 3);
  for (int t = 0; t < 40; ++t) reversed.row(rows[t]) = full.row(t);
  const Matrix w = random_matrix(2, 6, 9);
  const Vector b = Vector::Zero(2);
  const std::vector<TrackId> targets = {1, 2, 30};
  const auto a = kernels::aggregate_layer(full, {}, targets, nb, w, b);
  const auto c = kernels::aggregate_layer(reversed, rows, targets, nb, w, b);
  CHECK((a.pre - c.pre).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("pairwise cosine: parallel equals serial") {
  Matrix z = random_matrix(33, 5, 11);
  z.row(4).setZero();
  const Matrix ref = kernels::serial::pairwise_cosine(z);
  const auto [one, four] = with_threads([&] { return kernels::pairwise_cosine(z); });
  CHECK(one == four);
  CHECK((one - ref).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(one.row(4).isZero(0));
  for (int i = 0; i < 33; ++i) {
    if (i != 4) CHECK(one(i, i) == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("fairness terms: parallel equals serial") {
  const int n = 20;
  const Matrix sg = kernels::serial::pairwise_cosine(random_matrix(n, 9, 1));
  const Matrix s = kernels::serial::pairwise_cosine(random_matrix(n, 4, 2));
  for (auto weighting : {PairWeighting::uniform, PairWeighting::delta_ndcg}) {
    const auto plan = plan_fairness({0, 3, 8, 11, 19}, sg, s, 6, weighting);
    Matrix g_ref = Matrix::Zero(n, n);
    const auto ref = kernels::serial::fairness_terms(plan, sg, s, 2.0, g_ref);
    const auto [one, four] = with_threads([&] {
      Matrix g = Matrix::Zero(n, n);
      auto terms = kernels::fairness_terms(plan, sg, s, 2.0, g);
      return std::make_pair(terms, g);
    });
    CHECK(one == four);
    REQUIRE(one.first.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(one.first[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    CHECK((one.second - g_ref).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("top-k cosine: partial selection equals full sort") {
  Matrix catalog = random_matrix(500, 8, 21);
  catalog.row(17).setZero();
  catalog.row(40) = catalog.row(41);  // exact tie, broken by id
  const Matrix queries = random_matrix(9, 8, 22);
  std::vector<std::vector<TrackId>> exclude(9);
  exclude[0] = {1, 2, 3};
  exclude[5] = {41};
  for (int k : {1, 10, 100, 500}) {
    const auto ref = kernels::serial::topk_cosine(catalog, queries, exclude, k);
    const auto [one, four] = with_threads([&] { return kernels::topk_cosine(catalog, queries, exclude, k); });
    CHECK(one == four);
    CHECK(one == ref);
    for (std::size_t q = 0; q < one.size(); ++q) {
      CHECK(one[q].size() == std::min<std::size_t>(k, 500 - exclude[q].size()));
      for (std::size_t r = 1; r < one[q].size(); ++r) {
        const auto& a = one[q][r - 1];
        const auto& b = one[q][r];
        CHECK((a.score > b.score || (a.score == b.score && a.track < b.track)));
      }
      for (const auto& item : one[q]) {
        CHECK(std::find(exclude[q].begin(), exclude[q].end(), item.track) == exclude[q].end());
      }
    }
  }
}
