#include "fairrec/kernels.hpp"
#include "fairrec/objective.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
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

double naive_ndcg(const std::vector<int>& ranking, const std::vector<bool>& rel, int k) {
  double dcg = 0, idcg = 0;
  int n_rel = 0;
  for (bool r : rel) n_rel += r;
  for (int i = 0; i < k && i < static_cast<int>(ranking.size()); ++i) {
    if (rel[ranking[i]]) dcg += 1.0 / std::log2(i + 2.0);
  }
  for (int i = 0; i < std::min(k, n_rel); ++i) idcg += 1.0 / std::log2(i + 2.0);
  return idcg > 0 ? dcg / idcg : 0.0;
}

std::vector<int> ranked_others(const Matrix& s, int i) {
  std::vector<int> r;
  for (int j = 0; j < s.cols(); ++j) {
    if (j != i) r.push_back(j);
  }
  std::stable_sort(r.begin(), r.end(), [&](int a, int b) { return s(i, a) > s(i, b); });
  return r;
}

}  // namespace

TEST_CASE("cosine similarity and its degenerate case") {
  Vector a(3), b(3), zero = Vector::Zero(3);
  a << 1, 0, 0;
  b << 1, 1, 0;
  CHECK(cosine_similarity(a, b) == doctest::Approx(1 / std::sqrt(2.0)));
  const auto before = degenerate_cosine_count();
  CHECK(cosine_similarity(a, zero) == 0.0);
  CHECK(degenerate_cosine_count() == before + 1);
}

TEST_CASE("apriori similarity reads only the sonic block") {
  auto f = fairrec::testing::random_features(6, 3);
  const std::vector<TrackId> pool = {0, 2, 3, 5};
  const Matrix before = apriori_similarity(pool, f).values;
  for (auto& g : f.genre) g.fill(1);
  const Matrix after = apriori_similarity(pool, f).values;
  CHECK(before == after);
  Matrix xs(4, kSonicDims);
  for (int r = 0; r < 4; ++r) xs.row(r) = f.scaled_sonic(pool[r]).transpose();
  CHECK((before - oracle::cosine_matrix(xs)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("ordering probabilities") {
  Matrix s(3, 3);
  s << 1, 0.2, 0.5, 0.2, 1, 0.1, 0.5, 0.1, 1;
  CHECK(prob_apriori(s, 0, 2, 1) == 1.0);
  CHECK(prob_apriori(s, 0, 1, 2) == 0.0);
  CHECK(prob_apriori(s, 0, 1, 1) == 0.0);
  CHECK(prob_learned(s, 0, 2, 1, 2.0) == doctest::Approx(1 / (1 + std::exp(-0.6))));
  CHECK(prob_learned(s, 0, 1, 1, 2.0) == 0.5);
  CHECK(std::isfinite(softplus(800)));
  CHECK(softplus(800) == 800);
  CHECK(sigmoid(-800) >= 0);
}

TEST_CASE("NDCG closed forms") {
  const std::vector<double> hit2 = {0, 1, 0};
  const std::vector<double> one = {1};
  CHECK(ndcg_at_k(hit2, one, 3) == 1.0 / std::log2(3.0));
  CHECK(ndcg_at_k(std::vector<double>{1, 1}, std::vector<double>{1, 1}, 2) == 1.0);
  CHECK(ndcg_at_k(std::vector<double>{0, 0}, std::vector<double>{1}, 2) == 0.0);
  CHECK(ndcg_at_k(std::vector<double>{0, 0}, std::vector<double>{}, 2) == 0.0);
  CHECK(ndcg_at_k(std::vector<TrackId>{4, 7, 9}, {7}, 3) == 1.0 / std::log2(3.0));
  CHECK_THROWS_AS(ndcg_at_k(hit2, one, 0), ConfigError);
}

TEST_CASE("delta NDCG of moving the only relevant item from rank 1 to 2") {
  const std::vector<int> ranking = {0, 1, 2};
  const std::vector<bool> rel = {true, false, false};
  CHECK(delta_ndcg_weight(ranking, rel, 0, 1, 2) == doctest::Approx(1 - 1 / std::log2(3.0)).epsilon(1e-15));
  CHECK(delta_ndcg_weight(ranking, rel, 1, 2, 2) == 0.0);
  CHECK_THROWS_AS(delta_ndcg_weight(ranking, rel, 1, 1, 2), ValidationError);
}

TEST_CASE("delta NDCG equals the recomputed swap on random rankings") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = std::uniform_int_distribution<int>(3, 15)(rng);
    const int k = std::uniform_int_distribution<int>(1, n)(rng);
    std::vector<int> ranking(n);
    std::iota(ranking.begin(), ranking.end(), 0);
    std::shuffle(ranking.begin(), ranking.end(), rng);
    std::vector<bool> rel(n);
    for (int i = 0; i < n; ++i) rel[i] = rng() % 3 == 0;
    const int u = static_cast<int>(rng() % n);
    int v = static_cast<int>(rng() % n);
    if (v == u) v = (u + 1) % n;
    auto swapped = ranking;
    std::iter_swap(std::find(swapped.begin(), swapped.end(), u), std::find(swapped.begin(), swapped.end(), v));
    const double expect = std::abs(naive_ndcg(ranking, rel, k) - naive_ndcg(swapped, rel, k));
    CHECK(delta_ndcg_weight(ranking, rel, u, v, k) == doctest::Approx(expect).epsilon(1e-13));
  }
}

TEST_CASE("fairness loss equals brute force over all triples") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = std::uniform_int_distribution<int>(3, 12)(rng);
    const Matrix sg = oracle::cosine_matrix(random_matrix(n, kSonicDims, rng()));
    const Matrix s = oracle::cosine_matrix(random_matrix(n, 4, rng()));
    const double alpha = std::uniform_real_distribution<double>(0.5, 5)(rng);
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    const int k_fair = n + static_cast<int>(rng() % 3);
    const auto plan = plan_fairness(all, sg, s, k_fair, PairWeighting::uniform);
    CHECK(plan.num_pairs() == static_cast<std::size_t>(n * (n - 1) * (n - 2)));
    const double got = fairness_loss(plan, sg, s, alpha).loss;
    CHECK(std::abs(got - oracle::fairness_all_triples(sg, s, alpha)) < 1e-9);
  }
}

TEST_CASE("plan weights are swap deltas of the learned ranking") {
  const int n = 14, k = 4;
  const Matrix sg = oracle::cosine_matrix(random_matrix(n, 9, 1));
  const Matrix s = oracle::cosine_matrix(random_matrix(n, 4, 2));
  const auto plan = plan_fairness({0, 5, 9}, sg, s, k, PairWeighting::delta_ndcg);
  REQUIRE(plan.anchors.size() == 3);
  for (const auto& ap : plan.anchors) {
    const auto apriori = ranked_others(sg, ap.anchor);
    const auto learned = ranked_others(s, ap.anchor);
    std::vector<bool> rel(n, false);
    for (int r = 0; r < k; ++r) rel[apriori[r]] = true;
    std::vector<int> cand(apriori.begin(), apriori.begin() + k);
    cand.insert(cand.end(), learned.begin(), learned.begin() + k);
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    std::size_t expected = 0;
    for (int u : cand) {
      for (int v : cand) {
        if (u == v) continue;
        const double w = delta_ndcg_weight(learned, rel, u, v, k);
        if (w == 0) continue;
        ++expected;
        const auto it = std::find_if(ap.pairs.begin(), ap.pairs.end(),
                                     [&](const FairnessPair& p) { return p.u == u && p.v == v; });
        REQUIRE(it != ap.pairs.end());
        CHECK(it->weight == doctest::Approx(w).epsilon(1e-12));
      }
    }
    CHECK(ap.pairs.size() == expected);
    for (const auto& p : ap.pairs) {
      CHECK(p.u != ap.anchor);
      CHECK(p.v != ap.anchor);
    }
  }
}

TEST_CASE("plan rejects bad anchors and tiny pools") {
  const Matrix s = Matrix::Identity(4, 4);
  CHECK_THROWS_AS(plan_fairness({0, 0}, s, s, 2, PairWeighting::uniform), ValidationError);
  CHECK_THROWS_AS(plan_fairness({4}, s, s, 2, PairWeighting::uniform), ValidationError);
  const Matrix small = Matrix::Identity(2, 2);
  CHECK_THROWS_AS(plan_fairness({0}, small, small, 2, PairWeighting::uniform), ValidationError);
}

TEST_CASE("fairness gradient with respect to similarities") {
  const int n = 8;
  const Matrix sg = oracle::cosine_matrix(random_matrix(n, 9, 5));
  Matrix s = oracle::cosine_matrix(random_matrix(n, 4, 6));
  const auto plan = plan_fairness({1, 3, 6}, sg, s, 3, PairWeighting::delta_ndcg);
  const auto value = fairness_loss(plan, sg, s, 1.7);
  const double eps = 1e-6;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      Matrix sp = s, sm = s;
      sp(i, j) += eps;
      sm(i, j) -= eps;
      const double num = (fairness_loss(plan, sg, sp, 1.7).loss - fairness_loss(plan, sg, sm, 1.7).loss) / (2 * eps);
      CHECK(value.grad(i, j) == doctest::Approx(num).epsilon(1e-6).scale(1e-6));
    }
  }
}

TEST_CASE("cosine backward agrees with central differences") {
  const Matrix z = random_matrix(6, 4, 10);
  const Matrix g = random_matrix(6, 6, 11);
  const Matrix dz = cosine_backward(z, g);
  auto f = [&](const Matrix& zz) { return (oracle::cosine_matrix(zz).array() * g.array()).sum(); };
  const double eps = 1e-6;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    Matrix zp = z, zm = z;
    zp.data()[i] += eps;
    zm.data()[i] -= eps;
    const double num = (f(zp) - f(zm)) / (2 * eps);
    CHECK(dz.data()[i] == doctest::Approx(num).epsilon(1e-7).scale(1e-7));
  }
}

TEST_CASE("fairness step gradient with frozen selection, with and without boost") {
  const int n = 10;
  const Matrix z = random_matrix(n, 4, 20);
  const Matrix sg = oracle::cosine_matrix(random_matrix(n, 9, 21));
  std::vector<TrackId> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  const auto index = assign_bins({1, 3, 9, 27, 81, 243, 2, 5, 700, 1});
  const BoostMatrix boost = boost_matrix(pool, index);
  for (bool use_boost : {false, true}) {
    FairnessConfig cfg;
    cfg.k_fair = 3;
    cfg.alpha = 1.3;
    cfg.boost = use_boost;
    const auto step = fairness_step(z, sg, {0, 4, 7}, cfg, &boost);
    auto f = [&](const Matrix& zz) {
      return fairness_step(zz, sg, {0, 4, 7}, cfg, &boost, &step.plan, &step.rescale).loss;
    };
    const double eps = 1e-6;
    double worst = 0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      Matrix zp = z, zm = z;
      zp.data()[i] += eps;
      zm.data()[i] -= eps;
      const double num = (f(zp) - f(zm)) / (2 * eps);
      const double a = step.grad_z.data()[i];
      worst = std::max(worst, std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-8}));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("boost matrix and rescale") {
  const auto index = assign_bins({1, 10, 100, 1000});
  const auto b = boost_matrix({0, 2, 3}, index);
  Matrix expect(3, 3);
  expect << 0, 6, 9, 6, 0, 3, 9, 3, 0;
  CHECK(b.values == expect);

  Matrix s(3, 3);
  s << 1, -0.5, 0.25, -0.5, 1, 0.75, 0.25, 0.75, 1;
  const Rescale r = rescale_constants(s, 1, 10);
  CHECK(r.scale * -0.5 + r.offset == doctest::Approx(1.0));
  CHECK(r.scale * 0.75 + r.offset == doctest::Approx(10.0));
  const auto boosted = apply_boost({SimilarityRole::learned, {0, 2, 3}, s}, b, r);
  CHECK(boosted.role == SimilarityRole::boosted);
  CHECK(boosted.values(0, 2) == doctest::Approx(r.scale * 0.25 + r.offset + 9));

  const auto before = degenerate_rescale_count();
  const Rescale flat = rescale_constants(Matrix::Constant(3, 3, 0.3), 1, 10);
  CHECK(flat.degenerate);
  CHECK(flat.scale == 0);
  CHECK(flat.offset == 5.5);
  CHECK(degenerate_rescale_count() == before + 1);
  CHECK_THROWS_AS(rescale_constants(s, 2, 2), ConfigError);
}

TEST_CASE("focal loss value and gradient") {
  Vector logits(5);
  logits << -3, -0.5, 0, 0.7, 4;
  const std::vector<std::uint8_t> labels = {0, 1, 1, 0, 1};
  FocalConfig cfg{2.0, 0.25};
  const auto v = focal_loss(logits, labels, cfg);
  double expect = 0;
  for (int j = 0; j < 5; ++j) {
    const double p = 1 / (1 + std::exp(-logits[j]));
    const double pt = labels[j] ? p : 1 - p;
    const double at = labels[j] ? 0.25 : 0.75;
    expect += -at * std::pow(1 - pt, 2.0) * std::log(pt);
  }
  CHECK(v.loss == doctest::Approx(expect / 5).epsilon(1e-13));
  const double eps = 1e-6;
  for (int j = 0; j < 5; ++j) {
    Vector lp = logits, lm = logits;
    lp[j] += eps;
    lm[j] -= eps;
    const double num = (focal_loss(lp, labels, cfg).loss - focal_loss(lm, labels, cfg).loss) / (2 * eps);
    CHECK(std::abs(v.grad[j] - num) < 1e-8);
  }
  Vector big(2);
  big << 1000, -1000;
  const auto extreme = focal_loss(big, {0, 1}, cfg);
  CHECK(std::isfinite(extreme.loss));
  CHECK(extreme.grad.allFinite());
  CHECK_THROWS_AS(focal_loss(Vector(), {}, cfg), ValidationError);
}

TEST_CASE("total loss") {
  CHECK(total_loss(0.5, 2.0, 0.25) == 1.0);
  CHECK(total_loss(0.5, 2.0, 0.0) == 0.5);
  CHECK_THROWS_AS(total_loss(NAN, 1, 1), RuntimeError);
}
