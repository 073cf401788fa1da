#include "fairrec/experiments.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <random>
#include <set>

using namespace fairrec;

namespace {

// Points a*u + b*v + c in 10D for an orthonormal pair (u, v).
Matrix planted_plane(int n, std::uint64_t seed, Matrix* basis) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix q(10, 2);
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(q);
  const Matrix uv = qr.householderQ() * Matrix::Identity(10, 2);
  Vector c(10);
  for (int i = 0; i < 10; ++i) c[i] = normal(rng);
  Matrix pts(n, 10);
  for (int r = 0; r < n; ++r) {
    const double a = 3 * normal(rng), b = normal(rng);
    pts.row(r) = (a * uv.col(0) + b * uv.col(1) + c).transpose();
  }
  if (basis) *basis = uv;
  return pts;
}

}  // namespace

TEST_CASE("PCA recovers a planted plane") {
  for (std::uint64_t seed : {1, 2, 3}) {
    Matrix uv;
    const Matrix pts = planted_plane(200, seed, &uv);
    const Pca2d p = pca_2d(pts);
    CHECK(!p.rank_deficient);
    const Matrix centred = pts.rowwise() - p.mean.transpose();
    const Matrix back = p.coords * p.components;
    CHECK((centred - back).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((p.components * p.components.transpose() - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);

    const Matrix cov = centred.transpose() * centred / 199.0;
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    const double top2 = es.eigenvalues()[9] + es.eigenvalues()[8];
    CHECK(std::abs(p.eigenvalues[0] + p.eigenvalues[1] - top2) < 1e-9);
    CHECK(std::abs(p.eigenvalues[0] - es.eigenvalues()[9]) < 1e-9);
    // Same subspace as the planted basis.
    const Matrix proj = uv * uv.transpose();
    CHECK((proj * p.components.transpose() - p.components.transpose()).cwiseAbs().maxCoeff() < 1e-8);
    for (int c = 0; c < 2; ++c) {
      Eigen::Index arg = 0;
      p.components.row(c).cwiseAbs().maxCoeff(&arg);
      CHECK(p.components(c, arg) > 0);
    }
  }
}

TEST_CASE("PCA flags rank-deficient data") {
  Matrix line(20, 5);
  for (int r = 0; r < 20; ++r) line.row(r) << r, 2.0 * r, 0, -r, 1;
  const Pca2d p = pca_2d(line);
  CHECK(p.rank_deficient);
  CHECK(p.components.row(1).isZero(0));
  CHECK_THROWS_AS(pca_2d(Matrix::Zero(2, 4)), ValidationError);
}

TEST_CASE("centroid distance") {
  Matrix pts(4, 2);
  pts << -1, 0, 1, 0, 3, 3, 3, 5;
  CHECK(centroid_distance(pts, {0, 0, 1, 1}) == 5.0);
  CHECK_THROWS_AS(centroid_distance(pts, {0, 0, 0, 0}), ValidationError);
  CHECK_THROWS_AS(centroid_distance(pts, {0, 1, 2, 1}), ValidationError);
}

TEST_CASE("identical embeddings give zero centroid distance and full orientation") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  Matrix z(30, 6);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = normal(rng);
  for (int i = 0; i < 5; ++i) z.row(20 + i) = z.row(i);
  const auto r = centroid_report(z, {0, 1, 2, 3, 4}, {20, 21, 22, 23, 24});
  CHECK(r.distance < 1e-12);
  CHECK(r.orientation == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.og.rows() == 5);
}

TEST_CASE("counterfactual duplicates copy the most popular tracks") {
  const auto s = fairrec::testing::small_synth(5, 20, 40);
  const auto split = split_peek_holdout(s.graph, split_playlists(s.graph, 0.6, 0.2, 0.2, 3), 2);
  const auto idx = assign_bins(count_appearances(s.graph, split));
  const auto cf = counterfactual_duplicate(s.graph, s.features, split, idx, {5, 9});
  const auto n = static_cast<TrackId>(s.graph.num_tracks());
  CHECK(cf.graph.num_tracks() == s.graph.num_tracks() + 5);
  CHECK(cf.graph.num_edges() == s.graph.num_edges() + 5);
  const auto order = popularity_order(idx);
  for (int i = 0; i < 5; ++i) {
    const TrackId o = cf.originals[i], d = cf.duplicates[i];
    CHECK(o == order[i]);
    CHECK(d == n + i);
    CHECK(cf.features.sonic[d] == s.features.sonic[o]);
    CHECK(cf.features.genre[d] == s.features.genre[o]);
    CHECK(cf.graph.track_artist[d] == s.graph.track_artist[o]);
    CHECK(cf.graph.track_names[d] == s.graph.track_names[o] + "#cf");
    CHECK(cf.graph.track_index.at(cf.graph.track_names[d]) == d);
    REQUIRE(cf.graph.track_playlists[d].size() == 1);
    CHECK(split.split[cf.graph.track_playlists[d][0]] == Split::train);
  }
  const auto again = counterfactual_duplicate(s.graph, s.features, split, idx, {5, 9});
  CHECK(again.graph == cf.graph);
  CHECK_THROWS_AS(counterfactual_duplicate(s.graph, s.features, split, idx, {0, 9}), ConfigError);
}

TEST_CASE("artist popularity sums track counts") {
  PopularityIndex tracks = assign_bins({5, 1, 100, 0, 4});
  const auto a = artist_popularity(tracks, {0, 0, 1, 2, 2}, 3);
  CHECK(a.count == std::vector<std::int64_t>{6, 100, 4});
  CHECK(a.bin[1] == 9);
  CHECK(a.bin[0] == oracle::bin(6, 100));
}

TEST_CASE("artist neighbour popularity against brute force") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> normal;
  const int n = 25;
  Matrix emb(n, 4);
  for (Eigen::Index i = 0; i < emb.size(); ++i) emb.data()[i] = normal(rng);
  std::vector<std::int64_t> counts(n);
  for (auto& c : counts) c = 1 + static_cast<std::int64_t>(rng() % 300);
  const auto pop = assign_bins(counts);
  const auto r = artist_neighbor_popularity(emb, pop, 6);
  const Matrix s = oracle::cosine_matrix(emb);
  const int top = *std::max_element(pop.bin.begin(), pop.bin.end());
  double total = 0;
  int count = 0, tops = 0;
  for (int a = 0; a < n; ++a) {
    if (pop.bin[a] != top) continue;
    ++tops;
    std::vector<int> others;
    for (int b = 0; b < n; ++b) {
      if (b != a) others.push_back(b);
    }
    std::stable_sort(others.begin(), others.end(), [&](int x, int y) { return s(a, x) > s(a, y); });
    for (int j = 0; j < 6; ++j) {
      total += pop.bin[others[j]];
      ++count;
    }
  }
  CHECK(static_cast<int>(r.top_artists.size()) == tops);
  CHECK(r.neighbors == 6);
  CHECK(r.mean_popularity == doctest::Approx(total / count).epsilon(1e-12));
  CHECK(artist_neighbor_popularity(emb, pop, 1000).neighbors == n - 1);
}

TEST_CASE("visibility shares sum to one") {
  const auto f = fairrec::testing::metric_fixture(5);
  const auto share = visibility_by_bin(f.run, f.index);
  double total = 0;
  std::array<int, kPopularityBins> counts{};
  int items = 0;
  for (const auto& l : f.run.lists) {
    for (const auto& s : l.items) {
      ++counts[f.index.bin[s.track]];
      ++items;
    }
  }
  for (int b = 0; b < kPopularityBins; ++b) {
    total += share[b];
    CHECK(share[b] == doctest::Approx(static_cast<double>(counts[b]) / items).epsilon(1e-15));
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("gamma sweep rows match independent stage-2 runs") {
  const auto s = fairrec::testing::small_synth(7, 24, 50, 10);
  const auto split = split_peek_holdout(s.graph, split_playlists(s.graph, 0.6, 0.2, 0.2, 3), 2);
  TrainConfig c;
  c.hidden = 8;
  c.dim = 4;
  c.batch_size = 16;
  c.batches_per_epoch = 2;
  c.stage1_epochs = 2;
  c.stage2_epochs = 2;
  c.walk = {30, 2, 5};
  c.fairness.pool_size = 12;
  c.fairness.anchors = 3;
  c.lr = 0.01;
  Trainer base(s.graph, s.features, split, c);
  base.run_stage1();
  SweepInputs in;
  in.eval = {&s.graph, &s.features, &split, &base.popularity(), 0.2};
  in.playlists = split.evaluated_in(Split::test);
  in.k = 10;
  const auto rows = gamma_sweep(base, {0, 1}, in);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].gamma == 0);
  CHECK(rows[1].report.method == "gamma=1");

  c.fairness.gamma = 1;
  const auto direct = train(s.graph, s.features, split, c);
  const auto run = recommend(direct.embeddings, in.playlists, 10, "x");
  const auto report = evaluate_all(run, in.eval);
  CHECK(report.per_recall == rows[1].report.per_recall);
  CHECK(report.pct_lt == rows[1].report.pct_lt);

  const auto csv = format_sweep_csv(rows);
  CHECK(csv.rfind("gamma,recall,ndcg,artist_recall,flow,diversity,pct_lt,lt_coverage,artist_coverage\n", 0) == 0);
}
