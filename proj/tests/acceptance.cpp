// Runs the acceptance checks and prints one PASS/FAIL line per criterion.

#include "fairrec/experiments.hpp"
#include "fairrec/io.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <Eigen/Eigenvalues>
#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using namespace fairrec;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v) { return io::format_double(v); }

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  SynthSpec spec;
  spec.playlists = 10;
  spec.tracks = 30;
  spec.artists = 8;
  spec.clusters = 3;
  spec.min_len = 4;
  spec.max_len = 8;
  const SyntheticData s = generate_synthetic(spec, 17);
  const SplitAssignment split = split_peek_holdout(s.graph, split_playlists(s.graph, 0.6, 0.2, 0.2, 17), 2);
  double worst[3] = {0, 0, 0};
  for (bool boost : {false, true}) {
    TrainConfig tc;
    tc.seed = 17;
    tc.hidden = 8;
    tc.dim = 4;
    tc.batch_size = 8;
    tc.negatives = 3;
    tc.walk = {50, 2, 6};
    tc.fairness.pool_size = 12;
    tc.fairness.anchors = 4;
    tc.fairness.k_fair = 4;
    tc.fairness.boost = boost;
    const Trainer t(s.graph, s.features, split, tc);
    for (long long step : {0LL, 1LL}) {
      Trainer::FrozenSelection frozen;
      const ParamObjective utility = [&](const EncoderParams& p, EncoderGrads* g) {
        return t.batch_loss(step, 0.0, p, g).total;
      };
      // The fairness gradient alone is the total at gamma = 1 minus the utility part.
      const ParamObjective fairness = [&](const EncoderParams& p, EncoderGrads* g) {
        EncoderGrads g1, g0;
        const auto l = t.batch_loss(step, 1.0, p, g ? &g1 : nullptr, &frozen);
        if (g) {
          t.batch_loss(step, 0.0, p, &g0);
          *g = g1;
          auto out = g->blocks();
          const auto sub = g0.blocks();
          for (std::size_t b = 0; b < out.size(); ++b) {
            for (std::size_t i = 0; i < out[b].size(); ++i) out[b][i] -= sub[b][i];
          }
        }
        return l.fairness;
      };
      const ParamObjective total = [&](const EncoderParams& p, EncoderGrads* g) {
        return t.batch_loss(step, 0.8, p, g, &frozen).total;
      };
      const ParamObjective* objs[3] = {&utility, &fairness, &total};
      for (int o = 0; o < 3; ++o) {
        worst[o] = std::max(worst[o], gradient_check(t.params(), *objs[o]).max_rel_error);
      }
    }
  }
  const double secs = seconds_since(t0);
  const bool ok = worst[0] < 1e-5 && worst[1] < 1e-5 && worst[2] < 1e-5 && secs < 30;
  return {ok, "max rel error utility " + num(worst[0]) + ", fairness " + num(worst[1]) + ", total " +
                  num(worst[2]) + " in " + num(secs) + " s"};
}

Outcome fairness_oracle() {
  std::mt19937_64 rng(2);
  double worst = 0;
  int trials = 0;
  for (int n = 3; n <= 12; ++n) {
    for (int rep = 0; rep < 20; ++rep, ++trials) {
      const Matrix sg = oracle::cosine_matrix(random_matrix(n, kSonicDims, rng));
      const Matrix s = oracle::cosine_matrix(random_matrix(n, 4, rng));
      const double alpha = std::uniform_real_distribution<double>(0.25, 4)(rng);
      std::vector<int> anchors(n);
      std::iota(anchors.begin(), anchors.end(), 0);
      const auto plan = plan_fairness(anchors, sg, s, n + rep % 3, PairWeighting::uniform);
      const double got = fairness_loss(plan, sg, s, alpha).loss;
      worst = std::max(worst, std::abs(got - oracle::fairness_all_triples(sg, s, alpha)));
    }
  }
  return {worst < 1e-9, std::to_string(trials) + " pools of 3..12 tracks, max abs diff " + num(worst)};
}

Outcome binning() {
  std::mt19937_64 rng(3);
  int mismatches = 0, non_monotone = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::int64_t cap = std::int64_t{1} << std::uniform_int_distribution<int>(0, 24)(rng);
    std::vector<std::int64_t> counts(std::uniform_int_distribution<int>(1, 200)(rng));
    for (auto& c : counts) c = std::uniform_int_distribution<std::int64_t>(0, cap)(rng);
    counts[rng() % counts.size()] = std::max<std::int64_t>(1, counts[0]);
    const auto idx = assign_bins(counts);
    const auto a_max = *std::max_element(counts.begin(), counts.end());
    std::vector<std::size_t> order(counts.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return counts[a] < counts[b]; });
    for (std::size_t i = 0; i < counts.size(); ++i) {
      mismatches += idx.bin[i] != oracle::bin(counts[i], a_max);
      if (i > 0) non_monotone += idx.bin[order[i]] < idx.bin[order[i - 1]];
    }
  }
  return {mismatches == 0 && non_monotone == 0,
          "1000 vectors, " + std::to_string(mismatches) + " mismatches, " + std::to_string(non_monotone) +
              " monotonicity violations"};
}

Outcome metrics() {
  double worst = 0;
  int playlists = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto f = fairrec::testing::metric_fixture(seed, 5 + static_cast<int>(seed % 10));
    const auto& g = f.data.graph;
    const auto h = holdouts_for(f.run, f.split);
    const auto lt = long_tail_set(f.index, 0.2);
    const auto r = evaluate_all(f.run, {&g, &f.data.features, &f.split, &f.index, 0.2});
    std::vector<std::vector<TrackId>> lists;
    double sums[6] = {0, 0, 0, 0, 0, 0};
    for (std::size_t i = 0; i < f.run.lists.size(); ++i) {
      const auto recs = fairrec::testing::tracks_of(f.run.lists[i]);
      lists.push_back(recs);
      const double o[6] = {oracle::recall(recs, h[i]), oracle::ndcg(recs, h[i], f.run.k),
                           oracle::artist_recall(recs, h[i], g.track_artist), oracle::flow(recs, f.data.features),
                           oracle::diversity(recs, g.track_artist), oracle::pct_lt(recs, lt)};
      const double got[6] = {r.per_recall[i], r.per_ndcg[i], r.per_artist_recall[i],
                             r.per_flow[i],   r.per_diversity[i], r.per_pct_lt[i]};
      for (int m = 0; m < 6; ++m) {
        worst = std::max(worst, std::abs(got[m] - o[m]));
        sums[m] += o[m];
      }
    }
    const double n = static_cast<double>(lists.size());
    playlists += static_cast<int>(lists.size());
    const double agg[6] = {r.recall, r.ndcg, r.artist_recall, r.flow, r.diversity, r.pct_lt};
    for (int m = 0; m < 6; ++m) worst = std::max(worst, std::abs(agg[m] - sums[m] / n));
    worst = std::max(worst, std::abs(r.lt_coverage - oracle::lt_coverage(lists, lt)));
    worst = std::max(worst, std::abs(r.artist_coverage - oracle::artist_coverage(lists, g.track_artist, g.num_artists())));
  }
  const std::vector<Scored> hit2 = {{9, 0.9}, {1, 0.8}, {7, 0.7}};
  const double nd = ndcg_one(hit2, {1}, 3);
  const bool exact = nd == 1.0 / std::log2(3.0);
  return {worst <= 1e-12 && exact, "20 fixtures, " + std::to_string(playlists) + " playlists, max abs diff " +
                                       num(worst) + "; rank-2 NDCG " + num(nd) + (exact ? " exact" : " inexact")};
}

Outcome counterfactual() {
  int wins = 0;
  double slowest = 0;
  std::ostringstream detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto t0 = std::chrono::steady_clock::now();
    const SyntheticData d = generate_synthetic(SynthSpec{}, seed);
    const auto split = split_peek_holdout(d.graph, split_playlists(d.graph, 0.8, 0.1, 0.1, seed), 5);
    const auto pop = assign_bins(count_appearances(d.graph, split));
    const auto cf = counterfactual_duplicate(d.graph, d.features, split, pop, {20, seed});
    TrainConfig tc;
    tc.seed = seed;
    Trainer base(cf.graph, cf.features, cf.split, tc);
    base.run_stage1();
    double dist[2];
    for (int i = 0; i < 2; ++i) {
      Trainer t = base;
      t.run_stage(2, tc.stage2_epochs, i == 0 ? 0.0 : 1.0);
      dist[i] = centroid_report(t.embeddings(), cf.originals, cf.duplicates).distance;
    }
    wins += dist[1] < dist[0];
    slowest = std::max(slowest, seconds_since(t0));
    detail << (seed > 1 ? "; " : "") << "seed " << seed << " " << num(dist[0]) << " -> " << num(dist[1]);
  }
  return {wins >= 4 && slowest < 300, std::to_string(wins) + "/5 seeds closer at gamma 1 (" + detail.str() +
                                          "), slowest seed " + num(slowest) + " s"};
}

Outcome directional() {
  int wins = 0;
  std::ostringstream detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthSpec spec;
    spec.playlists = 200;
    spec.skew = 1.5;
    const SyntheticData d = generate_synthetic(spec, seed);
    const auto split = split_peek_holdout(d.graph, split_playlists(d.graph, 0.8, 0.1, 0.1, seed), 5);
    TrainConfig tc;
    tc.seed = seed;
    tc.fairness.boost = true;
    Trainer base(d.graph, d.features, split, tc);
    base.run_stage1();
    const auto playlists = split.evaluated_in(Split::test);
    const EvalInputs in{&d.graph, &d.features, &split, &base.popularity(), 0.2};
    EvalReport r[2];
    for (int i = 0; i < 2; ++i) {
      Trainer t = base;
      t.run_stage(2, tc.stage2_epochs, i == 0 ? 0.0 : 1.0);
      r[i] = evaluate_all(recommend(t.embeddings(), playlists, 100, i == 0 ? "pinsage" : "boost"), in);
    }
    const bool win = r[1].pct_lt >= r[0].pct_lt && r[1].artist_coverage >= r[0].artist_coverage;
    wins += win;
    detail << (seed > 1 ? "; " : "") << "seed " << seed << " %LT " << num(r[0].pct_lt) << " -> " << num(r[1].pct_lt)
           << ", artist cvg " << num(r[0].artist_coverage) << " -> " << num(r[1].artist_coverage);
  }
  return {wins >= 4, std::to_string(wins) + "/5 seeds (" + detail.str() + ")"};
}

Outcome mostpop() {
  int checked = 0, violations = 0, skipped = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (int k : {5, 10, 20, 40}) {
      const SyntheticData d = generate_synthetic(SynthSpec{}, seed);
      const auto split = split_peek_holdout(d.graph, split_playlists(d.graph, 0.8, 0.1, 0.1, seed), 5);
      const auto pop = assign_bins(count_appearances(d.graph, split));
      const auto lt = long_tail_set(pop, 0.2);
      const auto run = mostpop_baseline(pop, split.evaluated_in(Split::test), k);
      bool inside = true;
      for (const auto& l : run.lists) {
        for (const auto& s : l.items) inside = inside && !lt[s.track];
      }
      if (!inside) {
        ++skipped;
        continue;
      }
      ++checked;
      const auto r = evaluate_all(run, {&d.graph, &d.features, &split, &pop, 0.2});
      violations += !(r.pct_lt == 0.0 && r.lt_coverage == 0.0);
    }
  }
  return {checked > 0 && violations == 0, std::to_string(checked) + " runs with top-k inside the short head, " +
                                              std::to_string(violations) + " with non-zero %LT or LT coverage (" +
                                              std::to_string(skipped) + " runs reach past the short head)"};
}

Outcome wilcoxon() {
  std::mt19937_64 rng(8);
  double worst = 0;
  int trials = 0, asymmetric = 0;
  while (trials < 500) {
    const int n = 6 + static_cast<int>(rng() % 7);
    std::vector<double> a(n), b(n);
    const bool grid = trials % 2 == 0;  // integer grid gives ties
    for (int i = 0; i < n; ++i) {
      a[i] = grid ? static_cast<double>(rng() % 6) : std::normal_distribution<double>(0.3, 1)(rng);
      b[i] = grid ? static_cast<double>(rng() % 6) : std::normal_distribution<double>(0, 1)(rng);
    }
    int nonzero = 0;
    for (int i = 0; i < n; ++i) nonzero += a[i] != b[i];
    if (nonzero < 6) continue;
    ++trials;
    const auto r = wilcoxon_signed_rank(a, b);
    worst = std::max(worst, std::abs(r.p_value - oracle::wilcoxon_enumerated(a, b)));
    asymmetric += r.p_value != wilcoxon_signed_rank(b, a).p_value || !r.exact;
  }
  return {worst < 1e-12 && asymmetric == 0, std::to_string(trials) + " samples, max p diff " + num(worst) + ", " +
                                                std::to_string(asymmetric) + " asymmetric"};
}

Outcome pca() {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal;
  double residual = 0, variance_gap = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix basis = Eigen::HouseholderQR<Matrix>(random_matrix(10, 2, rng)).householderQ() * Matrix::Identity(10, 2);
    const Vector offset = random_matrix(10, 1, rng).col(0);
    const int n = 50 + 30 * trial;
    Matrix pts(n, 10);
    for (int r = 0; r < n; ++r) {
      pts.row(r) = (4 * normal(rng) * basis.col(0) + normal(rng) * basis.col(1) + offset).transpose();
    }
    const Pca2d p = pca_2d(pts);
    const Matrix centred = pts.rowwise() - pts.colwise().mean();
    residual = std::max(residual, (centred - p.coords * p.components).cwiseAbs().maxCoeff());
    const double explained = p.coords.squaredNorm() / (n - 1);
    Eigen::SelfAdjointEigenSolver<Matrix> es(centred.transpose() * centred / (n - 1));
    variance_gap = std::max(variance_gap, std::abs(explained - es.eigenvalues()[9] - es.eigenvalues()[8]));
  }
  return {residual < 1e-8 && variance_gap < 1e-9,
          "10 planted planes, max residual " + num(residual) + ", explained variance gap " + num(variance_gap)};
}

int cli(const std::string& args) {
  const std::string cmd = std::string(FAIRREC_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
  const fs::path dir = fs::current_path() / "acceptance_determinism";
  fs::remove_all(dir);
  const std::string c = " --data " + (dir / "data").string() + " --out " + (dir / "out").string() +
                        " --seed 11 --stage1_epochs 3 --stage2_epochs 3 --gamma 1 --boost true --k 50";
  if (cli("synth" + c) != 0) return {false, "synth failed"};
  std::string reports[2];
  for (auto& report : reports) {
    fs::remove_all(dir / "out");
    if (cli("train" + c) != 0 || cli("recommend" + c) != 0 || cli("evaluate" + c) != 0) {
      return {false, "pipeline failed"};
    }
    report = io::read_file(dir / "out" / "report.json");
  }
  const bool same = reports[0] == reports[1] && !reports[0].empty();
  return {same, std::string("report.json ") + (same ? "byte-identical" : "differs") + " across two runs (" +
                    std::to_string(reports[0].size()) + " bytes)"};
}

Outcome boost_isolation() {
  const fs::path dir = fs::current_path() / "acceptance_isolation";
  fs::remove_all(dir);
  const std::string c = " --data " + (dir / "data").string() + " --out " + (dir / "out").string() +
                        " --seed 12 --stage1_epochs 2 --stage2_epochs 2 --gamma 1 --k 50";
  if (cli("synth" + c) != 0 || cli("train" + c + " --boost true") != 0) return {false, "training failed"};
  const std::string ckpt = " --checkpoint " + (dir / "out" / "model.bin").string();
  std::string runs[2];
  for (int i = 0; i < 2; ++i) {
    if (cli("recommend" + c + ckpt + (i == 0 ? " --boost false" : " --boost true")) != 0) {
      return {false, "recommend failed"};
    }
    runs[i] = io::read_file(dir / "out" / "run.csv");
  }

  // Same check in-process: identical parameters, boost flag flipped.
  const SyntheticData d = fairrec::testing::small_synth(12, 20, 50, 10);
  const auto split = split_peek_holdout(d.graph, split_playlists(d.graph, 0.6, 0.2, 0.2, 12), 3);
  TrainConfig tc;
  tc.fairness.gamma = 1;
  tc.fairness.pool_size = 16;
  tc.stage1_epochs = 2;
  tc.stage2_epochs = 2;
  tc.fairness.boost = true;
  Trainer trained(d.graph, d.features, split, tc);
  trained.run_stage1();
  trained.run_stage2();
  tc.fairness.boost = false;
  Trainer plain(d.graph, d.features, split, tc);
  plain.set_params(trained.params());
  const auto pls = split.evaluated_in(Split::test);
  const bool lib_same = recommend(trained.embeddings(), pls, 20, "x") == recommend(plain.embeddings(), pls, 20, "x");

  const bool same = runs[0] == runs[1] && !runs[0].empty();
  return {same && lib_same, std::string("CLI run.csv ") + (same ? "identical" : "differs") +
                                " with boost on/off; library lists " + (lib_same ? "identical" : "differ")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradients},
      {"fairness loss vs brute force", fairness_oracle},
      {"popularity binning", binning},
      {"metric oracles", metrics},
      {"counterfactual centroid ordering", counterfactual},
      {"directional fairness", directional},
      {"mostpop exactness", mostpop},
      {"wilcoxon exact mode", wilcoxon},
      {"pca planted plane", pca},
      {"cli determinism", determinism},
      {"boost isolation", boost_isolation},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first << "  ("
              << o.detail << ") [" << num(std::round(seconds_since(t0) * 10) / 10) << " s]" << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
