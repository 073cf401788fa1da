#include "fairrec/evaluator.hpp"

#include "fairrec/objective.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <unordered_set>

namespace fairrec {

namespace {

double mean(const std::vector<double>& v) {
  if (v.empty()) throw ValidationError("no playlists to evaluate");
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void check_aligned(const RecommendationRun& run, const Holdouts& h) {
  if (run.lists.size() != h.size()) throw ValidationError("holdouts are not aligned with the run");
  // Checked here because the per-list loops run inside parallel regions.
  for (const auto& g : h) {
    if (g.empty()) throw ValidationError("empty holdout");
  }
}

std::vector<double> per_list(const RecommendationRun& run, const std::function<double(std::size_t)>& f) {
  std::vector<double> out(run.lists.size());
  const auto n = static_cast<std::int64_t>(out.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::int64_t i = 0; i < n; ++i) out[i] = f(static_cast<std::size_t>(i));
  return out;
}

}  // namespace

Holdouts holdouts_for(const RecommendationRun& run, const SplitAssignment& split) {
  std::vector<const EvalPlaylist*> by_id(split.split.size(), nullptr);
  for (const auto& e : split.evaluated) by_id[e.playlist] = &e;
  Holdouts out;
  out.reserve(run.lists.size());
  for (const auto& list : run.lists) {
    if (list.playlist < 0 || static_cast<std::size_t>(list.playlist) >= by_id.size() || !by_id[list.playlist]) {
      throw ValidationError("run contains playlist " + std::to_string(list.playlist) + " that is not evaluated");
    }
    out.push_back(by_id[list.playlist]->holdout);
  }
  return out;
}

double recall_one(const std::vector<Scored>& recs, const std::vector<TrackId>& holdout) {
  if (holdout.empty()) throw ValidationError("empty holdout");
  const std::unordered_set<TrackId> g(holdout.begin(), holdout.end());
  std::size_t hits = 0;
  for (const auto& r : recs) hits += g.count(r.track);
  return static_cast<double>(hits) / static_cast<double>(g.size());
}

double ndcg_one(const std::vector<Scored>& recs, const std::vector<TrackId>& holdout, int k) {
  std::vector<TrackId> ranked;
  ranked.reserve(recs.size());
  for (const auto& r : recs) ranked.push_back(r.track);
  return ndcg_at_k(ranked, std::unordered_set<TrackId>(holdout.begin(), holdout.end()), k);
}

double artist_recall_one(const std::vector<Scored>& recs, const std::vector<TrackId>& holdout,
                         const std::vector<ArtistId>& track_artist) {
  std::unordered_set<ArtistId> wanted;
  for (TrackId t : holdout) wanted.insert(track_artist[t]);
  if (wanted.empty()) throw ValidationError("empty holdout");
  std::unordered_set<ArtistId> got;
  for (const auto& r : recs) {
    const ArtistId a = track_artist[r.track];
    if (wanted.count(a)) got.insert(a);
  }
  return static_cast<double>(got.size()) / static_cast<double>(wanted.size());
}

double flow_one(const std::vector<Scored>& recs, const TrackFeatureTable& features) {
  if (recs.size() < 2) return 0.0;
  std::vector<Vector> v;
  v.reserve(recs.size());
  for (const auto& r : recs) v.emplace_back(features.scaled_sonic(r.track));
  double sum = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = i + 1; j < v.size(); ++j) {
      sum += cosine_similarity(v[i], v[j]);
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

double diversity_one(const std::vector<Scored>& recs, const std::vector<ArtistId>& track_artist) {
  if (recs.empty()) return 0.0;
  std::unordered_set<ArtistId> a;
  for (const auto& r : recs) a.insert(track_artist[r.track]);
  return static_cast<double>(a.size()) / static_cast<double>(recs.size());
}

double pct_lt_one(const std::vector<Scored>& recs, const std::vector<bool>& long_tail) {
  if (recs.empty()) return 0.0;
  std::size_t n = 0;
  for (const auto& r : recs) n += long_tail[r.track] ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(recs.size());
}

double recall_at_k(const RecommendationRun& run, const Holdouts& holdouts) {
  check_aligned(run, holdouts);
  return mean(per_list(run, [&](std::size_t i) { return recall_one(run.lists[i].items, holdouts[i]); }));
}

double ndcg_eval_at_k(const RecommendationRun& run, const Holdouts& holdouts) {
  check_aligned(run, holdouts);
  return mean(per_list(run, [&](std::size_t i) { return ndcg_one(run.lists[i].items, holdouts[i], run.k); }));
}

double artist_recall(const RecommendationRun& run, const Holdouts& holdouts,
                     const std::vector<ArtistId>& track_artist) {
  check_aligned(run, holdouts);
  return mean(per_list(
      run, [&](std::size_t i) { return artist_recall_one(run.lists[i].items, holdouts[i], track_artist); }));
}

double flow(const RecommendationRun& run, const TrackFeatureTable& features) {
  return mean(per_list(run, [&](std::size_t i) { return flow_one(run.lists[i].items, features); }));
}

double diversity(const RecommendationRun& run, const std::vector<ArtistId>& track_artist) {
  return mean(per_list(run, [&](std::size_t i) { return diversity_one(run.lists[i].items, track_artist); }));
}

double pct_lt(const RecommendationRun& run, const std::vector<bool>& long_tail) {
  return mean(per_list(run, [&](std::size_t i) { return pct_lt_one(run.lists[i].items, long_tail); }));
}

double lt_coverage(const RecommendationRun& run, const std::vector<bool>& long_tail) {
  const auto total = std::count(long_tail.begin(), long_tail.end(), true);
  if (total == 0) return 0.0;
  std::vector<bool> hit(long_tail.size(), false);
  std::size_t n = 0;
  for (const auto& list : run.lists) {
    for (const auto& r : list.items) {
      if (long_tail[r.track] && !hit[r.track]) {
        hit[r.track] = true;
        ++n;
      }
    }
  }
  return static_cast<double>(n) / static_cast<double>(total);
}

double artist_coverage(const RecommendationRun& run, const std::vector<ArtistId>& track_artist,
                       std::size_t num_artists) {
  if (num_artists == 0) return 0.0;
  std::vector<bool> hit(num_artists, false);
  std::size_t n = 0;
  for (const auto& list : run.lists) {
    for (const auto& r : list.items) {
      const ArtistId a = track_artist[r.track];
      if (!hit[a]) {
        hit[a] = true;
        ++n;
      }
    }
  }
  return static_cast<double>(n) / static_cast<double>(num_artists);
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValidationError("paired samples must have equal length");
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i] - b[i];
    if (!std::isfinite(x)) throw ValidationError("non-finite difference in paired samples");
    if (x != 0) d.push_back(x);
  }
  WilcoxonResult res;
  res.n = static_cast<int>(d.size());
  if (d.empty()) {
    res.all_zero = true;
    res.exact = true;
    return res;
  }
  if (d.size() < 6) throw ValidationError("signed-rank test needs at least 6 non-zero differences");

  // Average ranks of |d|, kept doubled so they stay integral.
  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return std::abs(d[x]) < std::abs(d[y]); });
  std::vector<long long> rank2(n);
  double tie_term = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const auto doubled = static_cast<long long>(i + 1 + j + 1);  // 2 * mean of ranks i+1..j+1
    for (std::size_t m = i; m <= j; ++m) rank2[order[m]] = doubled;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  long long w_plus2 = 0, total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += rank2[i];
    if (d[i] > 0) w_plus2 += rank2[i];
  }
  const long long w_minus2 = total2 - w_plus2;
  const long long t2 = std::min(w_plus2, w_minus2);
  res.statistic = static_cast<double>(t2) / 2.0;

  if (n <= 12) {
    res.exact = true;
    // count[s] = number of sign patterns whose doubled W+ equals s.
    std::vector<double> count(static_cast<std::size_t>(total2) + 1, 0.0);
    count[0] = 1;
    long long reach = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (long long s = reach; s >= 0; --s) {
        if (count[static_cast<std::size_t>(s)] != 0) count[static_cast<std::size_t>(s + rank2[i])] += count[static_cast<std::size_t>(s)];
      }
      reach += rank2[i];
    }
    double tail = 0;
    for (long long s = 0; s <= t2; ++s) tail += count[static_cast<std::size_t>(s)];
    res.p_value = std::min(1.0, 2.0 * tail / std::ldexp(1.0, static_cast<int>(n)));
  } else {
    const double nn = static_cast<double>(n);
    const double mu = nn * (nn + 1) / 4;
    const double var = nn * (nn + 1) * (2 * nn + 1) / 24 - tie_term / 48;
    const double w = static_cast<double>(w_plus2) / 2.0;
    const double z = std::max(0.0, std::abs(w - mu) - 0.5) / std::sqrt(var);
    res.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  }
  return res;
}

EvalReport evaluate_all(const RecommendationRun& run, const EvalInputs& in, nlohmann::json config) {
  if (!in.graph || !in.features || !in.split || !in.popularity) throw ValidationError("incomplete evaluation inputs");
  const auto& g = *in.graph;
  const Holdouts holdouts = holdouts_for(run, *in.split);
  check_aligned(run, holdouts);
  const auto lt = long_tail_set(*in.popularity, in.short_head_fraction);
  EvalReport r;
  r.method = run.method;
  r.k = run.k;
  r.config = std::move(config);
  const std::size_t n = run.lists.size();
  if (n == 0) throw ValidationError("no playlists to evaluate");
  r.playlists.resize(n);
  r.per_recall.resize(n);
  r.per_ndcg.resize(n);
  r.per_artist_recall.resize(n);
  r.per_flow.resize(n);
  r.per_diversity.resize(n);
  r.per_pct_lt.resize(n);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    const auto& items = run.lists[i].items;
    r.playlists[i] = run.lists[i].playlist;
    r.per_recall[i] = recall_one(items, holdouts[i]);
    r.per_ndcg[i] = ndcg_one(items, holdouts[i], run.k);
    r.per_artist_recall[i] = artist_recall_one(items, holdouts[i], g.track_artist);
    r.per_flow[i] = flow_one(items, *in.features);
    r.per_diversity[i] = diversity_one(items, g.track_artist);
    r.per_pct_lt[i] = pct_lt_one(items, lt);
  }
  r.recall = mean(r.per_recall);
  r.ndcg = mean(r.per_ndcg);
  r.artist_recall = mean(r.per_artist_recall);
  r.flow = mean(r.per_flow);
  r.diversity = mean(r.per_diversity);
  r.pct_lt = mean(r.per_pct_lt);
  r.lt_coverage = lt_coverage(run, lt);
  r.artist_coverage = artist_coverage(run, g.track_artist, g.num_artists());
  return r;
}

nlohmann::json report_json(const EvalReport& r, const InteractionGraph& g) {
  nlohmann::json j;
  j["method"] = r.method;
  j["k"] = r.k;
  j["num_playlists"] = r.playlists.size();
  j["recall"] = r.recall;
  j["ndcg"] = r.ndcg;
  j["artist_recall"] = r.artist_recall;
  j["flow"] = r.flow;
  j["diversity"] = r.diversity;
  j["pct_lt"] = r.pct_lt;
  j["lt_coverage"] = r.lt_coverage;
  j["artist_coverage"] = r.artist_coverage;
  nlohmann::json per;
  std::vector<std::string> ids;
  for (PlaylistId p : r.playlists) ids.push_back(g.playlist_names[p]);
  per["playlist_id"] = ids;
  per["recall"] = r.per_recall;
  per["ndcg"] = r.per_ndcg;
  per["artist_recall"] = r.per_artist_recall;
  per["flow"] = r.per_flow;
  per["diversity"] = r.per_diversity;
  per["pct_lt"] = r.per_pct_lt;
  j["per_playlist"] = per;
  j["config"] = r.config;
  return j;
}

std::vector<double> model_selection_score(const std::vector<EvalReport>& reports) {
  const std::vector<double EvalReport::*> fields = {&EvalReport::recall, &EvalReport::ndcg, &EvalReport::artist_recall,
                                                    &EvalReport::pct_lt, &EvalReport::lt_coverage};
  std::vector<double> score(reports.size(), 0.0);
  if (reports.empty()) return score;
  for (auto f : fields) {
    double lo = reports[0].*f, hi = reports[0].*f;
    for (const auto& r : reports) {
      lo = std::min(lo, r.*f);
      hi = std::max(hi, r.*f);
    }
    for (std::size_t i = 0; i < reports.size(); ++i) {
      score[i] += hi > lo ? (reports[i].*f - lo) / (hi - lo) : 0.5;
    }
  }
  for (double& s : score) s /= static_cast<double>(fields.size());
  return score;
}

}  // namespace fairrec
