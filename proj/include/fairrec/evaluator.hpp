#pragma once

#include "fairrec/common.hpp"
#include "fairrec/data_store.hpp"
#include "fairrec/popularity.hpp"
#include "fairrec/recommender.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace fairrec {

// Hidden tracks per list, aligned with run.lists.
using Holdouts = std::vector<std::vector<TrackId>>;

Holdouts holdouts_for(const RecommendationRun& run, const SplitAssignment& split);

// Per-list values. Empty recommendation lists score 0.
double recall_one(const std::vector<Scored>& recs, const std::vector<TrackId>& holdout);
double ndcg_one(const std::vector<Scored>& recs, const std::vector<TrackId>& holdout, int k);
double artist_recall_one(const std::vector<Scored>& recs, const std::vector<TrackId>& holdout,
                         const std::vector<ArtistId>& track_artist);
// Mean sonic cosine over unordered pairs; 0 for lists shorter than 2.
double flow_one(const std::vector<Scored>& recs, const TrackFeatureTable& features);
double diversity_one(const std::vector<Scored>& recs, const std::vector<ArtistId>& track_artist);
double pct_lt_one(const std::vector<Scored>& recs, const std::vector<bool>& long_tail);

// Means over lists.
double recall_at_k(const RecommendationRun& run, const Holdouts& holdouts);
double ndcg_eval_at_k(const RecommendationRun& run, const Holdouts& holdouts);
double artist_recall(const RecommendationRun& run, const Holdouts& holdouts,
                     const std::vector<ArtistId>& track_artist);
double flow(const RecommendationRun& run, const TrackFeatureTable& features);
double diversity(const RecommendationRun& run, const std::vector<ArtistId>& track_artist);
double pct_lt(const RecommendationRun& run, const std::vector<bool>& long_tail);

// Set coverage over the whole run.
double lt_coverage(const RecommendationRun& run, const std::vector<bool>& long_tail);
double artist_coverage(const RecommendationRun& run, const std::vector<ArtistId>& track_artist,
                       std::size_t num_artists);

struct WilcoxonResult {
  double statistic = 0;  // min(W+, W-)
  double p_value = 1;    // two-sided
  int n = 0;             // non-zero differences
  bool exact = false;
  bool all_zero = false;
};

// Signed-rank test on paired samples. Zero differences are dropped, tied
// magnitudes get average ranks. Exact null distribution for n <= 12, normal
// approximation with continuity and tie correction above. If every difference
// is zero the result is p = 1 with all_zero set; otherwise fewer than 6
// non-zero differences is a ValidationError.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

struct EvalReport {
  std::string method;
  int k = 0;
  double recall = 0;
  double ndcg = 0;
  double artist_recall = 0;
  double flow = 0;
  double diversity = 0;
  double pct_lt = 0;
  double lt_coverage = 0;
  double artist_coverage = 0;
  std::vector<PlaylistId> playlists;
  std::vector<double> per_recall, per_ndcg, per_artist_recall, per_flow, per_diversity, per_pct_lt;
  nlohmann::json config = nlohmann::json::object();
};

struct EvalInputs {
  const InteractionGraph* graph = nullptr;
  const TrackFeatureTable* features = nullptr;
  const SplitAssignment* split = nullptr;
  const PopularityIndex* popularity = nullptr;
  double short_head_fraction = 0.2;
};

EvalReport evaluate_all(const RecommendationRun& run, const EvalInputs& in, nlohmann::json config = {});

// Keys sorted; playlists written with their external ids.
nlohmann::json report_json(const EvalReport& r, const InteractionGraph& g);

// Min-max scale recall, ndcg, artist_recall, pct_lt and lt_coverage across the
// reports (0.5 where all reports tie), then average the five.
std::vector<double> model_selection_score(const std::vector<EvalReport>& reports);

}  // namespace fairrec
