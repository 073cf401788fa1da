#pragma once

#include "fairrec/common.hpp"
#include "fairrec/data_store.hpp"
#include "fairrec/popularity.hpp"

#include <cstdint>
#include <span>
#include <unordered_set>
#include <vector>

namespace fairrec {

enum class SimilarityRole { apriori, learned, boosted };

// Square similarity matrix over a candidate pool. Pools are kept in ascending
// TrackId order so that "ties by TrackId" and "ties by row" coincide.
struct SimilarityMatrix {
  SimilarityRole role = SimilarityRole::learned;
  std::vector<TrackId> pool;
  Matrix values;
};

// Cosine similarity. A zero vector gives 0 and increments the degenerate
// counter below.
double cosine_similarity(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v);
std::uint64_t degenerate_cosine_count();
std::uint64_t degenerate_rescale_count();

// Cosine over scaled sonic vectors only; genre and dense blocks play no part.
SimilarityMatrix apriori_similarity(const std::vector<TrackId>& pool, const TrackFeatureTable& features);
// Cosine over embedding rows (row r belongs to pool[r]).
SimilarityMatrix learned_similarity(const std::vector<TrackId>& pool, const Matrix& z_pool);

// 1 if anchor i is strictly closer to u than to v under s_g, else 0.
double prob_apriori(const Matrix& s_g, int i, int u, int v);
// sigmoid(alpha * (s[i,u] - s[i,v])).
double prob_learned(const Matrix& s, int i, int u, int v, double alpha);

double sigmoid(double x);
// log(1 + exp(x)) without overflow.
double softplus(double x);

// NDCG@k with gain = relevance and discount 1/log2(rank+1), rank from 1.
// `ranked_gains` are the gains in list order, `all_gains` every relevant
// item's gain (for the ideal ordering). Returns 0 when the ideal DCG is 0.
double ndcg_at_k(std::span<const double> ranked_gains, std::span<const double> all_gains, int k);
double ndcg_at_k(const std::vector<TrackId>& ranked, const std::unordered_set<TrackId>& relevant, int k);

// |NDCG@k(ranking) - NDCG@k(ranking with u and v swapped)| with binary
// relevance `relevant[item]`. u and v are items (not positions).
double delta_ndcg_weight(const std::vector<int>& ranking, const std::vector<bool>& relevant, int u,
                         int v, int k);

struct BoostMatrix {
  Matrix values;  // |bin(i) - bin(j)|
};

BoostMatrix boost_matrix(const std::vector<TrackId>& pool, const PopularityIndex& index);

// Affine map of the off-diagonal similarity range onto [lo, hi]. Treated as a
// constant for gradients. A constant matrix maps to the midpoint.
struct Rescale {
  double scale = 1;
  double offset = 0;
  bool degenerate = false;
};

Rescale rescale_constants(const Matrix& s, double lo, double hi);

// S' = rescale(S) + B elementwise.
SimilarityMatrix apply_boost(const SimilarityMatrix& s_z, const BoostMatrix& boost, const Rescale& r);
SimilarityMatrix apply_boost(const SimilarityMatrix& s_z, const BoostMatrix& boost, double lo = 1,
                             double hi = 10);

enum class PairWeighting { delta_ndcg, uniform };

struct FairnessConfig {
  double gamma = 0;     // weight of the fairness term
  double alpha = 1;     // sigmoid sharpness
  int k_fair = 10;
  bool boost = false;
  double rescale_lo = 1;
  double rescale_hi = 10;
  int pool_size = 64;
  int anchors = 16;     // fairness anchors per minibatch
  PairWeighting weighting = PairWeighting::delta_ndcg;
};

struct FairnessPair {
  int u = 0;
  int v = 0;
  double weight = 1;
};

struct AnchorPlan {
  int anchor = 0;  // pool row
  std::vector<FairnessPair> pairs;
};

// Pair selection and weights for one step; frozen (no gradient).
struct FairnessPlan {
  int k = 0;
  std::vector<AnchorPlan> anchors;
  std::size_t num_pairs() const;
};

// For each anchor row, pairs (u, v) with u != v, both != anchor, drawn from
// the union of the apriori top-k and learned top-k lists. With delta_ndcg
// weighting each pair carries |dNDCG@k| of swapping u and v in the learned
// ranking, relevance being membership of the apriori top-k; zero-weight pairs
// are dropped. k is clamped to pool size - 1, so k >= pool size enumerates
// every pair.
FairnessPlan plan_fairness(const std::vector<int>& anchor_rows, const Matrix& s_g,
                           const Matrix& s_learned, int k_fair, PairWeighting weighting);

struct FairnessValue {
  double loss = 0;
  Matrix grad;  // d loss / d s_learned, non-zero only on anchor rows
};

// Weighted pairwise cross-entropy between the apriori and learned ordering
// probabilities, summed over the plan.
FairnessValue fairness_loss(const FairnessPlan& plan, const Matrix& s_g, const Matrix& s_learned,
                            double alpha);

// Gradient with respect to embedding rows of a loss given through its
// gradient with respect to S = cos(z_i, z_j).
Matrix cosine_backward(const Matrix& z, const Matrix& grad_s);

// One fairness evaluation from pool embeddings: cosine similarity, optional
// boost, pair selection, loss and gradient with respect to z_pool. Pass the
// plan and rescale of an earlier call to freeze them (gradient checks).
struct FairnessStep {
  double loss = 0;
  Matrix grad_z;
  FairnessPlan plan;
  Rescale rescale;
};

FairnessStep fairness_step(const Matrix& z_pool, const Matrix& s_g, const std::vector<int>& anchor_rows,
                           const FairnessConfig& config, const BoostMatrix* boost,
                           const FairnessPlan* frozen_plan = nullptr,
                           const Rescale* frozen_rescale = nullptr);

struct FocalConfig {
  double gamma = 2;
  double alpha = 0.5;  // weight of positives; negatives get 1 - alpha
};

struct FocalValue {
  double loss = 0;
  Vector grad;  // d loss / d logit
};

// Mean focal loss over a batch of logits with 0/1 labels.
FocalValue focal_loss(const Vector& logits, const std::vector<std::uint8_t>& labels,
                      const FocalConfig& config);

// utility + gamma * fairness; throws RuntimeError on non-finite input.
double total_loss(double utility, double fairness, double gamma);

}  // namespace fairrec
