#include "fairrec/objective.hpp"

#include "fairrec/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

namespace fairrec {

namespace {

std::atomic<std::uint64_t> g_degenerate_cosine{0};
std::atomic<std::uint64_t> g_degenerate_rescale{0};

// Pool rows other than `anchor`, by descending similarity, ties by row.
std::vector<int> rank_row(const Matrix& s, int anchor) {
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(s.cols()) - 1);
  for (int j = 0; j < s.cols(); ++j) {
    if (j != anchor) order.push_back(j);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return s(anchor, a) > s(anchor, b); });
  return order;
}

double discount(int rank) { return 1.0 / std::log2(static_cast<double>(rank) + 1.0); }

}  // namespace

double cosine_similarity(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v) {
  if (u.size() != v.size()) throw ValidationError("cosine of vectors with different sizes");
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0 || nv == 0) {
    ++g_degenerate_cosine;
    return 0.0;
  }
  return u.dot(v) / (nu * nv);
}

std::uint64_t degenerate_cosine_count() { return g_degenerate_cosine.load(); }
std::uint64_t degenerate_rescale_count() { return g_degenerate_rescale.load(); }

SimilarityMatrix apriori_similarity(const std::vector<TrackId>& pool, const TrackFeatureTable& features) {
  if (pool.empty()) throw ValidationError("empty similarity pool");
  Matrix x(static_cast<Eigen::Index>(pool.size()), kSonicDims);
  for (std::size_t r = 0; r < pool.size(); ++r) x.row(r) = features.scaled_sonic(pool[r]).transpose();
  return {SimilarityRole::apriori, pool, kernels::pairwise_cosine(x)};
}

SimilarityMatrix learned_similarity(const std::vector<TrackId>& pool, const Matrix& z_pool) {
  if (static_cast<std::size_t>(z_pool.rows()) != pool.size()) {
    throw ValidationError("embedding rows do not match pool");
  }
  return {SimilarityRole::learned, pool, kernels::pairwise_cosine(z_pool)};
}

double prob_apriori(const Matrix& s_g, int i, int u, int v) {
  return s_g(i, u) > s_g(i, v) ? 1.0 : 0.0;
}

double prob_learned(const Matrix& s, int i, int u, int v, double alpha) {
  return sigmoid(alpha * (s(i, u) - s(i, v)));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  if (x > 0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double ndcg_at_k(std::span<const double> ranked_gains, std::span<const double> all_gains, int k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  double dcg = 0;
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(k), ranked_gains.size());
  for (std::size_t r = 0; r < n; ++r) dcg += ranked_gains[r] * discount(static_cast<int>(r) + 1);
  std::vector<double> ideal(all_gains.begin(), all_gains.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0;
  for (std::size_t r = 0; r < std::min<std::size_t>(static_cast<std::size_t>(k), ideal.size()); ++r) {
    idcg += ideal[r] * discount(static_cast<int>(r) + 1);
  }
  return idcg > 0 ? dcg / idcg : 0.0;
}

double ndcg_at_k(const std::vector<TrackId>& ranked, const std::unordered_set<TrackId>& relevant, int k) {
  std::vector<double> gains;
  gains.reserve(ranked.size());
  for (TrackId t : ranked) gains.push_back(relevant.count(t) ? 1.0 : 0.0);
  std::vector<double> all(relevant.size(), 1.0);
  return ndcg_at_k(gains, all, k);
}

double delta_ndcg_weight(const std::vector<int>& ranking, const std::vector<bool>& relevant, int u,
                         int v, int k) {
  if (u == v) throw ValidationError("delta NDCG needs two distinct items");
  std::vector<double> gains, all;
  for (int item : ranking) gains.push_back(relevant[item] ? 1.0 : 0.0);
  for (bool r : relevant) {
    if (r) all.push_back(1.0);
  }
  const double before = ndcg_at_k(gains, all, k);
  auto pu = std::find(ranking.begin(), ranking.end(), u) - ranking.begin();
  auto pv = std::find(ranking.begin(), ranking.end(), v) - ranking.begin();
  if (pu == static_cast<std::ptrdiff_t>(ranking.size()) || pv == static_cast<std::ptrdiff_t>(ranking.size())) {
    throw ValidationError("delta NDCG items must be in the ranking");
  }
  std::swap(gains[pu], gains[pv]);
  return std::abs(before - ndcg_at_k(gains, all, k));
}

BoostMatrix boost_matrix(const std::vector<TrackId>& pool, const PopularityIndex& index) {
  const auto n = static_cast<Eigen::Index>(pool.size());
  BoostMatrix b{Matrix(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      b.values(i, j) = std::abs(index.bin[pool[i]] - index.bin[pool[j]]);
    }
  }
  return b;
}

Rescale rescale_constants(const Matrix& s, double lo, double hi) {
  if (!(hi > lo)) throw ConfigError("rescale range must have hi > lo");
  double mn = std::numeric_limits<double>::infinity();
  double mx = -mn;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      if (i == j) continue;
      mn = std::min(mn, s(i, j));
      mx = std::max(mx, s(i, j));
    }
  }
  Rescale r;
  if (!(mx - mn > 1e-12)) {
    ++g_degenerate_rescale;
    r.scale = 0;
    r.offset = 0.5 * (lo + hi);
    r.degenerate = true;
    return r;
  }
  r.scale = (hi - lo) / (mx - mn);
  r.offset = lo - r.scale * mn;
  return r;
}

SimilarityMatrix apply_boost(const SimilarityMatrix& s_z, const BoostMatrix& boost, const Rescale& r) {
  if (boost.values.rows() != s_z.values.rows() || boost.values.cols() != s_z.values.cols()) {
    throw ValidationError("boost matrix does not match similarity pool");
  }
  SimilarityMatrix out{SimilarityRole::boosted, s_z.pool, Matrix()};
  out.values = (r.scale * s_z.values.array() + r.offset).matrix() + boost.values;
  return out;
}

SimilarityMatrix apply_boost(const SimilarityMatrix& s_z, const BoostMatrix& boost, double lo, double hi) {
  return apply_boost(s_z, boost, rescale_constants(s_z.values, lo, hi));
}

std::size_t FairnessPlan::num_pairs() const {
  std::size_t n = 0;
  for (const auto& a : anchors) n += a.pairs.size();
  return n;
}

FairnessPlan plan_fairness(const std::vector<int>& anchor_rows, const Matrix& s_g,
                           const Matrix& s_learned, int k_fair, PairWeighting weighting) {
  const auto n = static_cast<int>(s_g.rows());
  if (n < 3) throw ValidationError("fairness pool needs at least 3 tracks");
  if (s_learned.rows() != n || s_g.cols() != n || s_learned.cols() != n) {
    throw ValidationError("similarity matrices must be square over the same pool");
  }
  if (k_fair < 1) throw ConfigError("k_fair must be >= 1");
  FairnessPlan plan;
  plan.k = std::min(k_fair, n - 1);
  const int k = plan.k;
  double idcg = 0;
  for (int r = 1; r <= k; ++r) idcg += discount(r);

  std::vector<bool> used(static_cast<std::size_t>(n), false);
  for (int i : anchor_rows) {
    if (i < 0 || i >= n) throw ValidationError("anchor outside the pool");
    if (used[i]) throw ValidationError("duplicate fairness anchor");
    used[i] = true;

    const auto apriori = rank_row(s_g, i);
    const auto learned = rank_row(s_learned, i);
    std::vector<char> relevant(static_cast<std::size_t>(n), 0);
    std::vector<int> position(static_cast<std::size_t>(n), 0);  // 1-based learned rank
    for (int r = 0; r < k; ++r) relevant[apriori[r]] = 1;
    for (int r = 0; r < n - 1; ++r) position[learned[r]] = r + 1;

    std::vector<int> candidates;
    for (int r = 0; r < k; ++r) candidates.push_back(apriori[r]);
    for (int r = 0; r < k; ++r) candidates.push_back(learned[r]);
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    AnchorPlan ap;
    ap.anchor = i;
    for (int u : candidates) {
      for (int v : candidates) {
        if (u == v) continue;
        double w = 1.0;
        if (weighting == PairWeighting::delta_ndcg) {
          const double du = position[u] <= k ? discount(position[u]) : 0.0;
          const double dv = position[v] <= k ? discount(position[v]) : 0.0;
          w = std::abs((relevant[u] - relevant[v]) * (du - dv)) / idcg;
          if (w == 0) continue;
        }
        ap.pairs.push_back({u, v, w});
      }
    }
    plan.anchors.push_back(std::move(ap));
  }
  return plan;
}

FairnessValue fairness_loss(const FairnessPlan& plan, const Matrix& s_g, const Matrix& s_learned,
                            double alpha) {
  if (!(alpha > 0)) throw ConfigError("alpha must be > 0");
  FairnessValue out;
  out.grad = Matrix::Zero(s_learned.rows(), s_learned.cols());
  const auto terms = kernels::fairness_terms(plan, s_g, s_learned, alpha, out.grad);
  for (double t : terms) out.loss += t;
  return out;
}

Matrix cosine_backward(const Matrix& z, const Matrix& grad_s) {
  const auto n = z.rows();
  Vector norm(n);
  Matrix zn = z;
  for (Eigen::Index i = 0; i < n; ++i) {
    norm[i] = z.row(i).norm();
    if (norm[i] > 0) zn.row(i) /= norm[i];
  }
  const Matrix sym = grad_s + grad_s.transpose();
  Matrix dzn = sym * zn;
  Matrix dz(n, z.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (norm[i] == 0) {
      dz.row(i).setZero();
      continue;
    }
    const double radial = dzn.row(i).dot(zn.row(i));
    dz.row(i) = (dzn.row(i) - radial * zn.row(i)) / norm[i];
  }
  return dz;
}

FairnessStep fairness_step(const Matrix& z_pool, const Matrix& s_g, const std::vector<int>& anchor_rows,
                           const FairnessConfig& config, const BoostMatrix* boost,
                           const FairnessPlan* frozen_plan, const Rescale* frozen_rescale) {
  FairnessStep step;
  Matrix s = kernels::pairwise_cosine(z_pool);
  double scale = 1.0;
  if (config.boost) {
    if (!boost) throw ValidationError("boost enabled without a boost matrix");
    step.rescale = frozen_rescale ? *frozen_rescale
                                  : rescale_constants(s, config.rescale_lo, config.rescale_hi);
    scale = step.rescale.scale;
    s = (step.rescale.scale * s.array() + step.rescale.offset).matrix() + boost->values;
  }
  step.plan = frozen_plan ? *frozen_plan
                          : plan_fairness(anchor_rows, s_g, s, config.k_fair, config.weighting);
  auto value = fairness_loss(step.plan, s_g, s, config.alpha);
  step.loss = value.loss;
  step.grad_z = cosine_backward(z_pool, scale * value.grad);
  return step;
}

FocalValue focal_loss(const Vector& logits, const std::vector<std::uint8_t>& labels,
                      const FocalConfig& config) {
  if (logits.size() == 0) throw ValidationError("focal loss on an empty batch");
  if (static_cast<std::size_t>(logits.size()) != labels.size()) {
    throw ValidationError("one label per logit required");
  }
  const double n = static_cast<double>(logits.size());
  FocalValue out;
  out.grad.resize(logits.size());
  for (Eigen::Index j = 0; j < logits.size(); ++j) {
    const double x = logits[j];
    const bool positive = labels[j] != 0;
    const double alpha_t = positive ? config.alpha : 1.0 - config.alpha;
    // p_t is the probability of the true label; log p_t and 1 - p_t are
    // formed directly from x to stay finite for large |x|.
    const double log_pt = positive ? -softplus(-x) : -softplus(x);
    const double pt = std::exp(log_pt);
    const double one_minus = positive ? sigmoid(-x) : sigmoid(x);
    const double mod = std::pow(one_minus, config.gamma);
    out.loss += -alpha_t * mod * log_pt;
    const double sign = positive ? 1.0 : -1.0;
    const double d = alpha_t * (config.gamma * mod * pt * log_pt - mod * one_minus);
    out.grad[j] = sign * d / n;
  }
  out.loss /= n;
  return out;
}

double total_loss(double utility, double fairness, double gamma) {
  if (!std::isfinite(utility) || !std::isfinite(fairness) || !std::isfinite(gamma)) {
    throw RuntimeError("non-finite loss term");
  }
  return utility + gamma * fairness;
}

}  // namespace fairrec
