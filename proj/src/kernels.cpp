#include "fairrec/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fairrec::kernels {

namespace {

inline Eigen::Index source_row(std::span<const int> prev_row, TrackId t) {
  return prev_row.empty() ? t : prev_row[t];
}

void check_layer_shapes(const Matrix& prev, const Matrix& w, const Vector& b) {
  if (w.cols() != 2 * prev.cols() || b.size() != w.rows()) {
    throw ValidationError("layer weight shape does not match its input");
  }
}

// Gathers self rows and importance-weighted neighbour means for one target.
void gather_row(const Matrix& prev, std::span<const int> prev_row, TrackId t,
                const NeighborTable& neighbors, Eigen::Ref<Eigen::RowVectorXd> self,
                Eigen::Ref<Eigen::RowVectorXd> agg) {
  self = prev.row(source_row(prev_row, t));
  agg.setZero();
  const auto& nb = neighbors[t];
  for (std::size_t j = 0; j < nb.ids.size(); ++j) {
    agg += nb.weights[j] * prev.row(source_row(prev_row, nb.ids[j]));
  }
}

struct RankLess {
  const std::vector<double>& score;
  bool operator()(TrackId a, TrackId b) const {
    if (score[a] != score[b]) return score[a] > score[b];
    return a < b;
  }
};

double row_cosine(const Matrix& catalog, Eigen::Index t, double cat_norm,
                  const Eigen::RowVectorXd& q, double q_norm) {
  if (cat_norm == 0 || q_norm == 0) return 0.0;
  return catalog.row(t).dot(q) / (cat_norm * q_norm);
}

}  // namespace

LayerOutput aggregate_layer(const Matrix& prev, std::span<const int> prev_row,
                            const std::vector<TrackId>& targets, const NeighborTable& neighbors,
                            const Matrix& w, const Vector& b) {
  check_layer_shapes(prev, w, b);
  const auto n = static_cast<Eigen::Index>(targets.size());
  const auto in = prev.cols();
  LayerOutput o;
  o.self.resize(n, in);
  o.agg.resize(n, in);
  o.pre.resize(n, w.rows());
  o.act.resize(n, w.rows());
  const auto w_self = w.leftCols(in);
  const auto w_agg = w.rightCols(in);
#pragma omp parallel for schedule(static)
  for (Eigen::Index r = 0; r < n; ++r) {
    gather_row(prev, prev_row, targets[r], neighbors, o.self.row(r), o.agg.row(r));
    Vector a = w_self * o.self.row(r).transpose();
    a.noalias() += w_agg * o.agg.row(r).transpose();
    a += b;
    o.pre.row(r) = a.transpose();
    o.act.row(r) = a.cwiseMax(0.0).transpose();
  }
  return o;
}

Matrix pairwise_cosine(const Matrix& z) {
  const auto n = z.rows();
  Vector norm(n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) norm[i] = z.row(i).norm();
  Matrix s(n, n);
#pragma omp parallel for schedule(dynamic, 8)
  for (Eigen::Index i = 0; i < n; ++i) {
    s(i, i) = norm[i] > 0 ? 1.0 : 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = (norm[i] > 0 && norm[j] > 0) ? z.row(i).dot(z.row(j)) / (norm[i] * norm[j]) : 0.0;
      s(i, j) = v;
      s(j, i) = v;
    }
  }
  return s;
}

std::vector<double> fairness_terms(const FairnessPlan& plan, const Matrix& s_g, const Matrix& s,
                                   double alpha, Matrix& grad) {
  const auto n = static_cast<std::int64_t>(plan.anchors.size());
  std::vector<double> losses(plan.anchors.size(), 0.0);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t a = 0; a < n; ++a) {
    const auto& ap = plan.anchors[a];
    const int i = ap.anchor;
    double loss = 0;
    for (const auto& pr : ap.pairs) {
      const double x = alpha * (s(i, pr.u) - s(i, pr.v));
      const bool closer = s_g(i, pr.u) > s_g(i, pr.v);
      loss += pr.weight * (closer ? softplus(-x) : softplus(x));
      const double g = pr.weight * alpha * (sigmoid(x) - (closer ? 1.0 : 0.0));
      grad(i, pr.u) += g;
      grad(i, pr.v) -= g;
    }
    losses[a] = loss;
  }
  return losses;
}

std::vector<std::vector<Scored>> topk_cosine(const Matrix& catalog, const Matrix& queries,
                                             const std::vector<std::vector<TrackId>>& exclude,
                                             int k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  if (catalog.cols() != queries.cols()) throw ValidationError("query and catalogue dims differ");
  if (exclude.size() != static_cast<std::size_t>(queries.rows())) {
    throw ValidationError("one exclusion list per query required");
  }
  const auto n = catalog.rows();
  Vector norm(n);
  for (Eigen::Index t = 0; t < n; ++t) norm[t] = catalog.row(t).norm();

  const auto nq = static_cast<std::int64_t>(queries.rows());
  std::vector<std::vector<Scored>> out(static_cast<std::size_t>(nq));
#pragma omp parallel
  {
    std::vector<double> score(static_cast<std::size_t>(n));
    std::vector<char> banned(static_cast<std::size_t>(n), 0);
    std::vector<TrackId> cand;
    cand.reserve(static_cast<std::size_t>(n));
#pragma omp for schedule(dynamic, 4)
    for (std::int64_t qi = 0; qi < nq; ++qi) {
      const Eigen::RowVectorXd q = queries.row(qi);
      const double qn = q.norm();
      for (TrackId t : exclude[qi]) banned[t] = 1;
      cand.clear();
      for (Eigen::Index t = 0; t < n; ++t) {
        if (banned[t]) continue;
        score[t] = row_cosine(catalog, t, norm[t], q, qn);
        cand.push_back(static_cast<TrackId>(t));
      }
      for (TrackId t : exclude[qi]) banned[t] = 0;
      const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), cand.size());
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(),
                        RankLess{score});
      auto& row = out[qi];
      row.reserve(take);
      for (std::size_t j = 0; j < take; ++j) row.push_back({cand[j], score[cand[j]]});
    }
  }
  return out;
}

namespace serial {

LayerOutput aggregate_layer(const Matrix& prev, std::span<const int> prev_row,
                            const std::vector<TrackId>& targets, const NeighborTable& neighbors,
                            const Matrix& w, const Vector& b) {
  check_layer_shapes(prev, w, b);
  const auto n = static_cast<Eigen::Index>(targets.size());
  const auto in = prev.cols();
  LayerOutput o;
  o.self.resize(n, in);
  o.agg.resize(n, in);
  for (Eigen::Index r = 0; r < n; ++r) {
    gather_row(prev, prev_row, targets[r], neighbors, o.self.row(r), o.agg.row(r));
  }
  o.pre = o.self * w.leftCols(in).transpose() + o.agg * w.rightCols(in).transpose();
  o.pre.rowwise() += b.transpose();
  o.act = o.pre.cwiseMax(0.0);
  return o;
}

Matrix pairwise_cosine(const Matrix& z) {
  Matrix zn = z;
  std::vector<bool> zero(static_cast<std::size_t>(z.rows()), false);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double nrm = z.row(i).norm();
    if (nrm > 0) {
      zn.row(i) /= nrm;
    } else {
      zero[i] = true;
    }
  }
  Matrix s = zn * zn.transpose();
  for (Eigen::Index i = 0; i < s.rows(); ++i) s(i, i) = zero[i] ? 0.0 : 1.0;
  return s;
}

std::vector<double> fairness_terms(const FairnessPlan& plan, const Matrix& s_g, const Matrix& s,
                                   double alpha, Matrix& grad) {
  std::vector<double> losses;
  for (const auto& ap : plan.anchors) {
    const int i = ap.anchor;
    double loss = 0;
    for (const auto& pr : ap.pairs) {
      const double pg = prob_apriori(s_g, i, pr.u, pr.v);
      const double pz = prob_learned(s, i, pr.u, pr.v, alpha);
      loss += pr.weight * (-pg * std::log(pz) - (1 - pg) * std::log(1 - pz));
      // d/dx of the cross-entropy with pz = sigmoid(x) is pz - pg.
      const double g = pr.weight * alpha * (pz - pg);
      grad(i, pr.u) += g;
      grad(i, pr.v) -= g;
    }
    losses.push_back(loss);
  }
  return losses;
}

std::vector<std::vector<Scored>> topk_cosine(const Matrix& catalog, const Matrix& queries,
                                             const std::vector<std::vector<TrackId>>& exclude,
                                             int k) {
  std::vector<std::vector<Scored>> out;
  for (Eigen::Index qi = 0; qi < queries.rows(); ++qi) {
    const Eigen::RowVectorXd q = queries.row(qi);
    std::vector<Scored> all;
    for (Eigen::Index t = 0; t < catalog.rows(); ++t) {
      const auto id = static_cast<TrackId>(t);
      if (std::find(exclude[qi].begin(), exclude[qi].end(), id) != exclude[qi].end()) continue;
      all.push_back({id, row_cosine(catalog, t, catalog.row(t).norm(), q, q.norm())});
    }
    std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
      return a.score != b.score ? a.score > b.score : a.track < b.track;
    });
    if (all.size() > static_cast<std::size_t>(k)) all.resize(static_cast<std::size_t>(k));
    out.push_back(std::move(all));
  }
  return out;
}

}  // namespace serial
}  // namespace fairrec::kernels
