#pragma once

// Data-parallel inner loops. Each kernel has an OpenMP version used by the
// library and a plain serial version in kernels::serial that the tests use as
// a reference and the benchmark compares against. Parallel kernels write only
// per-row outputs and reduce in index order, so their results do not depend on
// the thread count.

#include "fairrec/common.hpp"
#include "fairrec/objective.hpp"
#include "fairrec/sampler.hpp"

#include <span>
#include <vector>

namespace fairrec::kernels {

struct LayerOutput {
  Matrix self;  // targets x in
  Matrix agg;   // targets x in
  Matrix pre;   // targets x out
  Matrix act;   // targets x out
};

// One aggregation layer for `targets`. Row of track t in `prev` is
// prev_row[t], or t itself when prev_row is empty.
LayerOutput aggregate_layer(const Matrix& prev, std::span<const int> prev_row,
                            const std::vector<TrackId>& targets, const NeighborTable& neighbors,
                            const Matrix& w, const Vector& b);

// All-pairs cosine similarity of the rows of z.
Matrix pairwise_cosine(const Matrix& z);

// Per-anchor fairness terms. Writes d loss / d s into the anchor rows of grad
// (which must be zero-initialised and sized like s) and returns the per-anchor
// losses in plan order.
std::vector<double> fairness_terms(const FairnessPlan& plan, const Matrix& s_g, const Matrix& s,
                                   double alpha, Matrix& grad);

struct Scored {
  TrackId track = 0;
  double score = 0;
  bool operator==(const Scored&) const = default;
};

// Top-k catalogue tracks by cosine similarity to each query row, excluding the
// query's own exclusion list; ties by ascending TrackId.
std::vector<std::vector<Scored>> topk_cosine(const Matrix& catalog, const Matrix& queries,
                                             const std::vector<std::vector<TrackId>>& exclude,
                                             int k);

namespace serial {

// Dense matrix form: A = [self agg] W^T + b.
LayerOutput aggregate_layer(const Matrix& prev, std::span<const int> prev_row,
                            const std::vector<TrackId>& targets, const NeighborTable& neighbors,
                            const Matrix& w, const Vector& b);

// Normalise rows, then one matrix product.
Matrix pairwise_cosine(const Matrix& z);

// Literal cross-entropy over the probability definitions.
std::vector<double> fairness_terms(const FairnessPlan& plan, const Matrix& s_g, const Matrix& s,
                                   double alpha, Matrix& grad);

// Scores the whole catalogue and fully sorts it.
std::vector<std::vector<Scored>> topk_cosine(const Matrix& catalog, const Matrix& queries,
                                             const std::vector<std::vector<TrackId>>& exclude,
                                             int k);

}  // namespace serial
}  // namespace fairrec::kernels
