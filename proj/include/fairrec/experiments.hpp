#pragma once

#include "fairrec/common.hpp"
#include "fairrec/data_store.hpp"
#include "fairrec/evaluator.hpp"
#include "fairrec/popularity.hpp"
#include "fairrec/recommender.hpp"
#include "fairrec/trainer.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace fairrec {

struct CounterfactualSpec {
  int n_top = 100;
  std::uint64_t seed = 0;  // picks the playlist each duplicate joins
};

struct CounterfactualData {
  InteractionGraph graph;
  TrackFeatureTable features;
  SplitAssignment split;
  std::vector<TrackId> originals;   // T_OG, most popular first
  std::vector<TrackId> duplicates;  // T_CF, duplicates[i] copies originals[i]
};

// Copies the n_top most played tracks under fresh ids (named "<name>#cf"),
// with identical feature rows and artist, each joined by a single edge to a
// uniformly chosen training playlist. New ids follow the existing ones.
CounterfactualData counterfactual_duplicate(const InteractionGraph& g, const TrackFeatureTable& features,
                                            const SplitAssignment& split, const PopularityIndex& index,
                                            const CounterfactualSpec& spec);

struct Pca2d {
  Matrix coords;              // n x 2
  Matrix components;          // 2 x d, orthonormal rows
  Vector mean;                // d
  std::array<double, 2> eigenvalues{};  // of the sample covariance
  bool rank_deficient = false;
};

// Mean-centred projection onto the top two covariance eigenvectors, found by
// power iteration with deflation. Each component is signed so that its
// largest-magnitude entry is positive. If the data has rank < 2 the missing
// component is zero and rank_deficient is set.
Pca2d pca_2d(const Matrix& points);

// Euclidean distance between the centroids of the rows with label 0 and 1.
double centroid_distance(const Matrix& coords, const std::vector<int>& labels);

struct CentroidReport {
  Matrix og;                 // 2D coordinates of T_OG
  Matrix cf;                 // 2D coordinates of T_CF
  double distance = 0;
  // Mean cosine between each original's and its duplicate's offsets from their
  // group centroids; positive when the two clouds share an orientation.
  double orientation = 0;
  bool rank_deficient = false;
};

// PCA fitted on the L2-normalised rows of the whole embedding matrix.
CentroidReport centroid_report(const Matrix& z, const std::vector<TrackId>& originals,
                               const std::vector<TrackId>& duplicates);

// Artist popularity: the track binning rule applied to summed track counts.
PopularityIndex artist_popularity(const PopularityIndex& tracks, const std::vector<ArtistId>& track_artist,
                                  std::size_t num_artists);

struct ArtistNeighborReport {
  std::vector<ArtistId> top_artists;  // artists in the highest occupied bin
  double mean_popularity = 0;         // mean neighbour bin over all of them
  int neighbors = 0;                  // n after clamping to |A| - 1
};

// For each artist in the highest occupied popularity bin, its n nearest other
// artists by cosine (ties by id), averaged over their popularity bins.
ArtistNeighborReport artist_neighbor_popularity(const Matrix& artist_emb, const PopularityIndex& artist_pop,
                                                int n = 100);

struct SweepRow {
  double gamma = 0;
  EvalReport report;
};

struct SweepInputs {
  EvalInputs eval;
  std::vector<const EvalPlaylist*> playlists;
  int k = 100;
};

// One stage-2 run per gamma, each continuing from a copy of `stage1`. Rows come
// back in grid order.
std::vector<SweepRow> gamma_sweep(const Trainer& stage1, const std::vector<double>& gammas,
                                  const SweepInputs& in);

std::string format_sweep_csv(const std::vector<SweepRow>& rows);

// Share of all recommended items per popularity bin.
std::array<double, kPopularityBins> visibility_by_bin(const RecommendationRun& run, const PopularityIndex& index);

}  // namespace fairrec
