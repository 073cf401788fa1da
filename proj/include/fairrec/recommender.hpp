#pragma once

#include "fairrec/common.hpp"
#include "fairrec/data_store.hpp"
#include "fairrec/encoder.hpp"
#include "fairrec/kernels.hpp"
#include "fairrec/popularity.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace fairrec {

using kernels::Scored;

struct RecommendationList {
  PlaylistId playlist = 0;
  std::vector<Scored> items;  // scores non-increasing
  bool operator==(const RecommendationList&) const = default;
};

struct RecommendationRun {
  std::string method;
  int k = 0;
  std::vector<RecommendationList> lists;  // evaluated playlist order
  bool operator==(const RecommendationRun&) const = default;
};

// Mean of the peek rows of z. Throws ValidationError on an empty peek.
Vector playlist_embedding(const Matrix& z, const std::vector<TrackId>& peek);

// Cosine top-k against the whole catalogue, minus `exclude`; ties by TrackId.
std::vector<Scored> recommend_topk(const Matrix& z, const Vector& query, int k,
                                   const std::vector<TrackId>& exclude);

// One list per playlist in `playlists`, each from the mean of its peek tracks
// with the peek tracks excluded.
RecommendationRun recommend(const Matrix& z, const std::vector<const EvalPlaylist*>& playlists, int k,
                            const std::string& method);

// Model input matrix used directly as the embedding.
Matrix features_baseline(const TrackFeatureTable& features, FeatureFlags flags = {});

// Highest-count tracks first, ties by TrackId.
std::vector<TrackId> popularity_order(const PopularityIndex& index);

// The same top-k list for every playlist; peek tracks are skipped and the gap
// filled from further down the popularity order. Score is the training count.
RecommendationRun mostpop_baseline(const PopularityIndex& index,
                                   const std::vector<const EvalPlaylist*>& playlists, int k);

// Row a = mean embedding of artist a's tracks. Throws if an artist has none.
Matrix artist_embedding(const Matrix& z, const std::vector<ArtistId>& track_artist, std::size_t num_artists);

// Run file `playlist_id,rank,track_id,score` with the external ids of g and
// ranks from 1.
std::string format_run(const RecommendationRun& run, const InteractionGraph& g);
// Inverse of format_run; `method` and `k` are not stored in the file and are
// taken from the arguments.
RecommendationRun load_run(const std::filesystem::path& path, const InteractionGraph& g,
                           const std::string& method, int k);

}  // namespace fairrec
