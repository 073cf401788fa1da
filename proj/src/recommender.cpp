#include "fairrec/recommender.hpp"

#include "fairrec/io.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace fairrec {

Vector playlist_embedding(const Matrix& z, const std::vector<TrackId>& peek) {
  if (peek.empty()) throw ValidationError("playlist embedding needs at least one peek track");
  // Sum in ascending id order so that the result does not depend on peek order.
  std::vector<TrackId> sorted = peek;
  std::sort(sorted.begin(), sorted.end());
  Vector sum = Vector::Zero(z.cols());
  for (TrackId t : sorted) {
    if (t < 0 || t >= z.rows()) throw ValidationError("peek track id out of range");
    sum += z.row(t).transpose();
  }
  return sum / static_cast<double>(sorted.size());
}

std::vector<Scored> recommend_topk(const Matrix& z, const Vector& query, int k,
                                   const std::vector<TrackId>& exclude) {
  Matrix q = query.transpose();
  return kernels::topk_cosine(z, q, {exclude}, k).front();
}

RecommendationRun recommend(const Matrix& z, const std::vector<const EvalPlaylist*>& playlists, int k,
                            const std::string& method) {
  if (k < 1) throw ConfigError("k must be >= 1");
  Matrix queries(static_cast<Eigen::Index>(playlists.size()), z.cols());
  std::vector<std::vector<TrackId>> exclude;
  exclude.reserve(playlists.size());
  for (std::size_t i = 0; i < playlists.size(); ++i) {
    queries.row(static_cast<Eigen::Index>(i)) = playlist_embedding(z, playlists[i]->peek).transpose();
    exclude.push_back(playlists[i]->peek);
  }
  auto lists = kernels::topk_cosine(z, queries, exclude, k);
  RecommendationRun run{method, k, {}};
  run.lists.reserve(playlists.size());
  for (std::size_t i = 0; i < playlists.size(); ++i) {
    run.lists.push_back({playlists[i]->playlist, std::move(lists[i])});
  }
  return run;
}

Matrix features_baseline(const TrackFeatureTable& features, FeatureFlags flags) {
  return build_input_features(features, flags);
}

std::vector<TrackId> popularity_order(const PopularityIndex& index) {
  std::vector<TrackId> order(index.num_tracks());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](TrackId a, TrackId b) { return index.count[a] > index.count[b]; });
  return order;
}

RecommendationRun mostpop_baseline(const PopularityIndex& index,
                                   const std::vector<const EvalPlaylist*>& playlists, int k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  const auto order = popularity_order(index);
  RecommendationRun run{"mostpop", k, {}};
  for (const EvalPlaylist* p : playlists) {
    RecommendationList list{p->playlist, {}};
    for (TrackId t : order) {
      if (list.items.size() == static_cast<std::size_t>(k)) break;
      if (std::find(p->peek.begin(), p->peek.end(), t) != p->peek.end()) continue;
      list.items.push_back({t, static_cast<double>(index.count[t])});
    }
    run.lists.push_back(std::move(list));
  }
  return run;
}

Matrix artist_embedding(const Matrix& z, const std::vector<ArtistId>& track_artist, std::size_t num_artists) {
  if (track_artist.size() != static_cast<std::size_t>(z.rows())) {
    throw ValidationError("artist map does not match the embedding rows");
  }
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(num_artists), z.cols());
  std::vector<int> n(num_artists, 0);
  for (std::size_t t = 0; t < track_artist.size(); ++t) {
    const ArtistId a = track_artist[t];
    if (a < 0 || static_cast<std::size_t>(a) >= num_artists) throw ValidationError("artist id out of range");
    out.row(a) += z.row(static_cast<Eigen::Index>(t));
    ++n[a];
  }
  for (std::size_t a = 0; a < num_artists; ++a) {
    if (n[a] == 0) throw ValidationError("artist " + std::to_string(a) + " has no tracks");
    out.row(static_cast<Eigen::Index>(a)) /= n[a];
  }
  return out;
}

std::string format_run(const RecommendationRun& run, const InteractionGraph& g) {
  std::ostringstream out;
  out << "playlist_id,rank,track_id,score\n";
  for (const auto& list : run.lists) {
    for (std::size_t r = 0; r < list.items.size(); ++r) {
      out << g.playlist_names[list.playlist] << ',' << r + 1 << ',' << g.track_names[list.items[r].track] << ','
          << io::format_double(list.items[r].score) << '\n';
    }
  }
  return out.str();
}

RecommendationRun load_run(const std::filesystem::path& path, const InteractionGraph& g,
                           const std::string& method, int k) {
  const std::string file = path.string();
  std::unordered_map<std::string, PlaylistId> playlist_ids;
  for (PlaylistId p = 0; p < static_cast<PlaylistId>(g.num_playlists()); ++p) {
    playlist_ids.emplace(g.playlist_names[p], p);
  }
  RecommendationRun run{method, k, {}};
  std::vector<bool> started(g.num_playlists(), false);
  io::read_csv(
      path,
      [&](const std::vector<std::string_view>& header) {
        if (header.size() != 4 || header[0] != "playlist_id" || header[1] != "rank" || header[2] != "track_id" ||
            header[3] != "score") {
          throw ParseError(file, 1, "expected header 'playlist_id,rank,track_id,score'");
        }
      },
      [&](const std::vector<std::string_view>& row, std::size_t line) {
        if (row.size() != 4) throw ParseError(file, line, "expected 4 fields");
        auto p = playlist_ids.find(std::string(row[0]));
        if (p == playlist_ids.end()) throw ParseError(file, line, "unknown playlist " + std::string(row[0]));
        auto t = g.track_index.find(std::string(row[2]));
        if (t == g.track_index.end()) throw ParseError(file, line, "unknown track " + std::string(row[2]));
        const long long rank = io::parse_int(row[1], file, line);
        if (run.lists.empty() || run.lists.back().playlist != p->second) {
          if (started[p->second]) throw ParseError(file, line, "rows of a playlist must be contiguous");
          started[p->second] = true;
          run.lists.push_back({p->second, {}});
        }
        auto& items = run.lists.back().items;
        if (rank != static_cast<long long>(items.size()) + 1) throw ParseError(file, line, "ranks must run 1, 2, ...");
        items.push_back({t->second, io::parse_double(row[3], file, line)});
      });
  return run;
}

}  // namespace fairrec
