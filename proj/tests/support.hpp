#pragma once

#include "fairrec/data_store.hpp"
#include "fairrec/popularity.hpp"
#include "fairrec/recommender.hpp"

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace fairrec::testing {

// Graph from playlists of track names. Track "x" belongs to artist "a_x"
// unless `artist_of` is given.
inline InteractionGraph make_graph(const std::vector<std::vector<std::string>>& playlists,
                                   std::string (*artist_of)(const std::string&) = nullptr) {
  std::vector<InteractionRow> rows;
  for (std::size_t p = 0; p < playlists.size(); ++p) {
    for (std::size_t i = 0; i < playlists[p].size(); ++i) {
      const std::string& t = playlists[p][i];
      rows.push_back({"p" + std::to_string(p), t, artist_of ? artist_of(t) : "a_" + t, static_cast<int>(i), 0});
    }
  }
  return build_graph(rows);
}

inline TrackFeatureTable random_features(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> bin(0, 9), flag(0, 1);
  TrackFeatureTable f;
  f.sonic.resize(n);
  f.genre.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    for (auto& v : f.sonic[t]) v = static_cast<std::uint8_t>(bin(rng));
    for (auto& v : f.genre[t]) v = static_cast<std::uint8_t>(flag(rng));
  }
  return f;
}

inline SyntheticData small_synth(std::uint64_t seed, int playlists = 12, int tracks = 30, int artists = 8) {
  SynthSpec spec;
  spec.playlists = playlists;
  spec.tracks = tracks;
  spec.artists = artists;
  spec.clusters = 3;
  spec.min_len = 4;
  spec.max_len = 8;
  return generate_synthetic(spec, seed);
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("fairrec_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// A small evaluated dataset with a random run: lists of varying length that
// mix holdout tracks with random ones, including a one-item list.
struct MetricFixture {
  SyntheticData data;
  SplitAssignment split;
  PopularityIndex index;
  RecommendationRun run;
};

inline MetricFixture metric_fixture(std::uint64_t seed, int k = 12) {
  MetricFixture f;
  SynthSpec spec;
  spec.playlists = 30;
  spec.tracks = 60;
  spec.artists = 10;
  spec.clusters = 3;
  f.data = generate_synthetic(spec, seed);
  f.split = split_peek_holdout(f.data.graph, split_playlists(f.data.graph, 0.7, 0.15, 0.15, seed), 2);
  f.index = assign_bins(count_appearances(f.data.graph, f.split));
  // Zero sonic vector exercises the degenerate cosine.
  f.data.features.sonic[0].fill(0);
  std::mt19937_64 rng(seed);
  const auto n = static_cast<TrackId>(f.data.graph.num_tracks());
  f.run.method = "fixture";
  f.run.k = k;
  int made = 0;
  for (const auto& e : f.split.evaluated) {
    if (made == 10) break;
    const std::size_t len = made == 0 ? 1 : 1 + rng() % static_cast<std::size_t>(k);
    std::vector<TrackId> pick;
    for (TrackId t : e.holdout) {
      if (rng() % 2 == 0) pick.push_back(t);
    }
    while (pick.size() < 3 * static_cast<std::size_t>(k)) pick.push_back(static_cast<TrackId>(rng() % n));
    std::shuffle(pick.begin(), pick.end(), rng);
    RecommendationList list{e.playlist, {}};
    for (TrackId t : pick) {
      if (list.items.size() == len) break;
      const bool dup = std::any_of(list.items.begin(), list.items.end(), [&](const Scored& s) { return s.track == t; });
      if (!dup) list.items.push_back({t, 1.0 - 0.01 * static_cast<double>(list.items.size())});
    }
    f.run.lists.push_back(std::move(list));
    ++made;
  }
  return f;
}

inline std::vector<TrackId> tracks_of(const RecommendationList& l) {
  std::vector<TrackId> out;
  for (const auto& s : l.items) out.push_back(s.track);
  return out;
}

}  // namespace fairrec::testing
