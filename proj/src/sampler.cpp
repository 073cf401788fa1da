#include "fairrec/sampler.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <unordered_set>

namespace fairrec {

NeighborSet random_walk_neighbors(const InteractionGraph& g, TrackId anchor, const WalkParams& p,
                                  std::uint64_t seed) {
  if (p.walk_len < 2 || p.walk_len % 2 != 0) throw ConfigError("walk_len must be even and >= 2");
  if (p.walks < 1) throw ConfigError("walks must be >= 1");
  if (p.top_m < 1) throw ConfigError("neighbour count must be >= 1");
  NeighborSet out;
  if (g.track_playlists[anchor].empty()) return out;

  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(anchor)));
  std::map<TrackId, long long> visits;
  for (int w = 0; w < p.walks; ++w) {
    TrackId t = anchor;
    for (int step = 0; step < p.walk_len; step += 2) {
      const auto& pls = g.track_playlists[t];
      std::uniform_int_distribution<std::size_t> pick_pl(0, pls.size() - 1);
      const auto& tracks = g.playlist_tracks[pls[pick_pl(rng)]];
      std::uniform_int_distribution<std::size_t> pick_tr(0, tracks.size() - 1);
      t = tracks[pick_tr(rng)];
      if (t != anchor) ++visits[t];
    }
  }
  std::vector<std::pair<TrackId, long long>> ranked(visits.begin(), visits.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > static_cast<std::size_t>(p.top_m)) ranked.resize(p.top_m);
  long long total = 0;
  for (const auto& r : ranked) total += r.second;
  for (const auto& r : ranked) {
    out.ids.push_back(r.first);
    out.weights.push_back(static_cast<double>(r.second) / static_cast<double>(total));
  }
  return out;
}

NeighborTable build_neighbor_table(const InteractionGraph& g, const WalkParams& p, std::uint64_t seed) {
  const auto n = static_cast<std::int64_t>(g.num_tracks());
  NeighborTable table(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t t = 0; t < n; ++t) {
    table[t] = random_walk_neighbors(g, static_cast<TrackId>(t), p, seed);
  }
  return table;
}

std::vector<TrackPair> sample_positive_pairs(const InteractionGraph& g, std::size_t batch,
                                             std::uint64_t seed) {
  std::vector<PlaylistId> eligible;
  std::vector<double> mass;
  for (PlaylistId pl = 0; pl < static_cast<PlaylistId>(g.num_playlists()); ++pl) {
    const double n = static_cast<double>(g.playlist_tracks[pl].size());
    if (n >= 2) {
      eligible.push_back(pl);
      mass.push_back(n * (n - 1) / 2);
    }
  }
  if (eligible.empty()) throw ValidationError("no playlist with at least two tracks");
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick(mass.begin(), mass.end());
  std::vector<TrackPair> out;
  out.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& tracks = g.playlist_tracks[eligible[pick(rng)]];
    std::uniform_int_distribution<std::size_t> first(0, tracks.size() - 1);
    std::uniform_int_distribution<std::size_t> second(0, tracks.size() - 2);
    std::size_t i = first(rng);
    std::size_t j = second(rng);
    if (j >= i) ++j;
    if (i > j) std::swap(i, j);
    out.emplace_back(tracks[i], tracks[j]);
  }
  return out;
}

std::vector<TrackId> co_occurring(const InteractionGraph& g, TrackId anchor) {
  std::vector<TrackId> out;
  for (PlaylistId pl : g.track_playlists[anchor]) {
    for (TrackId t : g.playlist_tracks[pl]) {
      if (t != anchor) out.push_back(t);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<TrackId> sample_negatives(const InteractionGraph& g, TrackId anchor, std::size_t n,
                                      std::uint64_t seed) {
  const std::size_t n_tracks = g.num_tracks();
  if (n_tracks < 2) throw ValidationError("negative sampling needs at least two tracks");
  auto excluded_list = co_occurring(g, anchor);
  if (excluded_list.size() + 1 >= n_tracks) {
    throw ValidationError("no negative candidates for track " + g.track_names[anchor]);
  }
  std::unordered_set<TrackId> excluded(excluded_list.begin(), excluded_list.end());
  excluded.insert(anchor);
  // Rejection sampling is exactly uniform over the candidate set.
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<TrackId> any(0, static_cast<TrackId>(n_tracks - 1));
  std::vector<TrackId> out;
  out.reserve(n);
  while (out.size() < n) {
    TrackId t = any(rng);
    if (!excluded.count(t)) out.push_back(t);
  }
  return out;
}

FairnessBatch sample_fairness_batch(std::size_t num_tracks, const std::vector<TrackId>& anchors,
                                    std::size_t pool_size, std::uint64_t seed) {
  if (pool_size > num_tracks) throw ConfigError("pool_size exceeds catalogue size");
  FairnessBatch b;
  std::unordered_set<TrackId> in_pool;
  for (TrackId a : anchors) {
    if (in_pool.insert(a).second) b.anchors.push_back(a);
  }
  if (pool_size < b.anchors.size()) throw ConfigError("pool_size smaller than the anchor batch");
  std::vector<TrackId> rest;
  rest.reserve(num_tracks - b.anchors.size());
  for (TrackId t = 0; t < static_cast<TrackId>(num_tracks); ++t) {
    if (!in_pool.count(t)) rest.push_back(t);
  }
  std::mt19937_64 rng(seed);
  const std::size_t need = pool_size - b.anchors.size();
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < need; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, rest.size() - 1);
    std::swap(rest[i], rest[pick(rng)]);
  }
  b.pool = b.anchors;
  b.pool.insert(b.pool.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(need));
  std::sort(b.pool.begin(), b.pool.end());
  return b;
}

}  // namespace fairrec
