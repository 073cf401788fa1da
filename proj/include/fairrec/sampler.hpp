#pragma once

#include "fairrec/common.hpp"
#include "fairrec/data_store.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace fairrec {

// Importance-weighted track neighbourhood found by random walks.
struct NeighborSet {
  std::vector<TrackId> ids;
  std::vector<double> weights;  // normalised visit counts, sum 1 when non-empty

  bool empty() const { return ids.empty(); }
  bool operator==(const NeighborSet&) const = default;
};

using NeighborTable = std::vector<NeighborSet>;

struct WalkParams {
  int walks = 200;    // k
  int walk_len = 2;   // edges per walk, even
  int top_m = 20;
};

// Runs `walks` walks from the anchor, alternating track -> playlist -> track
// with uniform choices, and keeps the `top_m` most visited tracks (ties by
// ascending id). The anchor itself is never counted. Isolated tracks get an
// empty set. The walk RNG is seeded from (seed, anchor).
NeighborSet random_walk_neighbors(const InteractionGraph& g, TrackId anchor, const WalkParams& p,
                                  std::uint64_t seed);

// Neighbour sets for every track; parallel over anchors.
NeighborTable build_neighbor_table(const InteractionGraph& g, const WalkParams& p, std::uint64_t seed);

using TrackPair = std::pair<TrackId, TrackId>;

// Pairs that share a playlist of g, drawn uniformly over the co-occurrence
// multiset (a playlist of n tracks holds n(n-1)/2 pairs). Each pair is ordered
// by playlist position. Pass a training view so pairs never cross splits.
std::vector<TrackPair> sample_positive_pairs(const InteractionGraph& g, std::size_t batch,
                                             std::uint64_t seed);

// Tracks co-occurring with the anchor in some playlist of g, ascending.
std::vector<TrackId> co_occurring(const InteractionGraph& g, TrackId anchor);

// n draws with replacement, uniform over tracks that are neither the anchor nor
// co-occur with it in g.
std::vector<TrackId> sample_negatives(const InteractionGraph& g, TrackId anchor, std::size_t n,
                                      std::uint64_t seed);

struct FairnessBatch {
  std::vector<TrackId> anchors;  // distinct, in input order
  std::vector<TrackId> pool;     // ascending, contains every anchor
};

// Pool of `pool_size` tracks that always contains the anchors, completed by a
// uniform draw without replacement from the rest of the catalogue.
FairnessBatch sample_fairness_batch(std::size_t num_tracks, const std::vector<TrackId>& anchors,
                                    std::size_t pool_size, std::uint64_t seed);

}  // namespace fairrec
