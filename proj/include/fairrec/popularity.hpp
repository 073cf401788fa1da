#pragma once

#include "fairrec/common.hpp"
#include "fairrec/data_store.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace fairrec {

// Per-track popularity derived from training interactions.
struct PopularityIndex {
  std::vector<std::int64_t> count;  // a_t, training playlists only
  std::vector<double> log_pop;      // log10(a_t); 0 for a_t == 0
  std::vector<int> bin;             // 0..9
  std::int64_t max_count = 0;

  std::size_t num_tracks() const { return count.size(); }
};

struct BinBreakdown {
  std::array<std::int64_t, kPopularityBins> tracks{};
  std::array<double, kPopularityBins> interaction_share{};
};

// Number of training playlists containing each track.
std::vector<std::int64_t> count_appearances(const InteractionGraph& g, const SplitAssignment& split);

// Ten equal-width bins over [0, log10(max count)], top edge inclusive.
// Counts 0 and 1 land in bin 0. When the maximum count is 1 the log range is
// empty and every track is in bin 0. Throws ValidationError if all counts are 0.
PopularityIndex assign_bins(std::vector<std::int64_t> counts);

// Single-value form of the binning rule.
int popularity_bin(std::int64_t count, std::int64_t max_count);

// Long-tail membership per track: the ceil(f * |T|) highest-count tracks
// (ties by ascending id) form the short head, everything else is long tail.
std::vector<bool> long_tail_set(const PopularityIndex& index, double short_head_fraction = 0.2);

BinBreakdown breakdown_report(const PopularityIndex& index);

}  // namespace fairrec
