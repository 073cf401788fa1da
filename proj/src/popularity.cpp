#include "fairrec/popularity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fairrec {

std::vector<std::int64_t> count_appearances(const InteractionGraph& g, const SplitAssignment& split) {
  if (split.split.size() != g.num_playlists()) throw ValidationError("split does not match graph");
  std::vector<std::int64_t> counts(g.num_tracks(), 0);
  bool any_train = false;
  for (std::size_t p = 0; p < g.num_playlists(); ++p) {
    if (split.split[p] != Split::train) continue;
    any_train = true;
    for (TrackId t : g.playlist_tracks[p]) ++counts[t];
  }
  if (!any_train) throw ValidationError("split has no training playlists");
  return counts;
}

int popularity_bin(std::int64_t count, std::int64_t max_count) {
  if (count <= 1 || max_count <= 1) return 0;
  const double b = std::floor(kPopularityBins * std::log10(static_cast<double>(count)) /
                              std::log10(static_cast<double>(max_count)));
  return std::clamp(static_cast<int>(b), 0, kPopularityBins - 1);
}

PopularityIndex assign_bins(std::vector<std::int64_t> counts) {
  PopularityIndex idx;
  idx.max_count = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  if (idx.max_count < 1) throw ValidationError("all popularity counts are zero");
  idx.log_pop.resize(counts.size());
  idx.bin.resize(counts.size());
  for (std::size_t t = 0; t < counts.size(); ++t) {
    if (counts[t] < 0) throw ValidationError("negative popularity count");
    idx.log_pop[t] = counts[t] > 0 ? std::log10(static_cast<double>(counts[t])) : 0.0;
    idx.bin[t] = popularity_bin(counts[t], idx.max_count);
  }
  idx.count = std::move(counts);
  return idx;
}

std::vector<bool> long_tail_set(const PopularityIndex& index, double f) {
  if (!(f > 0 && f < 1)) throw ConfigError("short-head fraction must lie in (0,1)");
  const std::size_t n = index.num_tracks();
  std::vector<TrackId> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](TrackId a, TrackId b) { return index.count[a] > index.count[b]; });
  // The epsilon keeps products like 0.2 * 10 from rounding up to 3.
  const auto head = static_cast<std::size_t>(std::ceil(f * static_cast<double>(n) - 1e-9));
  std::vector<bool> lt(n, true);
  for (std::size_t i = 0; i < std::min(head, n); ++i) lt[order[i]] = false;
  return lt;
}

BinBreakdown breakdown_report(const PopularityIndex& index) {
  BinBreakdown out;
  std::array<std::int64_t, kPopularityBins> interactions{};
  std::int64_t total = 0;
  for (std::size_t t = 0; t < index.num_tracks(); ++t) {
    ++out.tracks[index.bin[t]];
    interactions[index.bin[t]] += index.count[t];
    total += index.count[t];
  }
  for (int b = 0; b < kPopularityBins; ++b) {
    out.interaction_share[b] = total > 0 ? static_cast<double>(interactions[b]) / total : 0.0;
  }
  return out;
}

}  // namespace fairrec
