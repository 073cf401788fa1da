#pragma once

#include "fairrec/common.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace fairrec {

// Bipartite playlist <-> track graph with a track -> artist map.
//
// Dense ids are canonical: playlists are numbered by first appearance in the
// input, tracks by first appearance when walking playlists in id order and
// each playlist in position order, artists by first appearance in track order.
// Writing a graph and loading it back therefore reproduces the same ids.
struct InteractionGraph {
  std::vector<std::vector<TrackId>> playlist_tracks;  // position order
  std::vector<std::vector<int>> playlist_positions;   // strictly increasing
  std::vector<std::vector<PlaylistId>> track_playlists;  // ascending
  std::vector<ArtistId> track_artist;

  std::vector<std::string> playlist_names;
  std::vector<std::string> track_names;
  std::vector<std::string> artist_names;
  std::unordered_map<std::string, TrackId> track_index;

  std::size_t num_playlists() const { return playlist_tracks.size(); }
  std::size_t num_tracks() const { return track_playlists.size(); }
  std::size_t num_artists() const { return artist_names.size(); }
  std::size_t num_edges() const;

  bool operator==(const InteractionGraph& other) const;
};

// One row of the interactions file.
struct InteractionRow {
  std::string playlist;
  std::string track;
  std::string artist;
  int position = 0;
  std::size_t line = 0;  // source line, 0 when generated
};

enum class Split : std::uint8_t { train, valid, test };

const char* split_name(Split s);
Split parse_split(const std::string& s);

struct EvalPlaylist {
  PlaylistId playlist = 0;
  Split split = Split::test;
  std::vector<TrackId> peek;
  std::vector<TrackId> holdout;
  bool operator==(const EvalPlaylist&) const = default;
};

struct SplitAssignment {
  std::vector<Split> split;  // indexed by PlaylistId
  int peek_k = 0;            // 0 until split_peek_holdout has run
  std::vector<EvalPlaylist> evaluated;  // valid + test playlists, id order
  std::size_t excluded = 0;  // valid/test playlists with fewer than 2 tracks

  std::vector<PlaylistId> playlists_in(Split s) const;
  std::vector<const EvalPlaylist*> evaluated_in(Split s) const;
  bool operator==(const SplitAssignment&) const = default;
};

struct TrackFeatureTable {
  std::vector<std::array<std::uint8_t, kSonicDims>> sonic;  // bins 0..9
  std::vector<std::array<std::uint8_t, kGenreDims>> genre;  // 0/1
  std::optional<Matrix> name_emb;
  std::optional<Matrix> image_emb;

  std::size_t num_tracks() const { return sonic.size(); }
  // Sonic row scaled to [0,1] by dividing each bin by 9.
  Eigen::Matrix<double, kSonicDims, 1> scaled_sonic(TrackId t) const;
  void validate(std::size_t expected_tracks) const;
  bool operator==(const TrackFeatureTable& other) const;
};

struct SynthSpec {
  int playlists = 50;
  int tracks = 300;
  int artists = 60;
  double skew = 1.0;   // power-law exponent of track selection weights
  int clusters = 6;
  int min_len = 5;
  int max_len = 15;
  double mix = 0.1;    // probability of drawing a track from the whole catalog
};

struct SyntheticData {
  InteractionGraph graph;
  TrackFeatureTable features;
  std::vector<int> cluster;  // per dense TrackId
};

// Builds the canonical graph from raw rows. Throws ValidationError on
// duplicate (playlist, track) pairs, repeated positions and tracks listed
// with conflicting artists.
InteractionGraph build_graph(const std::vector<InteractionRow>& rows);

InteractionGraph load_interactions(const std::filesystem::path& path);
std::string format_interactions(const InteractionGraph& g);
void write_interactions(const InteractionGraph& g, const std::filesystem::path& path);

TrackFeatureTable load_features(const std::filesystem::path& path, const InteractionGraph& g);
std::string format_features(const InteractionGraph& g, const TrackFeatureTable& f);
// Dense embedding file `track_id,v0..v{d-1}`; every track must have a row.
Matrix load_dense_block(const std::filesystem::path& path, const InteractionGraph& g,
                        int expected_dims);

SplitAssignment split_playlists(const InteractionGraph& g, double train, double valid,
                                double test, std::uint64_t seed);
SplitAssignment split_peek_holdout(const InteractionGraph& g, SplitAssignment split,
                                   int peek_k);

std::string format_splits(const InteractionGraph& g, const SplitAssignment& s);
SplitAssignment load_splits(const std::filesystem::path& path, const InteractionGraph& g);

// Copy of g that keeps only the edges of training playlists. Ids, names and
// the artist map are unchanged.
InteractionGraph train_view(const InteractionGraph& g, const SplitAssignment& split);

SyntheticData generate_synthetic(const SynthSpec& spec, std::uint64_t seed);

}  // namespace fairrec
