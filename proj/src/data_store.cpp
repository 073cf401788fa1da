#include "fairrec/data_store.hpp"

#include "fairrec/io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

namespace fairrec {

namespace {

const char* kInteractionsHeader = "playlist_id,track_id,artist_id,position";

std::string join(const std::vector<std::string_view>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += fields[i];
  }
  return out;
}

std::string features_header() {
  std::string h = "track_id";
  for (int i = 0; i < kSonicDims; ++i) h += ",sonic_" + std::to_string(i);
  for (int i = 0; i < kGenreDims; ++i) h += ",genre_" + std::to_string(i);
  return h;
}

void rebuild_track_index(InteractionGraph& g) {
  g.track_playlists.assign(g.track_names.size(), {});
  for (PlaylistId p = 0; p < static_cast<PlaylistId>(g.playlist_tracks.size()); ++p) {
    for (TrackId t : g.playlist_tracks[p]) g.track_playlists[t].push_back(p);
  }
}

}  // namespace

std::size_t InteractionGraph::num_edges() const {
  std::size_t n = 0;
  for (const auto& p : playlist_tracks) n += p.size();
  return n;
}

bool InteractionGraph::operator==(const InteractionGraph& o) const {
  return playlist_tracks == o.playlist_tracks && playlist_positions == o.playlist_positions &&
         track_playlists == o.track_playlists && track_artist == o.track_artist &&
         playlist_names == o.playlist_names && track_names == o.track_names &&
         artist_names == o.artist_names;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split '" + s + "'");
}

std::vector<PlaylistId> SplitAssignment::playlists_in(Split s) const {
  std::vector<PlaylistId> out;
  for (PlaylistId p = 0; p < static_cast<PlaylistId>(split.size()); ++p) {
    if (split[p] == s) out.push_back(p);
  }
  return out;
}

std::vector<const EvalPlaylist*> SplitAssignment::evaluated_in(Split s) const {
  std::vector<const EvalPlaylist*> out;
  for (const auto& e : evaluated) {
    if (e.split == s) out.push_back(&e);
  }
  return out;
}

Eigen::Matrix<double, kSonicDims, 1> TrackFeatureTable::scaled_sonic(TrackId t) const {
  Eigen::Matrix<double, kSonicDims, 1> v;
  for (int j = 0; j < kSonicDims; ++j) v[j] = sonic[t][j] / 9.0;
  return v;
}

void TrackFeatureTable::validate(std::size_t expected_tracks) const {
  if (sonic.size() != expected_tracks || genre.size() != expected_tracks) {
    throw ValidationError("feature table has " + std::to_string(sonic.size()) +
                          " rows, expected " + std::to_string(expected_tracks));
  }
  for (const auto& row : sonic) {
    for (auto v : row) {
      if (v > 9) throw ValidationError("sonic bin out of range [0,9]");
    }
  }
  for (const auto& row : genre) {
    for (auto v : row) {
      if (v > 1) throw ValidationError("genre entry must be 0 or 1");
    }
  }
  if (name_emb && static_cast<std::size_t>(name_emb->rows()) != expected_tracks) {
    throw ValidationError("name embedding row count does not match track count");
  }
  if (image_emb && static_cast<std::size_t>(image_emb->rows()) != expected_tracks) {
    throw ValidationError("image embedding row count does not match track count");
  }
}

bool TrackFeatureTable::operator==(const TrackFeatureTable& o) const {
  auto same = [](const std::optional<Matrix>& a, const std::optional<Matrix>& b) {
    if (a.has_value() != b.has_value()) return false;
    if (!a) return true;
    return a->rows() == b->rows() && a->cols() == b->cols() && *a == *b;
  };
  return sonic == o.sonic && genre == o.genre && same(name_emb, o.name_emb) &&
         same(image_emb, o.image_emb);
}

InteractionGraph build_graph(const std::vector<InteractionRow>& rows) {
  struct Entry {
    int position;
    const InteractionRow* row;
  };
  std::unordered_map<std::string, PlaylistId> playlist_ids;
  std::vector<std::string> playlist_names;
  std::vector<std::vector<Entry>> entries;
  std::unordered_map<std::string, std::string> artist_of;
  std::unordered_set<std::string> edges;

  auto where = [](const InteractionRow& r) {
    return r.line ? " (line " + std::to_string(r.line) + ")" : std::string();
  };

  for (const auto& r : rows) {
    auto [it, inserted] = playlist_ids.emplace(r.playlist, static_cast<PlaylistId>(playlist_names.size()));
    if (inserted) {
      playlist_names.push_back(r.playlist);
      entries.emplace_back();
    }
    if (!edges.insert(r.playlist + '\x1f' + r.track).second) {
      throw ValidationError("duplicate edge (" + r.playlist + ", " + r.track + ")" + where(r));
    }
    auto [ait, fresh] = artist_of.emplace(r.track, r.artist);
    if (!fresh && ait->second != r.artist) {
      throw ValidationError("track " + r.track + " has conflicting artists " + ait->second +
                            " and " + r.artist + where(r));
    }
    entries[it->second].push_back({r.position, &r});
  }

  InteractionGraph g;
  g.playlist_names = std::move(playlist_names);
  g.playlist_tracks.resize(entries.size());
  g.playlist_positions.resize(entries.size());
  std::unordered_map<std::string, ArtistId> artist_ids;

  for (std::size_t p = 0; p < entries.size(); ++p) {
    auto& list = entries[p];
    std::stable_sort(list.begin(), list.end(),
                     [](const Entry& a, const Entry& b) { return a.position < b.position; });
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (list[i].position == list[i - 1].position) {
        throw ValidationError("playlist " + g.playlist_names[p] + " repeats position " +
                              std::to_string(list[i].position) + where(*list[i].row));
      }
    }
    for (const auto& e : list) {
      auto [tit, new_track] =
          g.track_index.emplace(e.row->track, static_cast<TrackId>(g.track_names.size()));
      if (new_track) {
        g.track_names.push_back(e.row->track);
        auto [arit, new_artist] =
            artist_ids.emplace(e.row->artist, static_cast<ArtistId>(g.artist_names.size()));
        if (new_artist) g.artist_names.push_back(e.row->artist);
        g.track_artist.push_back(arit->second);
      }
      g.playlist_tracks[p].push_back(tit->second);
      g.playlist_positions[p].push_back(e.position);
    }
  }
  rebuild_track_index(g);
  return g;
}

InteractionGraph load_interactions(const std::filesystem::path& path) {
  const std::string file = path.string();
  std::vector<InteractionRow> rows;
  io::read_csv(
      path,
      [&](const std::vector<std::string_view>& header) {
        if (join(header) != kInteractionsHeader) {
          throw ParseError(file, 1, std::string("expected header '") + kInteractionsHeader + "'");
        }
      },
      [&](const std::vector<std::string_view>& f, std::size_t line) {
        if (f.size() != 4) {
          throw ParseError(file, line, "expected 4 fields, got " + std::to_string(f.size()));
        }
        for (int i = 0; i < 3; ++i) {
          if (f[i].empty()) throw ParseError(file, line, "empty identifier");
        }
        InteractionRow r;
        r.playlist = std::string(f[0]);
        r.track = std::string(f[1]);
        r.artist = std::string(f[2]);
        r.position = static_cast<int>(io::parse_int(f[3], file, line));
        r.line = line;
        rows.push_back(std::move(r));
      });
  return build_graph(rows);
}

std::string format_interactions(const InteractionGraph& g) {
  std::ostringstream out;
  out << kInteractionsHeader << '\n';
  for (std::size_t p = 0; p < g.num_playlists(); ++p) {
    for (std::size_t i = 0; i < g.playlist_tracks[p].size(); ++i) {
      TrackId t = g.playlist_tracks[p][i];
      out << g.playlist_names[p] << ',' << g.track_names[t] << ','
          << g.artist_names[g.track_artist[t]] << ',' << g.playlist_positions[p][i] << '\n';
    }
  }
  return out.str();
}

void write_interactions(const InteractionGraph& g, const std::filesystem::path& path) {
  io::write_atomic(path, format_interactions(g));
}

TrackFeatureTable load_features(const std::filesystem::path& path, const InteractionGraph& g) {
  const std::string file = path.string();
  TrackFeatureTable f;
  f.sonic.resize(g.num_tracks());
  f.genre.resize(g.num_tracks());
  std::vector<bool> seen(g.num_tracks(), false);
  const std::size_t width = 1 + kSonicDims + kGenreDims;
  io::read_csv(
      path,
      [&](const std::vector<std::string_view>& header) {
        if (join(header) != features_header()) {
          throw ParseError(file, 1, "expected header track_id,sonic_0..sonic_8,genre_0..genre_19");
        }
      },
      [&](const std::vector<std::string_view>& row, std::size_t line) {
        if (row.size() != width) {
          throw ParseError(file, line, "expected " + std::to_string(width) + " fields");
        }
        auto it = g.track_index.find(std::string(row[0]));
        if (it == g.track_index.end()) {
          throw ValidationError(file + ":" + std::to_string(line) + ": unknown track " +
                                std::string(row[0]));
        }
        TrackId t = it->second;
        if (seen[t]) {
          throw ValidationError(file + ":" + std::to_string(line) + ": duplicate track row");
        }
        seen[t] = true;
        for (int j = 0; j < kSonicDims; ++j) {
          auto v = io::parse_int(row[1 + j], file, line);
          if (v < 0 || v > 9) throw ParseError(file, line, "sonic bin out of range [0,9]");
          f.sonic[t][j] = static_cast<std::uint8_t>(v);
        }
        for (int j = 0; j < kGenreDims; ++j) {
          auto v = io::parse_int(row[1 + kSonicDims + j], file, line);
          if (v != 0 && v != 1) throw ParseError(file, line, "genre entry must be 0 or 1");
          f.genre[t][j] = static_cast<std::uint8_t>(v);
        }
      });
  for (std::size_t t = 0; t < seen.size(); ++t) {
    if (!seen[t]) throw ValidationError(file + ": missing features for track " + g.track_names[t]);
  }
  return f;
}

std::string format_features(const InteractionGraph& g, const TrackFeatureTable& f) {
  std::ostringstream out;
  out << features_header() << '\n';
  for (std::size_t t = 0; t < g.num_tracks(); ++t) {
    out << g.track_names[t];
    for (auto v : f.sonic[t]) out << ',' << static_cast<int>(v);
    for (auto v : f.genre[t]) out << ',' << static_cast<int>(v);
    out << '\n';
  }
  return out.str();
}

Matrix load_dense_block(const std::filesystem::path& path, const InteractionGraph& g,
                        int expected_dims) {
  const std::string file = path.string();
  Matrix m(static_cast<Eigen::Index>(g.num_tracks()), expected_dims);
  std::vector<bool> seen(g.num_tracks(), false);
  io::read_csv(
      path,
      [&](const std::vector<std::string_view>& header) {
        if (header.size() != static_cast<std::size_t>(expected_dims) + 1 || header[0] != "track_id") {
          throw ParseError(file, 1, "expected track_id plus " + std::to_string(expected_dims) +
                                        " value columns");
        }
      },
      [&](const std::vector<std::string_view>& row, std::size_t line) {
        if (row.size() != static_cast<std::size_t>(expected_dims) + 1) {
          throw ParseError(file, line, "wrong field count");
        }
        auto it = g.track_index.find(std::string(row[0]));
        if (it == g.track_index.end()) {
          throw ValidationError(file + ":" + std::to_string(line) + ": unknown track " +
                                std::string(row[0]));
        }
        if (seen[it->second]) {
          throw ValidationError(file + ":" + std::to_string(line) + ": duplicate track row");
        }
        seen[it->second] = true;
        for (int j = 0; j < expected_dims; ++j) {
          m(it->second, j) = io::parse_double(row[1 + j], file, line);
        }
      });
  for (std::size_t t = 0; t < seen.size(); ++t) {
    if (!seen[t]) throw ValidationError(file + ": missing row for track " + g.track_names[t]);
  }
  if (!m.allFinite()) throw ValidationError(file + ": non-finite embedding value");
  return m;
}

SplitAssignment split_playlists(const InteractionGraph& g, double train, double valid,
                                double test, std::uint64_t seed) {
  if (!(train > 0 && valid > 0 && test > 0)) {
    throw ConfigError("split fractions must be positive");
  }
  if (std::abs(train + valid + test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  const auto n = static_cast<long long>(g.num_playlists());
  const long long n_train = std::llround(train * static_cast<double>(n));
  const long long n_valid = std::llround(valid * static_cast<double>(n));
  const long long n_test = n - n_train - n_valid;
  if (n_train <= 0 || n_valid <= 0 || n_test <= 0) {
    throw ConfigError("split of " + std::to_string(n) + " playlists leaves an empty split");
  }
  std::vector<PlaylistId> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  SplitAssignment s;
  s.split.assign(static_cast<std::size_t>(n), Split::train);
  for (long long i = 0; i < n; ++i) {
    Split which = i < n_train ? Split::train : (i < n_train + n_valid ? Split::valid : Split::test);
    s.split[order[i]] = which;
  }
  return s;
}

SplitAssignment split_peek_holdout(const InteractionGraph& g, SplitAssignment s, int peek_k) {
  if (peek_k < 1) throw ConfigError("peek_k must be >= 1");
  if (s.split.size() != g.num_playlists()) throw ValidationError("split does not match graph");
  s.peek_k = peek_k;
  s.evaluated.clear();
  s.excluded = 0;
  for (PlaylistId p = 0; p < static_cast<PlaylistId>(g.num_playlists()); ++p) {
    if (s.split[p] == Split::train) continue;
    const auto& tracks = g.playlist_tracks[p];
    if (tracks.size() < 2) {
      ++s.excluded;
      continue;
    }
    const std::size_t n_peek = std::min<std::size_t>(peek_k, tracks.size() - 1);
    EvalPlaylist e;
    e.playlist = p;
    e.split = s.split[p];
    e.peek.assign(tracks.begin(), tracks.begin() + static_cast<std::ptrdiff_t>(n_peek));
    e.holdout.assign(tracks.begin() + static_cast<std::ptrdiff_t>(n_peek), tracks.end());
    s.evaluated.push_back(std::move(e));
  }
  return s;
}

std::string format_splits(const InteractionGraph& g, const SplitAssignment& s) {
  std::ostringstream out;
  out << "playlist_id,split\n";
  for (std::size_t p = 0; p < s.split.size(); ++p) {
    out << g.playlist_names[p] << ',' << split_name(s.split[p]) << '\n';
  }
  return out.str();
}

SplitAssignment load_splits(const std::filesystem::path& path, const InteractionGraph& g) {
  const std::string file = path.string();
  std::unordered_map<std::string, PlaylistId> ids;
  for (PlaylistId p = 0; p < static_cast<PlaylistId>(g.num_playlists()); ++p) {
    ids.emplace(g.playlist_names[p], p);
  }
  SplitAssignment s;
  s.split.assign(g.num_playlists(), Split::train);
  std::vector<bool> seen(g.num_playlists(), false);
  io::read_csv(
      path,
      [&](const std::vector<std::string_view>& header) {
        if (join(header) != "playlist_id,split") {
          throw ParseError(file, 1, "expected header 'playlist_id,split'");
        }
      },
      [&](const std::vector<std::string_view>& row, std::size_t line) {
        if (row.size() != 2) throw ParseError(file, line, "expected 2 fields");
        auto it = ids.find(std::string(row[0]));
        if (it == ids.end()) {
          throw ValidationError(file + ":" + std::to_string(line) + ": unknown playlist " +
                                std::string(row[0]));
        }
        if (seen[it->second]) {
          throw ValidationError(file + ":" + std::to_string(line) + ": duplicate playlist");
        }
        seen[it->second] = true;
        try {
          s.split[it->second] = parse_split(std::string(row[1]));
        } catch (const ValidationError& e) {
          throw ParseError(file, line, e.what());
        }
      });
  for (std::size_t p = 0; p < seen.size(); ++p) {
    if (!seen[p]) throw ValidationError(file + ": no split for playlist " + g.playlist_names[p]);
  }
  return s;
}

InteractionGraph train_view(const InteractionGraph& g, const SplitAssignment& split) {
  if (split.split.size() != g.num_playlists()) throw ValidationError("split does not match graph");
  InteractionGraph out = g;
  for (std::size_t p = 0; p < out.num_playlists(); ++p) {
    if (split.split[p] != Split::train) {
      out.playlist_tracks[p].clear();
      out.playlist_positions[p].clear();
    }
  }
  rebuild_track_index(out);
  return out;
}

SyntheticData generate_synthetic(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.playlists < 1 || spec.tracks < 1 || spec.clusters < 1) {
    throw ConfigError("synthetic spec needs positive playlist, track and cluster counts");
  }
  if (spec.tracks < spec.clusters) throw ConfigError("fewer tracks than clusters");
  if (spec.artists < spec.clusters || spec.artists > spec.tracks) {
    throw ConfigError("artist count must lie between cluster count and track count");
  }
  if (spec.min_len < 1 || spec.max_len < spec.min_len) {
    throw ConfigError("invalid playlist length range");
  }
  if (spec.skew < 0 || spec.mix < 0 || spec.mix > 1) throw ConfigError("invalid skew or mix");

  std::mt19937_64 rng(seed);
  const int n_tracks = spec.tracks;
  const int n_clusters = spec.clusters;

  // Cluster centres in sonic-bin space; members jitter by at most one bin.
  std::uniform_int_distribution<int> bin(0, 9);
  std::uniform_int_distribution<int> jitter(-1, 1);
  std::uniform_int_distribution<int> genre_pick(0, kGenreDims - 1);
  std::bernoulli_distribution keep_genre(0.9), stray_genre(0.05);
  std::vector<std::array<int, kSonicDims>> centre(n_clusters);
  std::vector<std::vector<int>> cluster_genres(n_clusters);
  for (int c = 0; c < n_clusters; ++c) {
    for (auto& v : centre[c]) v = bin(rng);
    while (cluster_genres[c].size() < 3) {
      int gnr = genre_pick(rng);
      if (std::find(cluster_genres[c].begin(), cluster_genres[c].end(), gnr) == cluster_genres[c].end()) {
        cluster_genres[c].push_back(gnr);
      }
    }
  }

  std::vector<int> cluster(n_tracks);
  std::vector<std::array<std::uint8_t, kSonicDims>> sonic(n_tracks);
  std::vector<std::array<std::uint8_t, kGenreDims>> genre(n_tracks);
  std::vector<std::vector<int>> members(n_clusters);
  for (int t = 0; t < n_tracks; ++t) {
    const int c = t % n_clusters;
    cluster[t] = c;
    members[c].push_back(t);
    for (int j = 0; j < kSonicDims; ++j) {
      sonic[t][j] = static_cast<std::uint8_t>(std::clamp(centre[c][j] + jitter(rng), 0, 9));
    }
    genre[t].fill(0);
    for (int gnr : cluster_genres[c]) {
      if (keep_genre(rng)) genre[t][gnr] = 1;
    }
    if (stray_genre(rng)) genre[t][genre_pick(rng)] = 1;
  }

  // The i-th member of cluster c gets the (i mod n)-th artist of that cluster,
  // which gives every artist at least one track because artists <= tracks.
  std::vector<int> artist(n_tracks);
  for (int c = 0; c < n_clusters; ++c) {
    std::vector<int> artists;
    for (int a = c; a < spec.artists; a += n_clusters) artists.push_back(a);
    for (std::size_t i = 0; i < members[c].size(); ++i) {
      artist[members[c][i]] = artists[i % artists.size()];
    }
  }

  // Power-law selection weights over a random popularity ranking.
  std::vector<int> rank(n_tracks);
  std::iota(rank.begin(), rank.end(), 1);
  std::shuffle(rank.begin(), rank.end(), rng);
  std::vector<double> weight(n_tracks);
  for (int t = 0; t < n_tracks; ++t) weight[t] = std::pow(static_cast<double>(rank[t]), -spec.skew);

  std::vector<double> cluster_mass(n_clusters, 0.0);
  std::vector<std::discrete_distribution<int>> within(n_clusters);
  for (int c = 0; c < n_clusters; ++c) {
    std::vector<double> w;
    for (int t : members[c]) {
      w.push_back(weight[t]);
      cluster_mass[c] += weight[t];
    }
    within[c] = std::discrete_distribution<int>(w.begin(), w.end());
  }
  std::discrete_distribution<int> global(weight.begin(), weight.end());
  std::discrete_distribution<int> pick_cluster(cluster_mass.begin(), cluster_mass.end());
  std::uniform_int_distribution<int> length(spec.min_len, spec.max_len);
  std::bernoulli_distribution from_global(spec.mix);

  std::vector<std::vector<int>> playlists(spec.playlists);
  std::vector<bool> used(n_tracks, false);
  for (auto& pl : playlists) {
    const int c = pick_cluster(rng);
    const int len = std::min(length(rng), n_tracks);
    std::unordered_set<int> chosen;
    int attempts = 0;
    while (static_cast<int>(pl.size()) < len) {
      const bool global_draw = from_global(rng) || attempts > 50 * len;
      const int t = global_draw ? global(rng) : members[c][within[c](rng)];
      ++attempts;
      if (chosen.insert(t).second) {
        pl.push_back(t);
        used[t] = true;
      }
    }
  }
  std::uniform_int_distribution<int> any_playlist(0, spec.playlists - 1);
  for (int t = 0; t < n_tracks; ++t) {
    if (!used[t]) playlists[any_playlist(rng)].push_back(t);
  }

  std::vector<InteractionRow> rows;
  for (int p = 0; p < spec.playlists; ++p) {
    for (std::size_t i = 0; i < playlists[p].size(); ++i) {
      int t = playlists[p][i];
      rows.push_back({"p" + std::to_string(p), "t" + std::to_string(t),
                      "a" + std::to_string(artist[t]), static_cast<int>(i), 0});
    }
  }

  SyntheticData out;
  out.graph = build_graph(rows);
  const auto n = out.graph.num_tracks();
  out.features.sonic.resize(n);
  out.features.genre.resize(n);
  out.cluster.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    const int original = std::stoi(out.graph.track_names[t].substr(1));
    out.features.sonic[t] = sonic[original];
    out.features.genre[t] = genre[original];
    out.cluster[t] = cluster[original];
  }
  return out;
}

}  // namespace fairrec
