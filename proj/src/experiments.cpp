#include "fairrec/experiments.hpp"

#include "fairrec/io.hpp"
#include "fairrec/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace fairrec {

CounterfactualData counterfactual_duplicate(const InteractionGraph& g, const TrackFeatureTable& features,
                                            const SplitAssignment& split, const PopularityIndex& index,
                                            const CounterfactualSpec& spec) {
  if (spec.n_top < 1) throw ConfigError("n_top must be >= 1");
  if (static_cast<std::size_t>(spec.n_top) > g.num_tracks()) throw ConfigError("n_top exceeds the catalogue size");
  if (index.num_tracks() != g.num_tracks()) throw ValidationError("popularity index does not match the graph");
  features.validate(g.num_tracks());
  const auto train = split.playlists_in(Split::train);
  if (train.empty()) throw ValidationError("no training playlists to attach duplicates to");

  CounterfactualData d{g, features, split, {}, {}};
  const auto order = popularity_order(index);
  d.originals.assign(order.begin(), order.begin() + spec.n_top);

  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  for (TrackId orig : d.originals) {
    const auto dup = static_cast<TrackId>(d.graph.num_tracks());
    std::string name = g.track_names[orig] + "#cf";
    while (d.graph.track_index.count(name)) name += "#cf";
    const PlaylistId p = train[pick(rng)];
    d.graph.track_names.push_back(name);
    d.graph.track_index.emplace(name, dup);
    d.graph.track_artist.push_back(g.track_artist[orig]);
    d.graph.track_playlists.push_back({p});
    auto& positions = d.graph.playlist_positions[p];
    positions.push_back(positions.empty() ? 0 : positions.back() + 1);
    d.graph.playlist_tracks[p].push_back(dup);

    d.features.sonic.push_back(features.sonic[orig]);
    d.features.genre.push_back(features.genre[orig]);
    if (d.features.name_emb) {
      d.features.name_emb->conservativeResize(d.features.name_emb->rows() + 1, Eigen::NoChange);
      d.features.name_emb->row(dup) = features.name_emb->row(orig);
    }
    if (d.features.image_emb) {
      d.features.image_emb->conservativeResize(d.features.image_emb->rows() + 1, Eigen::NoChange);
      d.features.image_emb->row(dup) = features.image_emb->row(orig);
    }
    d.duplicates.push_back(dup);
  }
  return d;
}

namespace {

// Dominant eigenpair of the symmetric positive semi-definite matrix c, kept
// orthogonal to `prev`.
std::pair<double, Vector> dominant_eigenpair(const Matrix& c, const std::vector<Vector>& prev, std::uint64_t seed) {
  const auto d = c.rows();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = normal(rng);
  auto orthogonalise = [&](Vector& x) {
    for (const auto& p : prev) x -= p.dot(x) * p;
  };
  orthogonalise(v);
  if (v.norm() == 0) return {0.0, Vector::Zero(d)};
  v.normalize();

  const double scale = std::max(c.diagonal().sum(), std::numeric_limits<double>::min());
  double lambda = 0;
  for (int it = 0; it < 200000; ++it) {
    Vector w = c * v;
    orthogonalise(w);
    lambda = v.dot(w);
    const double residual = (w - lambda * v).norm();
    if (residual <= 1e-14 * scale) break;
    const double nw = w.norm();
    if (nw == 0) return {0.0, v};
    v = w / nw;
  }
  return {std::max(lambda, 0.0), v};
}

}  // namespace

Pca2d pca_2d(const Matrix& points) {
  if (points.rows() < 3) throw ValidationError("PCA needs at least 3 points");
  if (points.cols() < 2) throw ValidationError("PCA needs at least 2 dimensions");
  Pca2d r;
  r.mean = points.colwise().mean().transpose();
  Matrix centred = points.rowwise() - r.mean.transpose();
  Matrix cov = centred.transpose() * centred / static_cast<double>(points.rows() - 1);
  r.components = Matrix::Zero(2, points.cols());

  std::vector<Vector> found;
  Matrix deflated = cov;
  for (int c = 0; c < 2; ++c) {
    auto [lambda, v] = dominant_eigenpair(deflated, found, 0x5ca1ab1eULL + static_cast<std::uint64_t>(c));
    const double top = c == 0 ? lambda : r.eigenvalues[0];
    if (lambda <= 1e-12 * top || lambda == 0) {
      r.rank_deficient = true;
      break;
    }
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    r.eigenvalues[c] = lambda;
    r.components.row(c) = v.transpose();
    deflated -= lambda * v * v.transpose();
    found.push_back(v);
  }
  r.coords = centred * r.components.transpose();
  return r;
}

double centroid_distance(const Matrix& coords, const std::vector<int>& labels) {
  if (labels.size() != static_cast<std::size_t>(coords.rows())) throw ValidationError("one label per row required");
  Eigen::RowVectorXd sum[2] = {Eigen::RowVectorXd::Zero(coords.cols()), Eigen::RowVectorXd::Zero(coords.cols())};
  std::size_t n[2] = {0, 0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ValidationError("labels must be 0 or 1");
    sum[labels[i]] += coords.row(static_cast<Eigen::Index>(i));
    ++n[labels[i]];
  }
  if (n[0] == 0 || n[1] == 0) throw ValidationError("both groups need at least one point");
  return (sum[0] / static_cast<double>(n[0]) - sum[1] / static_cast<double>(n[1])).norm();
}

CentroidReport centroid_report(const Matrix& z, const std::vector<TrackId>& originals,
                               const std::vector<TrackId>& duplicates) {
  if (originals.size() != duplicates.size() || originals.empty()) {
    throw ValidationError("original and duplicate groups must be non-empty and of equal size");
  }
  Matrix zn = z;
  for (Eigen::Index i = 0; i < zn.rows(); ++i) {
    const double nrm = zn.row(i).norm();
    if (nrm > 0) zn.row(i) /= nrm;
  }
  const Pca2d pca = pca_2d(zn);
  CentroidReport r;
  r.rank_deficient = pca.rank_deficient;
  const auto m = static_cast<Eigen::Index>(originals.size());
  r.og.resize(m, 2);
  r.cf.resize(m, 2);
  Matrix both(2 * m, 2);
  std::vector<int> labels(static_cast<std::size_t>(2 * m));
  for (Eigen::Index i = 0; i < m; ++i) {
    r.og.row(i) = pca.coords.row(originals[static_cast<std::size_t>(i)]);
    r.cf.row(i) = pca.coords.row(duplicates[static_cast<std::size_t>(i)]);
    both.row(i) = r.og.row(i);
    both.row(m + i) = r.cf.row(i);
    labels[static_cast<std::size_t>(m + i)] = 1;
  }
  r.distance = centroid_distance(both, labels);

  const Eigen::RowVector2d c_og = r.og.colwise().mean();
  const Eigen::RowVector2d c_cf = r.cf.colwise().mean();
  double total = 0;
  int counted = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::RowVector2d a = r.og.row(i) - c_og;
    const Eigen::RowVector2d b = r.cf.row(i) - c_cf;
    if (a.norm() == 0 || b.norm() == 0) continue;
    total += a.dot(b) / (a.norm() * b.norm());
    ++counted;
  }
  r.orientation = counted ? total / counted : 0.0;
  return r;
}

PopularityIndex artist_popularity(const PopularityIndex& tracks, const std::vector<ArtistId>& track_artist,
                                  std::size_t num_artists) {
  if (track_artist.size() != tracks.num_tracks()) throw ValidationError("artist map does not match the index");
  std::vector<std::int64_t> sum(num_artists, 0);
  for (std::size_t t = 0; t < track_artist.size(); ++t) sum[track_artist[t]] += tracks.count[t];
  return assign_bins(std::move(sum));
}

ArtistNeighborReport artist_neighbor_popularity(const Matrix& artist_emb, const PopularityIndex& artist_pop,
                                                int n) {
  const auto num = static_cast<std::size_t>(artist_emb.rows());
  if (artist_pop.num_tracks() != num) throw ValidationError("artist popularity does not match the embeddings");
  if (num < 2) throw ValidationError("need at least two artists");
  if (n < 1) throw ConfigError("neighbour count must be >= 1");
  ArtistNeighborReport r;
  r.neighbors = std::min<int>(n, static_cast<int>(num) - 1);
  const int top = *std::max_element(artist_pop.bin.begin(), artist_pop.bin.end());
  for (std::size_t a = 0; a < num; ++a) {
    if (artist_pop.bin[a] == top) r.top_artists.push_back(static_cast<ArtistId>(a));
  }
  Matrix queries(static_cast<Eigen::Index>(r.top_artists.size()), artist_emb.cols());
  std::vector<std::vector<TrackId>> exclude;
  for (std::size_t i = 0; i < r.top_artists.size(); ++i) {
    queries.row(static_cast<Eigen::Index>(i)) = artist_emb.row(r.top_artists[i]);
    exclude.push_back({r.top_artists[i]});
  }
  const auto lists = kernels::topk_cosine(artist_emb, queries, exclude, r.neighbors);
  double total = 0;
  std::size_t count = 0;
  for (const auto& list : lists) {
    for (const auto& s : list) {
      total += artist_pop.bin[s.track];
      ++count;
    }
  }
  r.mean_popularity = total / static_cast<double>(count);
  return r;
}

std::vector<SweepRow> gamma_sweep(const Trainer& stage1, const std::vector<double>& gammas, const SweepInputs& in) {
  std::vector<SweepRow> rows;
  for (double gamma : gammas) {
    if (!(gamma >= 0)) throw ConfigError("gamma values must be >= 0");
    Trainer t = stage1;
    t.run_stage(2, t.config().stage2_epochs, gamma);
    const Matrix z = t.embeddings();
    const auto run = recommend(z, in.playlists, in.k, "gamma=" + io::format_double(gamma));
    rows.push_back({gamma, evaluate_all(run, in.eval)});
  }
  return rows;
}

std::string format_sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "gamma,recall,ndcg,artist_recall,flow,diversity,pct_lt,lt_coverage,artist_coverage\n";
  for (const auto& row : rows) {
    const auto& r = row.report;
    out << io::format_double(row.gamma);
    for (double v : {r.recall, r.ndcg, r.artist_recall, r.flow, r.diversity, r.pct_lt, r.lt_coverage,
                     r.artist_coverage}) {
      out << ',' << io::format_double(v);
    }
    out << '\n';
  }
  return out.str();
}

std::array<double, kPopularityBins> visibility_by_bin(const RecommendationRun& run, const PopularityIndex& index) {
  std::array<std::int64_t, kPopularityBins> counts{};
  std::int64_t total = 0;
  for (const auto& list : run.lists) {
    for (const auto& s : list.items) {
      ++counts[static_cast<std::size_t>(index.bin[s.track])];
      ++total;
    }
  }
  if (total == 0) throw ValidationError("run has no recommendations");
  std::array<double, kPopularityBins> share{};
  for (int b = 0; b < kPopularityBins; ++b) share[b] = static_cast<double>(counts[b]) / static_cast<double>(total);
  return share;
}

}  // namespace fairrec
