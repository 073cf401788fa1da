#include "fairrec/encoder.hpp"

#include "fairrec/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace fairrec {

Matrix build_input_features(const TrackFeatureTable& features, FeatureFlags flags) {
  const auto n = static_cast<Eigen::Index>(features.num_tracks());
  if (flags.name && !features.name_emb) throw ValidationError("name embeddings requested but not loaded");
  if (flags.image && !features.image_emb) throw ValidationError("image embeddings requested but not loaded");
  Eigen::Index cols = kSonicDims + kGenreDims;
  if (flags.name) cols += features.name_emb->cols();
  if (flags.image) cols += features.image_emb->cols();
  Matrix x(n, cols);
  for (Eigen::Index t = 0; t < n; ++t) {
    for (int j = 0; j < kSonicDims; ++j) x(t, j) = features.sonic[t][j] / 9.0;
    for (int j = 0; j < kGenreDims; ++j) x(t, kSonicDims + j) = features.genre[t][j];
  }
  Eigen::Index col = kSonicDims + kGenreDims;
  if (flags.name) {
    x.middleCols(col, features.name_emb->cols()) = *features.name_emb;
    col += features.name_emb->cols();
  }
  if (flags.image) x.middleCols(col, features.image_emb->cols()) = *features.image_emb;
  return x;
}

EncoderParams EncoderParams::zeros(const EncoderDims& d) {
  if (d.input < 1 || d.hidden < 1 || d.output < 1) throw ConfigError("encoder dimensions must be positive");
  EncoderParams p;
  p.dims = d;
  p.w1 = Matrix::Zero(d.hidden, 2 * d.input);
  p.b1 = Vector::Zero(d.hidden);
  p.w2 = Matrix::Zero(d.hidden, 2 * d.hidden);
  p.b2 = Vector::Zero(d.hidden);
  p.w_out = Matrix::Zero(d.output, d.hidden);
  return p;
}

std::size_t EncoderParams::size() const {
  return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size() + w_out.size());
}

std::vector<std::span<double>> EncoderParams::blocks() {
  auto span = [](auto& m) { return std::span<double>(m.data(), static_cast<std::size_t>(m.size())); };
  return {span(w1), span(b1), span(w2), span(b2), span(w_out)};
}

std::vector<std::span<const double>> EncoderParams::blocks() const {
  auto span = [](const auto& m) {
    return std::span<const double>(m.data(), static_cast<std::size_t>(m.size()));
  };
  return {span(w1), span(b1), span(w2), span(b2), span(w_out)};
}

bool EncoderParams::same_values(const EncoderParams& other) const {
  if (!(dims == other.dims)) return false;
  auto a = blocks();
  auto b = other.blocks();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::equal(a[i].begin(), a[i].end(), b[i].begin(), b[i].end())) return false;
  }
  return true;
}

EncoderParams init_params(const EncoderDims& dims, std::uint64_t seed) {
  EncoderParams p = EncoderParams::zeros(dims);
  std::mt19937_64 rng(seed);
  auto fill = [&](Matrix& m) {
    const double bound = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  };
  fill(p.w1);
  fill(p.w2);
  fill(p.w_out);
  return p;
}

ForwardPass forward(const EncoderParams& params, const Matrix& x, const NeighborTable& neighbors,
                    const std::vector<TrackId>& tracks) {
  if (x.cols() != params.dims.input) {
    throw ValidationError("feature matrix has " + std::to_string(x.cols()) + " columns, encoder expects " +
                          std::to_string(params.dims.input));
  }
  if (static_cast<std::size_t>(x.rows()) != neighbors.size()) {
    throw ValidationError("neighbour table does not match feature rows");
  }
  ForwardPass pass;
  pass.output_tracks = tracks;
  pass.params = &params;
  pass.params_version = params.version;

  std::vector<TrackId> frontier = tracks;
  for (TrackId t : tracks) {
    if (t < 0 || t >= x.rows()) throw ValidationError("track id out of range");
    frontier.insert(frontier.end(), neighbors[t].ids.begin(), neighbors[t].ids.end());
  }
  std::sort(frontier.begin(), frontier.end());
  frontier.erase(std::unique(frontier.begin(), frontier.end()), frontier.end());
  pass.layer1_tracks = std::move(frontier);
  pass.layer1_row.assign(static_cast<std::size_t>(x.rows()), -1);
  for (std::size_t r = 0; r < pass.layer1_tracks.size(); ++r) {
    pass.layer1_row[pass.layer1_tracks[r]] = static_cast<int>(r);
  }

  auto l1 = kernels::aggregate_layer(x, {}, pass.layer1_tracks, neighbors, params.w1, params.b1);
  pass.x1 = std::move(l1.self);
  pass.n1 = std::move(l1.agg);
  pass.a1 = std::move(l1.pre);
  pass.h1 = std::move(l1.act);

  auto l2 = kernels::aggregate_layer(pass.h1, pass.layer1_row, tracks, neighbors, params.w2, params.b2);
  pass.s2 = std::move(l2.self);
  pass.n2 = std::move(l2.agg);
  pass.a2 = std::move(l2.pre);
  pass.h2 = std::move(l2.act);
  pass.z = pass.h2 * params.w_out.transpose();
  return pass;
}

Matrix embed_all(const EncoderParams& params, const Matrix& x, const NeighborTable& neighbors) {
  std::vector<TrackId> all(static_cast<std::size_t>(x.rows()));
  std::iota(all.begin(), all.end(), 0);
  return forward(params, x, neighbors, all).z;
}

EncoderGrads backward(const EncoderParams& params, const ForwardPass& pass,
                      const NeighborTable& neighbors, const Matrix& dz) {
  if (pass.params != &params || pass.params_version != params.version) {
    throw ValidationError("forward cache is stale: parameters changed since the forward pass");
  }
  if (dz.rows() != pass.z.rows() || dz.cols() != pass.z.cols()) {
    throw ValidationError("upstream gradient shape does not match the forward pass");
  }
  const auto& d = params.dims;
  EncoderGrads g = EncoderParams::zeros(d);

  g.w_out = dz.transpose() * pass.h2;
  Matrix da2 = (dz * params.w_out).cwiseProduct((pass.a2.array() > 0.0).cast<double>().matrix());
  g.b2 = da2.colwise().sum().transpose();
  g.w2.leftCols(d.hidden) = da2.transpose() * pass.s2;
  g.w2.rightCols(d.hidden) = da2.transpose() * pass.n2;
  const Matrix d_self2 = da2 * params.w2.leftCols(d.hidden);
  const Matrix d_agg2 = da2 * params.w2.rightCols(d.hidden);

  // Scatter into layer-1 outputs in fixed row order.
  Matrix dh1 = Matrix::Zero(pass.h1.rows(), pass.h1.cols());
  for (std::size_t r = 0; r < pass.output_tracks.size(); ++r) {
    const TrackId t = pass.output_tracks[r];
    dh1.row(pass.layer1_row[t]) += d_self2.row(static_cast<Eigen::Index>(r));
    const auto& nb = neighbors[t];
    for (std::size_t j = 0; j < nb.ids.size(); ++j) {
      dh1.row(pass.layer1_row[nb.ids[j]]) += nb.weights[j] * d_agg2.row(static_cast<Eigen::Index>(r));
    }
  }
  Matrix da1 = dh1.cwiseProduct((pass.a1.array() > 0.0).cast<double>().matrix());
  g.b1 = da1.colwise().sum().transpose();
  g.w1.leftCols(d.input) = da1.transpose() * pass.x1;
  g.w1.rightCols(d.input) = da1.transpose() * pass.n1;
  return g;
}

double min_abs_preactivation(const ForwardPass& pass) {
  double m = std::numeric_limits<double>::infinity();
  if (pass.a1.size()) m = std::min(m, pass.a1.cwiseAbs().minCoeff());
  if (pass.a2.size()) m = std::min(m, pass.a2.cwiseAbs().minCoeff());
  return m;
}

GradCheckResult gradient_check(const EncoderParams& params, const ParamObjective& objective,
                               const GradCheckOptions& options) {
  EncoderParams base = params;
  EncoderGrads analytic = EncoderParams::zeros(params.dims);
  const double f0 = objective(base, &analytic);
  if (!std::isfinite(f0)) throw RuntimeError("gradient check objective is not finite");

  const std::size_t total = base.size();
  std::vector<std::size_t> indices(total);
  std::iota(indices.begin(), indices.end(), 0);
  if (options.max_params > 0 && options.max_params < total) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(indices.begin(), indices.end(), rng);
    indices.resize(options.max_params);
    std::sort(indices.begin(), indices.end());
  }

  // Flat index -> (block, offset).
  auto locate = [](auto blocks, std::size_t flat) {
    std::size_t b = 0;
    while (flat >= blocks[b].size()) flat -= blocks[b++].size();
    return std::pair{b, flat};
  };

  GradCheckResult result;
  const auto grad_blocks = static_cast<const EncoderGrads&>(analytic).blocks();
  for (std::size_t idx : indices) {
    auto [b, off] = locate(base.blocks(), idx);
    const double original = base.blocks()[b][off];
    base.blocks()[b][off] = original + options.eps;
    ++base.version;
    const double fp = objective(base, nullptr);
    base.blocks()[b][off] = original - options.eps;
    ++base.version;
    const double fm = objective(base, nullptr);
    base.blocks()[b][off] = original;
    ++base.version;
    if (!std::isfinite(fp) || !std::isfinite(fm)) throw RuntimeError("gradient check objective is not finite");

    const double numeric = (fp - fm) / (2 * options.eps);
    const double a = grad_blocks[b][off];
    const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
    const double err = std::abs(a - numeric) / denom;
    ++result.checked;
    if (err >= result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_index = idx;
      result.worst_analytic = a;
      result.worst_numeric = numeric;
    }
  }
  return result;
}

}  // namespace fairrec
