#pragma once

#include "fairrec/common.hpp"
#include "fairrec/data_store.hpp"
#include "fairrec/sampler.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace fairrec {

struct FeatureFlags {
  bool name = false;
  bool image = false;
};

// Model input: sonic bins / 9, then the 20 genre flags, then the optional
// name (512) and image (1024) blocks, unscaled.
Matrix build_input_features(const TrackFeatureTable& features, FeatureFlags flags = {});

struct EncoderDims {
  int input = kSonicDims + kGenreDims;
  int hidden = 64;
  int output = 64;
  bool operator==(const EncoderDims&) const = default;
};

// Two aggregation layers followed by a linear projection:
//   n_t = sum_u w_tu h_u            (0 when t has no neighbours)
//   h'_t = relu(W [h_t ; n_t] + b)
//   z_t = W_out h2_t
struct EncoderParams {
  EncoderDims dims;
  Matrix w1;      // hidden x 2*input
  Vector b1;      // hidden
  Matrix w2;      // hidden x 2*hidden
  Vector b2;      // hidden
  Matrix w_out;   // output x hidden
  // Bumped by every in-place update so stale forward caches can be detected.
  std::uint64_t version = 0;

  static EncoderParams zeros(const EncoderDims& dims);
  std::size_t size() const;
  // Views over the five parameter blocks in fixed (w1, b1, w2, b2, w_out) order.
  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;
  bool same_values(const EncoderParams& other) const;
};

using EncoderGrads = EncoderParams;

// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
EncoderParams init_params(const EncoderDims& dims, std::uint64_t seed);

// Activations of one forward pass, kept for the backward pass.
struct ForwardPass {
  std::vector<TrackId> output_tracks;  // rows of z, in request order
  std::vector<TrackId> layer1_tracks;  // output tracks plus their neighbours, ascending
  std::vector<int> layer1_row;         // TrackId -> row in layer-1 matrices, or -1
  Matrix x1;   // layer1 x input     self features of layer-1 tracks
  Matrix n1;   // layer1 x input     neighbour aggregate of features
  Matrix a1;   // layer1 x hidden    pre-activation
  Matrix h1;   // layer1 x hidden
  Matrix s2;   // out x hidden       layer-1 output of the output tracks
  Matrix n2;   // out x hidden
  Matrix a2;   // out x hidden
  Matrix h2;   // out x hidden
  Matrix z;    // out x output
  std::uint64_t params_version = 0;
  const EncoderParams* params = nullptr;
};

// Embeddings for `tracks` (row i of the result is tracks[i]). Rows are computed
// in parallel; results do not depend on the thread count.
ForwardPass forward(const EncoderParams& params, const Matrix& x, const NeighborTable& neighbors,
                    const std::vector<TrackId>& tracks);

// Full-catalogue embedding matrix, row t = track t.
Matrix embed_all(const EncoderParams& params, const Matrix& x, const NeighborTable& neighbors);

// Gradient of a loss with upstream gradient dz (rows aligned with
// pass.output_tracks). ReLU subgradient at 0 is 0. Throws ValidationError if
// the params have changed since the forward pass.
EncoderGrads backward(const EncoderParams& params, const ForwardPass& pass,
                      const NeighborTable& neighbors, const Matrix& dz);

// Smallest |pre-activation| in the pass; gradient checks stay away from the
// ReLU kink by requiring this to exceed a margin.
double min_abs_preactivation(const ForwardPass& pass);

struct GradCheckOptions {
  double eps = 1e-5;
  std::size_t max_params = 0;   // 0 checks every parameter
  std::uint64_t seed = 1;
  double abs_floor = 1e-8;      // denominators never drop below this
};

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
};

// Objective with its analytic gradient. Called with grad == nullptr for the
// finite-difference evaluations.
using ParamObjective = std::function<double(const EncoderParams&, EncoderGrads* grad)>;

// Compares the analytic gradient with central differences
// (f(p+eps) - f(p-eps)) / 2 eps on a random subset of parameters. The error
// per coordinate is |a - n| / max(|a|, |n|, abs_floor).
GradCheckResult gradient_check(const EncoderParams& params, const ParamObjective& objective,
                               const GradCheckOptions& options = {});

}  // namespace fairrec
