#include "fairrec/trainer.hpp"

#include "fairrec/io.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <sstream>

namespace fairrec {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  require(stage1_epochs >= 0 && stage2_epochs >= 0, "epochs must be >= 0");
  require(lr > 0 && std::isfinite(lr), "lr must be > 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(batches_per_epoch >= 0, "batches_per_epoch must be >= 0");
  require(negatives >= 1, "negatives must be >= 1");
  require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "adam betas must lie in [0, 1)");
  require(adam_eps > 0, "adam_eps must be > 0");
  require(hidden >= 1 && dim >= 1, "hidden and dim must be >= 1");
  require(walk.walks >= 1 && walk.top_m >= 1, "walks and top_m must be >= 1");
  require(walk.walk_len >= 2 && walk.walk_len % 2 == 0, "walk_len must be a positive even number");
  require(fairness.gamma >= 0, "gamma must be >= 0");
  require(fairness.alpha > 0, "alpha must be > 0");
  require(fairness.k_fair >= 1, "k_fair must be >= 1");
  require(fairness.pool_size >= 3, "pool_size must be >= 3");
  require(fairness.anchors >= 1, "fairness anchors must be >= 1");
  require(fairness.rescale_lo < fairness.rescale_hi, "rescale_lo must be < rescale_hi");
  require(focal.gamma >= 0, "focal_gamma must be >= 0");
  require(focal.alpha > 0 && focal.alpha < 1, "focal_alpha must lie in (0, 1)");
}

std::string TrainLog::format_csv() const {
  std::string out = "stage,epoch,utility_loss,fairness_loss,total_loss,seconds\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.stage) + "," + std::to_string(e.epoch) + "," + io::format_double(e.utility) + "," +
           io::format_double(e.fairness) + "," + io::format_double(e.total) + "," + io::format_double(e.seconds) +
           "\n";
  }
  return out;
}

Optimizer::Optimizer(OptimizerKind kind, double lr, double beta1, double beta2, double eps)
    : kind_(kind), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(lr >= 0)) throw ConfigError("learning rate must be >= 0");
}

void Optimizer::step(EncoderParams& params, const EncoderGrads& grads) {
  if (!(params.dims == grads.dims)) throw ValidationError("gradient shape does not match parameters");
  auto p = params.blocks();
  const auto g = grads.blocks();
  if (kind_ == OptimizerKind::sgd) {
    for (std::size_t b = 0; b < p.size(); ++b) {
      for (std::size_t i = 0; i < p[b].size(); ++i) p[b][i] -= lr_ * g[b][i];
    }
  } else {
    if (!m_) {
      m_ = EncoderParams::zeros(params.dims);
      v_ = EncoderParams::zeros(params.dims);
    }
    ++t_;
    const double c1 = 1 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1 - std::pow(beta2_, static_cast<double>(t_));
    auto m = m_->blocks();
    auto v = v_->blocks();
    for (std::size_t b = 0; b < p.size(); ++b) {
      for (std::size_t i = 0; i < p[b].size(); ++i) {
        m[b][i] = beta1_ * m[b][i] + (1 - beta1_) * g[b][i];
        v[b][i] = beta2_ * v[b][i] + (1 - beta2_) * g[b][i] * g[b][i];
        p[b][i] -= lr_ * (m[b][i] / c1) / (std::sqrt(v[b][i] / c2) + eps_);
      }
    }
  }
  ++params.version;
}

namespace {

bool all_finite(const EncoderParams& p) {
  for (auto blk : p.blocks()) {
    for (double v : blk) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

std::string describe(const TrainConfig& c) {
  std::ostringstream s;
  s << "stage1_epochs=" << c.stage1_epochs << "\nstage2_epochs=" << c.stage2_epochs
    << "\nbatch_size=" << c.batch_size << "\nlr=" << io::format_double(c.lr)
    << "\noptimizer=" << (c.optimizer == OptimizerKind::adam ? "adam" : "sgd") << "\nseed=" << c.seed
    << "\ngamma=" << io::format_double(c.fairness.gamma) << "\nboost=" << (c.fairness.boost ? 1 : 0) << "\n";
  return s.str();
}

}  // namespace

Trainer::Trainer(const InteractionGraph& graph, const TrackFeatureTable& features, const SplitAssignment& split,
                 TrainConfig config)
    : features_(&features),
      config_(std::move(config)),
      optimizer_(config_.optimizer, config_.lr, config_.beta1, config_.beta2, config_.adam_eps) {
  config_.validate();
  features.validate(graph.num_tracks());
  if (split.split.size() != graph.num_playlists()) throw ValidationError("split does not match the graph");
  train_graph_ = train_view(graph, split);
  popularity_ = assign_bins(count_appearances(graph, split));
  x_ = build_input_features(features, config_.feature_flags);
  neighbors_ = build_neighbor_table(train_graph_, config_.walk, mix_seed(config_.seed, 1));
  const EncoderDims dims{static_cast<int>(x_.cols()), config_.hidden, config_.dim};
  params_ = init_params(dims, mix_seed(config_.seed, 2));
  batches_per_epoch_ = config_.batches_per_epoch > 0
                           ? config_.batches_per_epoch
                           : std::max<int>(1, static_cast<int>(train_graph_.num_edges()) / config_.batch_size);
}

void Trainer::set_params(EncoderParams p) {
  if (!(p.dims == params_.dims)) throw ValidationError("parameter dimensions do not match the model");
  p.version = params_.version + 1;
  params_ = std::move(p);
}

Matrix Trainer::embeddings() const { return embed_all(params_, x_, neighbors_); }

Trainer::BatchLoss Trainer::batch_loss(long long step, double gamma, const EncoderParams& params,
                                       EncoderGrads* grad, FrozenSelection* frozen) const {
  const auto n = static_cast<TrackId>(train_graph_.num_tracks());
  const std::uint64_t step_seed = mix_seed(config_.seed ^ 0x7472616eULL, static_cast<std::uint64_t>(step));

  const auto pairs =
      sample_positive_pairs(train_graph_, static_cast<std::size_t>(config_.batch_size), mix_seed(step_seed, 0));
  struct Example {
    TrackId a, b;
    std::uint8_t label;
  };
  std::vector<Example> examples;
  examples.reserve(pairs.size() * (1 + static_cast<std::size_t>(config_.negatives)));
  for (std::size_t j = 0; j < pairs.size(); ++j) {
    const auto [a, b] = pairs[j];
    examples.push_back({a, b, 1});
    for (TrackId c : sample_negatives(train_graph_, a, static_cast<std::size_t>(config_.negatives),
                                      mix_seed(step_seed, 1 + j))) {
      examples.push_back({a, c, 0});
    }
  }

  const bool use_fairness = gamma > 0;
  FairnessBatch fb;
  if (use_fairness) {
    const auto pool_size = std::min<std::size_t>(static_cast<std::size_t>(config_.fairness.pool_size),
                                                 static_cast<std::size_t>(n));
    const auto max_anchors = std::min<std::size_t>(static_cast<std::size_t>(config_.fairness.anchors), pool_size);
    std::vector<TrackId> anchors;
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    for (const auto& [a, b] : pairs) {
      for (TrackId t : {a, b}) {
        if (anchors.size() < max_anchors && !seen[t]) {
          seen[t] = 1;
          anchors.push_back(t);
        }
      }
    }
    fb = sample_fairness_batch(static_cast<std::size_t>(n), anchors, pool_size, mix_seed(step_seed, 1u << 30));
  }

  std::vector<TrackId> tracks;
  for (const auto& e : examples) {
    tracks.push_back(e.a);
    tracks.push_back(e.b);
  }
  tracks.insert(tracks.end(), fb.pool.begin(), fb.pool.end());
  std::sort(tracks.begin(), tracks.end());
  tracks.erase(std::unique(tracks.begin(), tracks.end()), tracks.end());
  std::vector<int> row(static_cast<std::size_t>(n), -1);
  for (std::size_t r = 0; r < tracks.size(); ++r) row[tracks[r]] = static_cast<int>(r);

  const ForwardPass pass = forward(params, x_, neighbors_, tracks);
  const Matrix& z = pass.z;
  Matrix dz = Matrix::Zero(z.rows(), z.cols());

  Vector logits(static_cast<Eigen::Index>(examples.size()));
  std::vector<std::uint8_t> labels(examples.size());
  for (std::size_t j = 0; j < examples.size(); ++j) {
    logits[static_cast<Eigen::Index>(j)] = z.row(row[examples[j].a]).dot(z.row(row[examples[j].b]));
    labels[j] = examples[j].label;
  }
  const FocalValue focal = focal_loss(logits, labels, config_.focal);
  for (std::size_t j = 0; j < examples.size(); ++j) {
    const double g = focal.grad[static_cast<Eigen::Index>(j)];
    const int ra = row[examples[j].a];
    const int rb = row[examples[j].b];
    dz.row(ra) += g * z.row(rb);
    dz.row(rb) += g * z.row(ra);
  }

  BatchLoss out;
  out.utility = focal.loss;
  if (use_fairness) {
    Matrix z_pool(static_cast<Eigen::Index>(fb.pool.size()), z.cols());
    for (std::size_t r = 0; r < fb.pool.size(); ++r) z_pool.row(static_cast<Eigen::Index>(r)) = z.row(row[fb.pool[r]]);
    std::vector<int> anchor_rows;
    for (TrackId a : fb.anchors) {
      anchor_rows.push_back(
          static_cast<int>(std::lower_bound(fb.pool.begin(), fb.pool.end(), a) - fb.pool.begin()));
    }
    const Matrix s_g = apriori_similarity(fb.pool, *features_).values;
    std::optional<BoostMatrix> boost;
    if (config_.fairness.boost) boost = boost_matrix(fb.pool, popularity_);
    const bool reuse = frozen && frozen->set;
    const FairnessStep fs = fairness_step(z_pool, s_g, anchor_rows, config_.fairness, boost ? &*boost : nullptr,
                                          reuse ? &frozen->plan : nullptr, reuse ? &frozen->rescale : nullptr);
    if (frozen && !frozen->set) {
      frozen->plan = fs.plan;
      frozen->rescale = fs.rescale;
      frozen->set = true;
    }
    const double scale = 1.0 / static_cast<double>(anchor_rows.size());
    out.fairness = fs.loss * scale;
    for (std::size_t r = 0; r < fb.pool.size(); ++r) {
      dz.row(row[fb.pool[r]]) += gamma * scale * fs.grad_z.row(static_cast<Eigen::Index>(r));
    }
    out.total = out.utility + gamma * out.fairness;
  } else {
    out.total = out.utility;
  }
  if (grad) *grad = backward(params, pass, neighbors_, dz);
  return out;
}

void Trainer::run_stage(int stage, int epochs, double gamma) {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  // Parameters that last produced a finite loss; restored on divergence.
  EncoderParams last_good = params_;
  auto diverged = [&](int epoch) {
    std::string where = "training diverged in stage " + std::to_string(stage) + ", epoch " +
                        std::to_string(epoch) + ", step " + std::to_string(step_);
    if (config_.abort_checkpoint) {
      save_checkpoint({last_good, config_.seed, describe(config_)}, *config_.abort_checkpoint);
      where += "; last finite parameters saved to " + config_.abort_checkpoint->string();
    }
    params_ = last_good;
    return RuntimeError(where);
  };
  for (int e = 0; e < epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochLog entry;
    entry.stage = stage;
    entry.epoch = epoch_ + 1;
    for (int b = 0; b < batches_per_epoch_; ++b) {
      EncoderGrads g;
      const BatchLoss l = batch_loss(step_, gamma, params_, &g);
      if (!std::isfinite(l.total) || !all_finite(g)) throw diverged(entry.epoch);
      last_good = params_;
      optimizer_.step(params_, g);
      if (!all_finite(params_)) throw diverged(entry.epoch);
      entry.utility += l.utility;
      entry.fairness += l.fairness;
      entry.total += l.total;
      ++step_;
    }
    entry.utility /= batches_per_epoch_;
    entry.fairness /= batches_per_epoch_;
    entry.total /= batches_per_epoch_;
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ++epoch_;
    log_.epochs.push_back(entry);
  }
}

TrainResult train(const InteractionGraph& graph, const TrackFeatureTable& features, const SplitAssignment& split,
                  const TrainConfig& config) {
  Trainer t(graph, features, split, config);
  t.run_stage1();
  t.run_stage2();
  return {t.params(), t.embeddings(), t.log()};
}

// ---- checkpoint ----

namespace {

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& s) : s_(s) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, s_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string v = s_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  bool done() const { return pos_ == s_.size(); }

 private:
  void need(std::size_t n) const {
    if (s_.size() - pos_ < n) throw ValidationError("checkpoint is truncated");
  }
  const std::string& s_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[4] = {'F', 'R', 'C', 'K'};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, c.seed);
  put<std::int32_t>(out, c.params.dims.input);
  put<std::int32_t>(out, c.params.dims.hidden);
  put<std::int32_t>(out, c.params.dims.output);
  put<std::int32_t>(out, 0);
  put<std::uint64_t>(out, c.config.size());
  out += c.config;
  put<std::uint64_t>(out, c.params.size());
  for (auto blk : c.params.blocks()) {
    for (double v : blk) put<double>(out, v);
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.bytes(4) != std::string(kMagic, 4)) throw ValidationError("not a checkpoint file");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ValidationError("checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  Checkpoint c;
  c.seed = r.get<std::uint64_t>();
  EncoderDims d;
  d.input = r.get<std::int32_t>();
  d.hidden = r.get<std::int32_t>();
  d.output = r.get<std::int32_t>();
  if (r.get<std::int32_t>() != 0) throw ValidationError("checkpoint header is corrupt");
  c.config = r.bytes(r.get<std::uint64_t>());
  c.params = EncoderParams::zeros(d);
  if (r.get<std::uint64_t>() != c.params.size()) throw ValidationError("checkpoint parameter count mismatch");
  for (auto blk : c.params.blocks()) {
    for (double& v : blk) v = r.get<double>();
  }
  if (!r.done()) throw ValidationError("checkpoint has trailing bytes");
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  io::write_atomic(path, serialize_checkpoint(c));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(io::read_file(path)); }

}  // namespace fairrec
