#pragma once

#include "fairrec/common.hpp"
#include "fairrec/data_store.hpp"
#include "fairrec/encoder.hpp"
#include "fairrec/objective.hpp"
#include "fairrec/popularity.hpp"
#include "fairrec/sampler.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fairrec {

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  int stage1_epochs = 20;
  int stage2_epochs = 20;
  int batch_size = 64;          // positive pairs per step
  int batches_per_epoch = 0;    // 0: training edges / batch_size, at least 1
  int negatives = 5;            // per positive pair
  double lr = 0.001;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 42;
  int hidden = 64;
  int dim = 64;
  FeatureFlags feature_flags;
  WalkParams walk;
  FairnessConfig fairness;
  FocalConfig focal;
  // Where to write the last finite parameters if training diverges.
  std::optional<std::filesystem::path> abort_checkpoint;

  void validate() const;
};

struct EpochLog {
  int stage = 1;
  int epoch = 0;        // global, counted from 1
  double utility = 0;   // batch means
  double fairness = 0;
  double total = 0;
  double seconds = 0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  std::string format_csv() const;
};

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, double beta1, double beta2, double eps);
  void step(EncoderParams& params, const EncoderGrads& grads);
  double lr() const { return lr_; }

 private:
  OptimizerKind kind_;
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::optional<EncoderParams> m_, v_;
};

// Stage 1 minimises the focal utility loss; stage 2 minimises
// utility + gamma * fairness, the fairness term being averaged over the
// fairness anchors of each batch. Batch randomness is keyed by the global step
// index, so a stage-2 run with gamma = 0 repeats what further stage-1 epochs
// would have done.
class Trainer {
 public:
  Trainer(const InteractionGraph& graph, const TrackFeatureTable& features,
          const SplitAssignment& split, TrainConfig config);

  void run_stage1() { run_stage(1, config_.stage1_epochs, 0.0); }
  void run_stage2() { run_stage(2, config_.stage2_epochs, config_.fairness.gamma); }
  void run_stage(int stage, int epochs, double gamma);

  // Loss of one batch at the given parameters, with gradient if requested.
  struct BatchLoss {
    double utility = 0;
    double fairness = 0;
    double total = 0;
  };
  // Fairness pair selection and rescale constants of a batch. An unset value
  // is filled by the first call and reused by later ones, which makes the
  // objective smooth for gradient checks.
  struct FrozenSelection {
    bool set = false;
    FairnessPlan plan;
    Rescale rescale;
  };
  BatchLoss batch_loss(long long step, double gamma, const EncoderParams& params, EncoderGrads* grad,
                       FrozenSelection* frozen = nullptr) const;

  const EncoderParams& params() const { return params_; }
  void set_params(EncoderParams p);
  Matrix embeddings() const;
  const TrainLog& log() const { return log_; }
  const TrainConfig& config() const { return config_; }
  TrainConfig& mutable_config() { return config_; }
  const Matrix& inputs() const { return x_; }
  const NeighborTable& neighbors() const { return neighbors_; }
  const PopularityIndex& popularity() const { return popularity_; }
  const InteractionGraph& train_graph() const { return train_graph_; }
  long long steps_done() const { return step_; }

 private:
  const TrackFeatureTable* features_;
  TrainConfig config_;
  InteractionGraph train_graph_;
  PopularityIndex popularity_;
  Matrix x_;
  NeighborTable neighbors_;
  EncoderParams params_;
  Optimizer optimizer_;
  TrainLog log_;
  long long step_ = 0;
  int epoch_ = 0;
  int batches_per_epoch_ = 1;
};

struct TrainResult {
  EncoderParams params;
  Matrix embeddings;
  TrainLog log;
};

TrainResult train(const InteractionGraph& graph, const TrackFeatureTable& features,
                  const SplitAssignment& split, const TrainConfig& config);

// Binary checkpoint, little-endian:
//   "FRCK" | u32 version | u64 seed | i32 input, hidden, output, 0 |
//   u64 n | n bytes of config text | u64 m | m doubles (w1, b1, w2, b2, w_out,
//   row-major)
struct Checkpoint {
  EncoderParams params;
  std::uint64_t seed = 0;
  std::string config;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const Checkpoint& c);
Checkpoint parse_checkpoint(const std::string& bytes);
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fairrec
