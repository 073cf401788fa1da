#pragma once

#include "fairrec/data_store.hpp"
#include "fairrec/trainer.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace fairrec {

// Every setting the command-line tool understands. All keys have defaults;
// a config file and flags override them in that order.
struct RunConfig {
  std::uint64_t seed = 42;
  int threads = 0;  // 0: OpenMP default

  std::string data_dir = "data";
  std::string out_dir = "out";
  double train_fraction = 0.8;
  double valid_fraction = 0.1;
  double test_fraction = 0.1;
  int peek_k = 5;
  bool use_name = false;
  bool use_image = false;

  int walks = 200;
  int walk_len = 2;
  int top_m = 20;
  int negatives = 5;

  int hidden = 64;
  int dim = 64;

  int stage1_epochs = 20;
  int stage2_epochs = 20;
  int batch_size = 64;
  int batches_per_epoch = 0;
  double lr = 0.001;
  std::string optimizer = "adam";
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double focal_gamma = 2;
  double focal_alpha = 0.5;

  double gamma = 0;
  double alpha = 1;
  int k_fair = 10;
  bool boost = false;
  double rescale_lo = 1;
  double rescale_hi = 10;
  int pool_size = 64;
  int fairness_anchors = 16;

  int k = 100;
  double short_head_fraction = 0.2;
  std::string eval_split = "test";

  int n_top = 100;
  int artist_neighbors = 100;
  std::vector<double> gammas = {0, 0.25, 0.5, 1};

  int synth_playlists = 50;
  int synth_tracks = 300;
  int synth_artists = 60;
  double synth_skew = 1.0;
  int synth_clusters = 6;
  int synth_min_len = 5;
  int synth_max_len = 15;
  double synth_mix = 0.1;

  // Sets one key from its text form. Throws ConfigError on unknown keys and
  // malformed values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  void validate() const;
  TrainConfig train_config() const;
  SynthSpec synth_spec() const;
  Split evaluation_split() const;
  // Sorted keys, typed values.
  nlohmann::json to_json() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
};

const std::vector<ConfigKey>& config_keys();

// `key = value` lines; '#' starts a comment. Unknown or repeated keys are
// errors.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source);
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);
std::string format_config(const RunConfig& cfg);

}  // namespace fairrec
