#include "fairrec/config.hpp"

#include "fairrec/io.hpp"

#include <charconv>
#include <map>
#include <set>
#include <sstream>
#include <variant>

namespace fairrec {

namespace {

using Field = std::variant<int RunConfig::*, std::uint64_t RunConfig::*, double RunConfig::*, bool RunConfig::*,
                           std::string RunConfig::*, std::vector<double> RunConfig::*>;

struct Entry {
  const char* name;
  Field field;
  const char* help;
};

const std::vector<Entry>& table() {
  static const std::vector<Entry> t = {
      {"seed", &RunConfig::seed, "master random seed"},
      {"threads", &RunConfig::threads, "worker threads, 0 for the OpenMP default"},
      {"data_dir", &RunConfig::data_dir, "input directory"},
      {"out_dir", &RunConfig::out_dir, "output directory"},
      {"train_fraction", &RunConfig::train_fraction, "share of playlists used for training"},
      {"valid_fraction", &RunConfig::valid_fraction, "share of playlists used for validation"},
      {"test_fraction", &RunConfig::test_fraction, "share of playlists used for testing"},
      {"peek_k", &RunConfig::peek_k, "tracks revealed per evaluated playlist"},
      {"use_name", &RunConfig::use_name, "append name embeddings to the model input"},
      {"use_image", &RunConfig::use_image, "append image embeddings to the model input"},
      {"walks", &RunConfig::walks, "random walks per track"},
      {"walk_len", &RunConfig::walk_len, "edges per walk (even)"},
      {"top_m", &RunConfig::top_m, "neighbours kept per track"},
      {"negatives", &RunConfig::negatives, "negative samples per positive pair"},
      {"hidden", &RunConfig::hidden, "hidden layer width"},
      {"dim", &RunConfig::dim, "embedding width"},
      {"stage1_epochs", &RunConfig::stage1_epochs, "utility-only epochs"},
      {"stage2_epochs", &RunConfig::stage2_epochs, "utility + fairness epochs"},
      {"batch_size", &RunConfig::batch_size, "positive pairs per step"},
      {"batches_per_epoch", &RunConfig::batches_per_epoch, "steps per epoch, 0 for edges / batch_size"},
      {"lr", &RunConfig::lr, "learning rate"},
      {"optimizer", &RunConfig::optimizer, "adam or sgd"},
      {"beta1", &RunConfig::beta1, "adam first-moment decay"},
      {"beta2", &RunConfig::beta2, "adam second-moment decay"},
      {"adam_eps", &RunConfig::adam_eps, "adam denominator offset"},
      {"focal_gamma", &RunConfig::focal_gamma, "focal loss focusing exponent"},
      {"focal_alpha", &RunConfig::focal_alpha, "focal loss weight of positives"},
      {"gamma", &RunConfig::gamma, "fairness weight in stage 2"},
      {"alpha", &RunConfig::alpha, "sigmoid sharpness of the learned ordering"},
      {"k_fair", &RunConfig::k_fair, "top-k lists used for fairness pairs"},
      {"boost", &RunConfig::boost, "add popularity bin distances inside the fairness loss"},
      {"rescale_lo", &RunConfig::rescale_lo, "lower end of the boosted similarity range"},
      {"rescale_hi", &RunConfig::rescale_hi, "upper end of the boosted similarity range"},
      {"pool_size", &RunConfig::pool_size, "tracks per fairness pool"},
      {"fairness_anchors", &RunConfig::fairness_anchors, "fairness anchors per step"},
      {"k", &RunConfig::k, "recommendations per playlist"},
      {"short_head_fraction", &RunConfig::short_head_fraction, "share of tracks in the short head"},
      {"eval_split", &RunConfig::eval_split, "valid or test"},
      {"n_top", &RunConfig::n_top, "tracks duplicated by cf-sim"},
      {"artist_neighbors", &RunConfig::artist_neighbors, "nearest artists averaged by artist-sim"},
      {"gammas", &RunConfig::gammas, "comma-separated fairness weights for sweep"},
      {"synth_playlists", &RunConfig::synth_playlists, "synthetic playlists"},
      {"synth_tracks", &RunConfig::synth_tracks, "synthetic tracks"},
      {"synth_artists", &RunConfig::synth_artists, "synthetic artists"},
      {"synth_skew", &RunConfig::synth_skew, "power-law exponent of synthetic track popularity"},
      {"synth_clusters", &RunConfig::synth_clusters, "synthetic sonic clusters"},
      {"synth_min_len", &RunConfig::synth_min_len, "shortest synthetic playlist"},
      {"synth_max_len", &RunConfig::synth_max_len, "longest synthetic playlist"},
      {"synth_mix", &RunConfig::synth_mix, "chance a synthetic track comes from outside the playlist's cluster"},
  };
  return t;
}

const Entry& find(const std::string& key) {
  for (const auto& e : table()) {
    if (key == e.name) return e;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || v.empty()) throw ConfigError("bad value '" + v + "' for " + key);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& raw) {
  const Entry& e = find(key);
  const std::string v = trim(raw);
  std::visit(
      [&](auto member) {
        using T = std::remove_reference_t<decltype(this->*member)>;
        if constexpr (std::is_same_v<T, bool>) {
          if (v == "true" || v == "1") {
            this->*member = true;
          } else if (v == "false" || v == "0") {
            this->*member = false;
          } else {
            throw ConfigError("bad value '" + v + "' for " + key + " (expected true or false)");
          }
        } else if constexpr (std::is_same_v<T, std::string>) {
          this->*member = v;
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
          std::vector<double> out;
          std::stringstream ss(v);
          std::string item;
          while (std::getline(ss, item, ',')) out.push_back(parse_number<double>(key, trim(item)));
          if (out.empty()) throw ConfigError(key + " needs at least one value");
          this->*member = out;
        } else {
          this->*member = parse_number<T>(key, v);
        }
      },
      e.field);
}

std::string RunConfig::get(const std::string& key) const {
  const Entry& e = find(key);
  return std::visit(
      [&](auto member) -> std::string {
        using T = std::remove_cv_t<std::remove_reference_t<decltype(this->*member)>>;
        const auto& v = this->*member;
        if constexpr (std::is_same_v<T, bool>) {
          return v ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::string>) {
          return v;
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
          std::string out;
          for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + io::format_double(v[i]);
          return out;
        } else if constexpr (std::is_same_v<T, double>) {
          return io::format_double(v);
        } else {
          return std::to_string(v);
        }
      },
      e.field);
}

void RunConfig::validate() const {
  train_config().validate();
  if (optimizer != "adam" && optimizer != "sgd") throw ConfigError("optimizer must be adam or sgd");
  (void)evaluation_split();
  if (threads < 0) throw ConfigError("threads must be >= 0");
  if (peek_k < 1) throw ConfigError("peek_k must be >= 1");
  if (k < 1) throw ConfigError("k must be >= 1");
  if (!(short_head_fraction > 0 && short_head_fraction < 1)) throw ConfigError("short_head_fraction must lie in (0, 1)");
  if (n_top < 1) throw ConfigError("n_top must be >= 1");
  if (artist_neighbors < 1) throw ConfigError("artist_neighbors must be >= 1");
  for (double g : gammas) {
    if (!(g >= 0)) throw ConfigError("gammas must be >= 0");
  }
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.stage1_epochs = stage1_epochs;
  t.stage2_epochs = stage2_epochs;
  t.batch_size = batch_size;
  t.batches_per_epoch = batches_per_epoch;
  t.negatives = negatives;
  t.lr = lr;
  t.optimizer = optimizer == "sgd" ? OptimizerKind::sgd : OptimizerKind::adam;
  t.beta1 = beta1;
  t.beta2 = beta2;
  t.adam_eps = adam_eps;
  t.seed = seed;
  t.hidden = hidden;
  t.dim = dim;
  t.feature_flags = {use_name, use_image};
  t.walk = {walks, walk_len, top_m};
  t.fairness.gamma = gamma;
  t.fairness.alpha = alpha;
  t.fairness.k_fair = k_fair;
  t.fairness.boost = boost;
  t.fairness.rescale_lo = rescale_lo;
  t.fairness.rescale_hi = rescale_hi;
  t.fairness.pool_size = pool_size;
  t.fairness.anchors = fairness_anchors;
  t.focal = {focal_gamma, focal_alpha};
  return t;
}

SynthSpec RunConfig::synth_spec() const {
  SynthSpec s;
  s.playlists = synth_playlists;
  s.tracks = synth_tracks;
  s.artists = synth_artists;
  s.skew = synth_skew;
  s.clusters = synth_clusters;
  s.min_len = synth_min_len;
  s.max_len = synth_max_len;
  s.mix = synth_mix;
  return s;
}

Split RunConfig::evaluation_split() const {
  if (eval_split == "valid") return Split::valid;
  if (eval_split == "test") return Split::test;
  throw ConfigError("eval_split must be valid or test");
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& e : table()) {
    std::visit([&](auto member) { j[e.name] = this->*member; }, e.field);
  }
  return j;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& e : table()) k.push_back({e.name, e.help});
    return k;
  }();
  return keys;
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, n, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (!seen.insert(key).second) throw ParseError(source, n, "repeated key '" + key + "'");
    try {
      cfg.set(key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ParseError(source, n, e.what());
    }
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  apply_config_text(cfg, io::read_file(path), path.string());
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& e : table()) out += std::string(e.name) + " = " + cfg.get(e.name) + "\n";
  return out;
}

}  // namespace fairrec
