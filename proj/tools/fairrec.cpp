// Command-line front end: data preparation, training, recommendation,
// evaluation and the analysis experiments.

#include "fairrec/config.hpp"
#include "fairrec/experiments.hpp"
#include "fairrec/io.hpp"
#include "fairrec/kernels.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <random>

namespace fs = std::filesystem;
using namespace fairrec;
using nlohmann::json;

namespace {

struct Dataset {
  InteractionGraph graph;
  TrackFeatureTable features;
  SplitAssignment split;
};

fs::path out_path(const RunConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.out_dir);
  return fs::path(cfg.out_dir) / name;
}

void write_json(const fs::path& path, const json& j) { io::write_atomic(path, j.dump(2) + "\n"); }

json with_config(json j, const RunConfig& cfg) {
  j["config"] = cfg.to_json();
  return j;
}

// Reads interactions, features and optional dense blocks from data_dir. Uses
// data_dir/splits.csv when present, otherwise splits by the configured
// fractions and seed.
Dataset load_dataset(const RunConfig& cfg) {
  const fs::path dir = cfg.data_dir;
  Dataset d;
  d.graph = load_interactions(dir / "interactions.csv");
  d.features = load_features(dir / "features.csv", d.graph);
  if (cfg.use_name) d.features.name_emb = load_dense_block(dir / "name_emb.csv", d.graph, kNameDims);
  if (cfg.use_image) d.features.image_emb = load_dense_block(dir / "image_emb.csv", d.graph, kImageDims);
  SplitAssignment split = fs::exists(dir / "splits.csv")
                              ? load_splits(dir / "splits.csv", d.graph)
                              : split_playlists(d.graph, cfg.train_fraction, cfg.valid_fraction, cfg.test_fraction,
                                                cfg.seed);
  d.split = split_peek_holdout(d.graph, std::move(split), cfg.peek_k);
  return d;
}

std::string model_method(const RunConfig& cfg) {
  if (cfg.gamma == 0) return "pinsage";
  return cfg.boost ? "boost" : "redress";
}

// Model built from the configuration, then either trained or restored from a
// checkpoint.
struct Model {
  std::unique_ptr<Trainer> trainer;
  Matrix z;
};

Model build_model(const Dataset& d, const RunConfig& cfg, const std::string& checkpoint) {
  Model m{std::make_unique<Trainer>(d.graph, d.features, d.split, cfg.train_config()), {}};
  if (!checkpoint.empty()) {
    m.trainer->set_params(load_checkpoint(checkpoint).params);
  } else {
    m.trainer->run_stage1();
    m.trainer->run_stage2();
  }
  m.z = m.trainer->embeddings();
  return m;
}

int cmd_stats(const RunConfig& cfg) {
  const Dataset d = load_dataset(cfg);
  json j;
  j["playlists"] = d.graph.num_playlists();
  j["tracks"] = d.graph.num_tracks();
  j["artists"] = d.graph.num_artists();
  j["edges"] = d.graph.num_edges();
  j["train_playlists"] = d.split.playlists_in(Split::train).size();
  j["valid_playlists"] = d.split.playlists_in(Split::valid).size();
  j["test_playlists"] = d.split.playlists_in(Split::test).size();
  j["excluded_playlists"] = d.split.excluded;
  j = with_config(j, cfg);
  write_json(out_path(cfg, "stats.json"), j);
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_synth(const RunConfig& cfg) {
  const SyntheticData s = generate_synthetic(cfg.synth_spec(), cfg.seed);
  const fs::path dir = cfg.data_dir;
  fs::create_directories(dir);
  write_interactions(s.graph, dir / "interactions.csv");
  io::write_atomic(dir / "features.csv", format_features(s.graph, s.features));
  const SplitAssignment split =
      split_playlists(s.graph, cfg.train_fraction, cfg.valid_fraction, cfg.test_fraction, cfg.seed);
  io::write_atomic(dir / "splits.csv", format_splits(s.graph, split));
  std::cout << "wrote " << s.graph.num_playlists() << " playlists, " << s.graph.num_tracks() << " tracks, "
            << s.graph.num_artists() << " artists to " << dir.string() << "\n";
  return 0;
}

int cmd_bins(const RunConfig& cfg) {
  const Dataset d = load_dataset(cfg);
  const PopularityIndex index = assign_bins(count_appearances(d.graph, d.split));
  const auto lt = long_tail_set(index, cfg.short_head_fraction);
  std::string csv = "track_id,count,bin,long_tail\n";
  for (std::size_t t = 0; t < index.num_tracks(); ++t) {
    csv += d.graph.track_names[t] + "," + std::to_string(index.count[t]) + "," + std::to_string(index.bin[t]) + "," +
           (lt[t] ? "1" : "0") + "\n";
  }
  io::write_atomic(out_path(cfg, "bins.csv"), csv);
  const BinBreakdown b = breakdown_report(index);
  json j;
  j["max_count"] = index.max_count;
  j["tracks_per_bin"] = b.tracks;
  j["interaction_share_per_bin"] = b.interaction_share;
  write_json(out_path(cfg, "bins.json"), with_config(j, cfg));
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const Dataset d = load_dataset(cfg);
  TrainConfig tc = cfg.train_config();
  tc.abort_checkpoint = out_path(cfg, "model.diverged.bin");
  Trainer t(d.graph, d.features, d.split, tc);
  t.run_stage1();
  t.run_stage2();
  save_checkpoint({t.params(), cfg.seed, format_config(cfg)}, out_path(cfg, "model.bin"));
  io::write_atomic(out_path(cfg, "train_log.csv"), t.log().format_csv());
  io::write_atomic(out_path(cfg, "splits.csv"), format_splits(d.graph, d.split));
  const auto& last = t.log().epochs;
  std::cout << "trained " << last.size() << " epochs";
  if (!last.empty()) std::cout << ", final total loss " << last.back().total;
  std::cout << "\n";
  return 0;
}

int cmd_recommend(const RunConfig& cfg, const std::string& method, const std::string& checkpoint) {
  const Dataset d = load_dataset(cfg);
  const auto playlists = d.split.evaluated_in(cfg.evaluation_split());
  RecommendationRun run;
  if (method == "mostpop") {
    run = mostpop_baseline(assign_bins(count_appearances(d.graph, d.split)), playlists, cfg.k);
  } else if (method == "features") {
    run = recommend(features_baseline(d.features, {cfg.use_name, cfg.use_image}), playlists, cfg.k, "features");
  } else if (method == "model") {
    const std::string ckpt = checkpoint.empty() ? out_path(cfg, "model.bin").string() : checkpoint;
    run = recommend(build_model(d, cfg, ckpt).z, playlists, cfg.k, model_method(cfg));
  } else {
    throw ConfigError("unknown method '" + method + "' (model, features or mostpop)");
  }
  io::write_atomic(out_path(cfg, "run.csv"), format_run(run, d.graph));
  std::cout << "wrote " << run.lists.size() << " recommendation lists\n";
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& method, const std::string& run_file) {
  const Dataset d = load_dataset(cfg);
  const PopularityIndex index = assign_bins(count_appearances(d.graph, d.split));
  const std::string path = run_file.empty() ? out_path(cfg, "run.csv").string() : run_file;
  const RecommendationRun run = load_run(path, d.graph, method, cfg.k);
  EvalInputs in{&d.graph, &d.features, &d.split, &index, cfg.short_head_fraction};
  const EvalReport r = evaluate_all(run, in, cfg.to_json());
  const json j = report_json(r, d.graph);
  write_json(out_path(cfg, "report.json"), j);
  json summary = j;
  summary.erase("per_playlist");
  summary.erase("config");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_cf_sim(const RunConfig& cfg) {
  const Dataset d = load_dataset(cfg);
  const PopularityIndex index = assign_bins(count_appearances(d.graph, d.split));
  const CounterfactualData cf =
      counterfactual_duplicate(d.graph, d.features, d.split, index, {cfg.n_top, mix_seed(cfg.seed, 7)});
  Trainer base(cf.graph, cf.features, cf.split, cfg.train_config());
  base.run_stage1();
  json results = json::array();
  std::string csv = "gamma,group,track_id,x,y\n";
  for (double gamma : cfg.gammas) {
    Trainer t = base;
    t.run_stage(2, cfg.stage2_epochs, gamma);
    const CentroidReport r = centroid_report(t.embeddings(), cf.originals, cf.duplicates);
    results.push_back({{"gamma", gamma},
                       {"distance", r.distance},
                       {"orientation", r.orientation},
                       {"rank_deficient", r.rank_deficient}});
    for (Eigen::Index i = 0; i < r.og.rows(); ++i) {
      csv += io::format_double(gamma) + ",og," + cf.graph.track_names[cf.originals[i]] + "," +
             io::format_double(r.og(i, 0)) + "," + io::format_double(r.og(i, 1)) + "\n";
      csv += io::format_double(gamma) + ",cf," + cf.graph.track_names[cf.duplicates[i]] + "," +
             io::format_double(r.cf(i, 0)) + "," + io::format_double(r.cf(i, 1)) + "\n";
    }
  }
  json j;
  j["method"] = cfg.boost ? "boost" : "redress";
  j["n_top"] = cfg.n_top;
  j["results"] = results;
  write_json(out_path(cfg, "cf_sim.json"), with_config(j, cfg));
  io::write_atomic(out_path(cfg, "cf_points.csv"), csv);
  std::cout << results.dump(2) << "\n";
  return 0;
}

int cmd_artist_sim(const RunConfig& cfg, const std::string& checkpoint) {
  const Dataset d = load_dataset(cfg);
  const Model m = build_model(d, cfg, checkpoint);
  const Matrix artists = artist_embedding(m.z, d.graph.track_artist, d.graph.num_artists());
  const PopularityIndex artist_pop =
      artist_popularity(m.trainer->popularity(), d.graph.track_artist, d.graph.num_artists());
  const ArtistNeighborReport r = artist_neighbor_popularity(artists, artist_pop, cfg.artist_neighbors);
  std::string csv = "artist_id,bin\n";
  for (ArtistId a : r.top_artists) csv += d.graph.artist_names[a] + "," + std::to_string(artist_pop.bin[a]) + "\n";
  json j;
  j["method"] = model_method(cfg);
  j["mean_neighbor_popularity"] = r.mean_popularity;
  j["neighbors"] = r.neighbors;
  j["top_artists"] = r.top_artists.size();
  write_json(out_path(cfg, "artist_sim.json"), with_config(j, cfg));
  io::write_atomic(out_path(cfg, "artist_top.csv"), csv);
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_sweep(const RunConfig& cfg) {
  const Dataset d = load_dataset(cfg);
  Trainer base(d.graph, d.features, d.split, cfg.train_config());
  base.run_stage1();
  SweepInputs in;
  in.eval = {&d.graph, &d.features, &d.split, &base.popularity(), cfg.short_head_fraction};
  in.playlists = d.split.evaluated_in(cfg.evaluation_split());
  in.k = cfg.k;
  const auto rows = gamma_sweep(base, cfg.gammas, in);
  io::write_atomic(out_path(cfg, "sweep.csv"), format_sweep_csv(rows));
  json points = json::array();
  for (const auto& row : rows) {
    json p = report_json(row.report, d.graph);
    p.erase("per_playlist");
    p.erase("config");
    p["gamma"] = row.gamma;
    points.push_back(p);
  }
  json j;
  j["points"] = points;
  write_json(out_path(cfg, "sweep.json"), with_config(j, cfg));
  std::cout << format_sweep_csv(rows);
  return 0;
}

int cmd_visibility(const RunConfig& cfg, const std::string& method, const std::string& run_file) {
  const Dataset d = load_dataset(cfg);
  const PopularityIndex index = assign_bins(count_appearances(d.graph, d.split));
  const std::string path = run_file.empty() ? out_path(cfg, "run.csv").string() : run_file;
  const auto share = visibility_by_bin(load_run(path, d.graph, method, cfg.k), index);
  std::string csv = "bin,share\n";
  for (int b = 0; b < kPopularityBins; ++b) csv += std::to_string(b) + "," + io::format_double(share[b]) + "\n";
  io::write_atomic(out_path(cfg, "visibility.csv"), csv);
  json j;
  j["method"] = method;
  j["share_per_bin"] = share;
  write_json(out_path(cfg, "visibility.json"), with_config(j, cfg));
  std::cout << csv;
  return 0;
}

// Small end-to-end checks that need no data files.
int cmd_selftest(const RunConfig& cfg) {
  int failures = 0;
  auto report = [&](const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << "  " << detail << "\n";
    if (!ok) ++failures;
  };

  SynthSpec spec;
  spec.playlists = 8;
  spec.tracks = 24;
  spec.artists = 6;
  spec.clusters = 3;
  spec.min_len = 4;
  spec.max_len = 8;
  const SyntheticData s = generate_synthetic(spec, cfg.seed);
  const SplitAssignment split = split_peek_holdout(s.graph, split_playlists(s.graph, 0.5, 0.25, 0.25, cfg.seed), 2);
  TrainConfig tc;
  tc.seed = cfg.seed;
  tc.hidden = 6;
  tc.dim = 4;
  tc.batch_size = 6;
  tc.negatives = 2;
  tc.fairness.pool_size = 10;
  tc.fairness.anchors = 3;
  tc.fairness.k_fair = 4;
  tc.fairness.boost = true;
  const Trainer trainer(s.graph, s.features, split, tc);
  Trainer::FrozenSelection frozen;
  const ParamObjective objective = [&](const EncoderParams& p, EncoderGrads* g) {
    return trainer.batch_loss(0, 0.5, p, g, &frozen).total;
  };
  const GradCheckResult gc = gradient_check(trainer.params(), objective);
  report("gradient", gc.max_rel_error < 1e-5,
         "max relative error " + io::format_double(gc.max_rel_error) + " over " + std::to_string(gc.checked));

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u(-1, 1);
  Matrix catalog(50, 5), queries(7, 5);
  for (Eigen::Index i = 0; i < catalog.size(); ++i) catalog.data()[i] = u(rng);
  for (Eigen::Index i = 0; i < queries.size(); ++i) queries.data()[i] = u(rng);
  const std::vector<std::vector<TrackId>> exclude(7, std::vector<TrackId>{0, 3});
  report("topk", kernels::topk_cosine(catalog, queries, exclude, 10) ==
                     kernels::serial::topk_cosine(catalog, queries, exclude, 10),
         "parallel vs serial top-k");

  bool bins_ok = true;
  for (std::int64_t a = 0; a <= 1000; ++a) {
    const int b = popularity_bin(a, 1000);
    if (b < 0 || b > 9 || (a > 0 && b < popularity_bin(a - 1, 1000))) bins_ok = false;
  }
  report("bins", bins_ok, "range and monotonicity up to 1000");

  const std::vector<double> a = {1, 2, 3, 4, 5, 6, 7}, b = {0, 0, 0, 0, 0, 0, 0};
  const auto w1 = wilcoxon_signed_rank(a, b);
  const auto w2 = wilcoxon_signed_rank(b, a);
  report("wilcoxon", w1.p_value == w2.p_value && std::abs(w1.p_value - 2.0 / 128) < 1e-15,
         "p = " + io::format_double(w1.p_value));
  return failures == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fairness-aware graph recommender for playlist continuation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  app.add_option("--config", config_file, "flat 'key = value' config file");
  std::map<std::string, std::string> flag_values;
  for (const auto& key : config_keys()) {
    app.add_option("--" + key.name, flag_values[key.name], key.help + " (default " + RunConfig{}.get(key.name) + ")");
  }
  app.add_option("--data", flag_values["data_dir"], "alias of --data_dir");
  app.add_option("--out", flag_values["out_dir"], "alias of --out_dir");

  std::string method, checkpoint, run_file;
  auto* stats = app.add_subcommand("stats", "dataset and split summary");
  auto* synth = app.add_subcommand("synth", "write a synthetic clustered dataset to the data directory");
  for (const char* k : {"playlists", "tracks", "artists", "skew", "clusters"}) {
    synth->add_option(std::string("--") + k, flag_values[std::string("synth_") + k], std::string("alias of --synth_") + k);
  }
  auto* bins = app.add_subcommand("bins", "popularity bins and long-tail membership");
  auto* train = app.add_subcommand("train", "two-stage training; writes model.bin and train_log.csv");
  auto* rec = app.add_subcommand("recommend", "top-k lists for the evaluated playlists; writes run.csv");
  rec->add_option("--method", method, "model (default), features or mostpop");
  rec->add_option("--checkpoint", checkpoint, "model checkpoint (default out_dir/model.bin)");
  auto* eval = app.add_subcommand("evaluate", "metrics of a run; writes report.json");
  eval->add_option("--run", run_file, "run file (default out_dir/run.csv)");
  eval->add_option("--method", method, "method tag stored in the report (default from gamma and boost)");
  auto* cf = app.add_subcommand("cf-sim", "counterfactual duplicate experiment over the gamma grid");
  auto* artist = app.add_subcommand("artist-sim", "popularity of the nearest artists to the most popular ones");
  artist->add_option("--checkpoint", checkpoint, "model checkpoint (trains when omitted)");
  auto* sweep = app.add_subcommand("sweep", "stage-2 runs over the gamma grid from one stage-1 model");
  auto* vis = app.add_subcommand("visibility", "share of recommendations per popularity bin");
  vis->add_option("--run", run_file, "run file (default out_dir/run.csv)");
  vis->add_option("--method", method, "method tag stored in the output (default from gamma and boost)");
  auto* self = app.add_subcommand("selftest", "gradient check and oracle spot checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    RunConfig cfg;
    if (!config_file.empty()) apply_config_file(cfg, config_file);
    for (const auto& [key, value] : flag_values) {
      if (app.get_option("--" + key)->count() > 0) cfg.set(key, value);
    }
    if (app.get_option("--data")->count() > 0) cfg.set("data_dir", flag_values["data_dir"]);
    if (app.get_option("--out")->count() > 0) cfg.set("out_dir", flag_values["out_dir"]);
    for (const char* k : {"playlists", "tracks", "artists", "skew", "clusters"}) {
      if (synth->get_option(std::string("--") + k)->count() > 0) {
        cfg.set(std::string("synth_") + k, flag_values[std::string("synth_") + k]);
      }
    }
    cfg.validate();
    if (cfg.threads > 0) omp_set_num_threads(cfg.threads);

    if (*stats) return cmd_stats(cfg);
    if (*synth) return cmd_synth(cfg);
    if (*bins) return cmd_bins(cfg);
    if (*train) return cmd_train(cfg);
    if (*rec) return cmd_recommend(cfg, method.empty() ? "model" : method, checkpoint);
    if (method.empty()) method = model_method(cfg);
    if (*eval) return cmd_evaluate(cfg, method, run_file);
    if (*cf) return cmd_cf_sim(cfg);
    if (*artist) return cmd_artist_sim(cfg, checkpoint);
    if (*sweep) return cmd_sweep(cfg);
    if (*vis) return cmd_visibility(cfg, method, run_file);
    if (*self) return cmd_selftest(cfg);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
