#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "tstar/config.hpp"
#include "tstar/csv.hpp"
#include "tstar/errors.hpp"
#include "tstar/pipeline.hpp"
#include "tstar/synth.hpp"

namespace {

using namespace tstar;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string target;  // optional --target sugar for the config key
  int jobs = 0;        // optional --jobs bound, 0 = from config/env
  bool print_config = false;
};

config::RunConfig resolve_config(const CommonOpts& opts) {
  config::RunConfig cfg;
  if (!opts.config_path.empty()) cfg = config::load_run_config(opts.config_path);
  for (const std::string& kv : opts.overrides) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    config::set_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (const char* env = std::getenv("TSTAR_SEED")) config::set_key(cfg, "seed", env);
  if (const char* env = std::getenv("TSTAR_JOBS")) config::set_key(cfg, "jobs", env);
  if (!opts.target.empty()) config::set_key(cfg, "target", opts.target);
  if (opts.jobs > 0) cfg.jobs = opts.jobs;
  return cfg;
}

std::vector<int> trained_station_indices(const config::RunConfig& cfg,
                                         const pipeline::Dataset& ds) {
  const auto holdouts = config::split_list(cfg.holdout_stations);
  std::vector<int> train;
  for (std::size_t i = 0; i < ds.stations.size(); ++i) {
    bool held = false;
    for (const auto& id : holdouts) held = held || id == ds.stations[i].id;
    if (!held) train.push_back(static_cast<int>(i));
  }
  if (train.empty()) throw ConfigError("holdout_stations excludes every station");
  return train;
}

void write_trained_stations(const config::RunConfig& cfg, const pipeline::Dataset& ds,
                            const std::vector<int>& train) {
  std::ofstream out(cfg.out_dir + "/trained_stations.txt");
  for (int idx : train) out << ds.stations[idx].id << '\n';
}

std::vector<int> read_trained_stations(const config::RunConfig& cfg,
                                       const pipeline::Dataset& ds) {
  std::ifstream in(cfg.out_dir + "/trained_stations.txt");
  if (!in.is_open())
    throw DataError("missing " + cfg.out_dir +
                    "/trained_stations.txt (run the train command first)");
  std::vector<int> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const int idx = ds.station_index(line);
    if (idx < 0) throw DataError("trained station '" + line + "' not present in the bundle");
    out.push_back(idx);
  }
  return out;
}

std::string ckpt_path(const config::RunConfig& cfg, const std::string& name) {
  return cfg.out_dir + "/" + name + ".ckpt";
}

int cmd_synth(const CommonOpts& opts, const std::string& spec_path, const std::string& out_dir) {
  synth::SynthSpec spec;
  if (!spec_path.empty()) spec = config::load_synth_spec(spec_path);
  if (const char* env = std::getenv("TSTAR_SEED")) spec.seed = std::strtoull(env, nullptr, 10);
  (void)opts;
  synth::SynthFiles files;
  synth::generate(spec, out_dir, &files);
  std::cout << "synthetic dataset written under " << out_dir << " (" << spec.station_count
            << " stations, " << spec.days << " days, seed " << spec.seed << ")\n";
  return 0;
}

int cmd_ingest(const config::RunConfig& cfg) {
  pipeline::IngestSummary summary;
  pipeline::Dataset ds =
      pipeline::build_dataset(config::raw_paths(cfg), config::parse_grid_start(cfg), cfg.days,
                              config::quarter_split(cfg), cfg.nu_meters, cfg.jobs, &summary);
  std::filesystem::create_directories(cfg.out_dir);
  config::write_bundle(cfg, ds, summary);
  std::cout << "bundle written to " << config::bundle_dir(cfg) << ": " << ds.stations.size()
            << " stations, " << summary.trips.accepted << " trips accepted, "
            << summary.trips.rejected() << " rejected, " << summary.linked_stations
            << " metro-linked stations\n";
  return 0;
}

pipeline::Stage1Model stage1_from_checkpoint(const std::string& path, DemandKind kind) {
  nn::Checkpoint ckpt = nn::load_checkpoint(path);
  return pipeline::Stage1Model{kind, nn::model_from_checkpoint(ckpt), ckpt.stats, {}};
}

int cmd_train(const config::RunConfig& cfg, const std::string& stage, bool dump_features) {
  pipeline::Dataset ds = config::load_bundle(cfg);
  pipeline::PipelineConfig pcfg = config::to_pipeline_config(cfg);
  const std::vector<int> train = trained_station_indices(cfg, ds);
  pipeline::StationMap map = pipeline::StationMap::subset(ds.stations.size(), train);

  for (const auto& tc : {pcfg.stage1_train, pcfg.stage2_train})
    for (const std::string& warning : tc.validate()) std::cout << "warning: " << warning << '\n';

  if (dump_features) {
    std::vector<features::FeatureFrame> frames;
    for (std::size_t i = 0; i < ds.stations.size(); ++i)
      frames.push_back(features::assemble_stage1_features(ds.stations[i], static_cast<int>(i),
                                                          ds.max_capacity, ds.hgrid, ds.weather,
                                                          ds.holidays));
    features::write_features_csv(cfg.out_dir + "/features.csv", frames);
  }

  pipeline::Stage1Model s1p{DemandKind::pickup, nn::TstModel(nn::EmbedConfig{}, 0, 0), {}, {}};
  pipeline::Stage1Model s1d{DemandKind::dropoff, nn::TstModel(nn::EmbedConfig{}, 0, 0), {}, {}};
  if (stage == "1" || stage == "both") {
    s1p = pipeline::stage1_fit(ds, DemandKind::pickup, pcfg, map);
    s1d = pipeline::stage1_fit(ds, DemandKind::dropoff, pcfg, map);
    nn::save_checkpoint(ckpt_path(cfg, "stage1_pickup"), s1p.model, pcfg.stage1_train, s1p.stats);
    nn::save_checkpoint(ckpt_path(cfg, "stage1_dropoff"), s1d.model, pcfg.stage1_train, s1d.stats);
    write_trained_stations(cfg, ds, train);
    std::cout << "stage-1 models trained (final NLL pickup " << csv::fmt(s1p.history.epoch_nll.back())
              << ", dropoff " << csv::fmt(s1d.history.epoch_nll.back()) << ")\n";
  } else {
    const std::string p = ckpt_path(cfg, "stage1_pickup");
    const std::string d = ckpt_path(cfg, "stage1_dropoff");
    if (!std::filesystem::exists(p) || !std::filesystem::exists(d))
      throw ConfigError("stage 2 requires stage-1 checkpoints (" + p + ", " + d +
                        "); run --stage 1 first");
    s1p = stage1_from_checkpoint(p, DemandKind::pickup);
    s1d = stage1_from_checkpoint(d, DemandKind::dropoff);
  }

  pipeline::Stage1Archive arch_p = pipeline::signal_archive(s1p, ds, pcfg, map);
  pipeline::Stage1Archive arch_d = pipeline::signal_archive(s1d, ds, pcfg, map);
  const pipeline::Stage1Archive& target_arch =
      pcfg.target == DemandKind::pickup ? arch_p : arch_d;
  pipeline::write_archive_csv(cfg.out_dir + "/stage1_archive.csv", ds, target_arch);
  pipeline::VariationSignals signals = pipeline::variation_signals(ds, arch_p, arch_d);
  pipeline::write_signals_csv(cfg.out_dir + "/signals.csv", ds, signals);

  if (stage == "2" || stage == "both") {
    pipeline::Stage2Model s2 = pipeline::stage2_fit(ds, target_arch, signals, pcfg, map);
    nn::save_checkpoint(ckpt_path(cfg, std::string("stage2_") + kind_name(pcfg.target)), s2.model,
                        pcfg.stage2_train, s2.stats);
    std::cout << "stage-2 model trained (final NLL " << csv::fmt(s2.history.epoch_nll.back())
              << ")\n";
  }
  return 0;
}

int cmd_forecast(const config::RunConfig& cfg, const std::string& zero_shot_file,
                 const std::string& station_list) {
  pipeline::Dataset ds = config::load_bundle(cfg);
  pipeline::PipelineConfig pcfg = config::to_pipeline_config(cfg);
  const std::vector<int> train = read_trained_stations(cfg, ds);
  pipeline::StationMap map = pipeline::StationMap::subset(ds.stations.size(), train);

  std::vector<int> targets = train;
  if (!zero_shot_file.empty()) {
    auto parsed = ingest::parse_stations(zero_shot_file);
    targets.clear();
    for (const auto& st : parsed.stations) {
      const int idx = ds.station_index(st.id);
      if (idx < 0)
        throw DataError("zero-shot station '" + st.id + "' has no demand history in the bundle");
      targets.push_back(idx);
    }
  } else if (!station_list.empty()) {
    targets.clear();
    for (const auto& id : config::split_list(station_list)) {
      const int idx = ds.station_index(id);
      if (idx < 0) throw ConfigError("unknown station id '" + id + "'");
      if (map.embed_index[idx] == nn::kMeanEmbedding)
        throw ConfigError("station '" + id +
                          "' was not seen in training; pass it via --zero-shot to use the "
                          "mean-embedding substitution");
      targets.push_back(idx);
    }
  }

  pipeline::Stage1Model s1p = stage1_from_checkpoint(ckpt_path(cfg, "stage1_pickup"),
                                                     DemandKind::pickup);
  pipeline::Stage1Model s1d = stage1_from_checkpoint(ckpt_path(cfg, "stage1_dropoff"),
                                                     DemandKind::dropoff);
  nn::Checkpoint ck2 =
      nn::load_checkpoint(ckpt_path(cfg, std::string("stage2_") + kind_name(pcfg.target)));
  pipeline::Stage2Model s2{pcfg.target, nn::model_from_checkpoint(ck2), ck2.stats, {}};

  pipeline::Stage1Archive arch_p = pipeline::stage1_forecast_rolling(s1p, ds, pcfg, map);
  pipeline::Stage1Archive arch_d = pipeline::stage1_forecast_rolling(s1d, ds, pcfg, map);
  pipeline::VariationSignals signals = pipeline::variation_signals(ds, arch_p, arch_d);
  const pipeline::Stage1Archive& target_arch =
      pcfg.target == DemandKind::pickup ? arch_p : arch_d;

  auto forecasts =
      pipeline::stage2_forecast_range(s2, ds, target_arch, signals, pcfg, map, targets,
                                      ds.qsplit.train_end, ds.qsplit.test_end);
  pipeline::write_forecast_csv(cfg.out_dir + "/forecast.csv", ds, forecasts);
  std::cout << "wrote " << forecasts.size() << " forecasts to " << cfg.out_dir
            << "/forecast.csv\n";
  return 0;
}

std::vector<eval::ScoreRow> rows_from_forecast_file(const config::RunConfig& cfg,
                                                    const pipeline::Dataset& ds,
                                                    const std::string& path, DemandKind kind) {
  csv::Reader reader(path);
  if (!reader.ok()) throw DataError("cannot open forecast file " + path);
  for (const char* col : {"station_id", "quarter_index", "mu", "r", "median", "p05", "p95"})
    if (reader.column(col) < 0)
      throw DataError(path + ": forecast schema is missing column '" + std::string(col) + "'");
  const int c_id = reader.column("station_id");
  const int c_q = reader.column("quarter_index");
  const int c_mu = reader.column("mu");
  const int c_r = reader.column("r");
  const int c_med = reader.column("median");
  const int c_lo = reader.column("p05");
  const int c_hi = reader.column("p95");

  std::vector<eval::ScoreRow> rows;
  std::vector<std::string> f;
  while (reader.next(f)) {
    const int st = ds.station_index(f[c_id]);
    if (st < 0) throw DataError(path + ": unknown station '" + f[c_id] + "'");
    char* end = nullptr;
    const std::size_t q = std::strtoull(f[c_q].c_str(), &end, 10);
    if (end != f[c_q].c_str() + f[c_q].size() || q >= ds.qgrid.length)
      throw DataError(path + ": bad quarter index '" + f[c_q] + "'");
    const double mu = std::strtod(f[c_mu].c_str(), nullptr);
    const double r = std::strtod(f[c_r].c_str(), nullptr);
    if (!(mu > 0.0) || !(r > 0.0)) throw DataError(path + ": non-positive mu/r parameters");
    auto draws = nb::sample({mu, r}, cfg.n_samples,
                            pipeline::forecast_sample_seed(cfg.seed, st, q));
    std::vector<double> samples(draws.begin(), draws.end());
    rows.push_back(eval::score_row(
        f[c_id], static_cast<std::int64_t>(q),
        static_cast<double>(ds.quarter_series(kind)[st].values[q]),
        std::strtod(f[c_med].c_str(), nullptr), std::strtod(f[c_lo].c_str(), nullptr),
        std::strtod(f[c_hi].c_str(), nullptr), samples, cfg.alpha));
  }
  if (rows.empty()) throw DataError(path + ": no forecast rows");
  return rows;
}

int run_cv(const config::RunConfig& cfg, const std::string& mode) {
  pipeline::Dataset probe = config::load_bundle(cfg);
  const std::size_t total = probe.qgrid.length;
  const std::size_t per_week = 7 * 96;
  std::vector<eval::Fold> folds;
  if (mode == "rolling") {
    folds = eval::make_rolling_folds(
        total, eval::RollingSpec{per_week, cfg.cv_initial_weeks, cfg.cv_val_weeks,
                                 cfg.cv_expand_weeks, cfg.cv_max_folds});
  } else {
    folds = eval::make_sliding_folds(
        total, eval::SlidingSpec{per_week, cfg.cv_window_weeks, cfg.cv_val_weeks,
                                 cfg.cv_step_weeks, cfg.cv_max_folds});
  }

  eval::FoldRunner runner = [&](const eval::Fold& fold, std::uint64_t fold_seed) {
    config::RunConfig fold_cfg = cfg;
    pipeline::Dataset ds =
        config::load_bundle_with_split(fold_cfg, SplitSpec{fold.train_end, fold.val_end});
    pipeline::PipelineConfig pcfg = config::to_pipeline_config(fold_cfg);
    pcfg.seed = fold_seed;
    pcfg.train_begin_q = fold.train_begin;
    const std::vector<int> train = trained_station_indices(fold_cfg, ds);
    pipeline::TrainedPipeline tp = pipeline::fit_tstar(ds, pcfg, &train);
    auto forecasts = pipeline::stage2_forecast_range(tp.s2, ds, tp.target_archive(), tp.signals,
                                                     pcfg, tp.map, train, fold.val_begin,
                                                     fold.val_end);
    return pipeline::score_forecasts(ds, pcfg.target, forecasts, pcfg.alpha);
  };

  auto reports = eval::run_folds(folds, runner, cfg.seed);
  for (std::size_t k = 0; k < reports.size(); ++k) {
    const std::string base =
        cfg.out_dir + "/cv_" + mode + "_fold" + std::to_string(k + 1);
    eval::write_summary_csv(base + "_summary.csv", reports[k]);
    std::cout << "fold " << k + 1 << ": train [" << folds[k].train_begin << ","
              << folds[k].train_end << ") val [" << folds[k].val_begin << "," << folds[k].val_end
              << ") mae " << csv::fmt(reports[k].overall.mae) << " mcrps "
              << csv::fmt(reports[k].overall.mcrps) << '\n';
  }
  return 0;
}

int cmd_evaluate(const config::RunConfig& cfg, const std::string& forecast_file,
                 const std::string& cv_mode) {
  if (cv_mode != "none") return run_cv(cfg, cv_mode);
  pipeline::Dataset ds = config::load_bundle(cfg);
  const DemandKind kind = config::parse_kind(cfg.target);
  const std::string path =
      forecast_file.empty() ? cfg.out_dir + "/forecast.csv" : forecast_file;
  auto rows = rows_from_forecast_file(cfg, ds, path, kind);
  auto mask = eval::build_abnormal_mask(ds.quarter_series(kind), ds.qsplit.train_end);
  auto report = eval::build_report(rows, &mask);
  eval::write_report_csv(cfg.out_dir + "/report.csv", rows);
  eval::write_summary_csv(cfg.out_dir + "/report_summary.csv", report);
  eval::write_temporal_csv(cfg.out_dir + "/report_temporal.csv", report);
  std::cout << "overall mae " << csv::fmt(report.overall.mae) << " rmse "
            << csv::fmt(report.overall.rmse) << " mcrps " << csv::fmt(report.overall.mcrps)
            << " mis " << csv::fmt(report.overall.mis) << " over " << report.overall.n
            << " rows\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tstar: two-stage probabilistic demand forecasting for dock-based bike sharing"};
  app.require_subcommand(0, 1);

  CommonOpts opts;
  app.add_option("--config", opts.config_path, "flat key = value configuration file");
  app.add_option("--set", opts.overrides, "override one config key (key=value); repeatable");
  app.add_option("--target", opts.target, "demand kind: pickup or dropoff")
      ->check(CLI::IsMember({"pickup", "dropoff"}));
  app.add_option("--jobs", opts.jobs, "worker bound for station-parallel phases");
  app.add_flag("--print-config", opts.print_config, "print the resolved configuration and exit");

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset in ingest schemas");
  std::string synth_spec, synth_out = "data";
  synth_cmd->add_option("--spec", synth_spec, "synthetic generator spec file");
  synth_cmd->add_option("--out", synth_out, "output directory");

  auto* ingest_cmd = app.add_subcommand("ingest", "parse and validate raw inputs into a bundle");

  auto* train_cmd = app.add_subcommand("train", "train the two-stage models");
  std::string stage = "both";
  bool dump_features = false;
  train_cmd->add_option("--stage", stage, "1, 2 or both")
      ->check(CLI::IsMember({"1", "2", "both"}));
  train_cmd->add_flag("--dump-features", dump_features, "write features.csv for inspection");

  auto* forecast_cmd = app.add_subcommand("forecast", "forecast the test split");
  std::string zero_shot_file, station_list;
  forecast_cmd->add_option("--zero-shot", zero_shot_file,
                           "stations.csv of unseen stations (mean-embedding substitution)");
  forecast_cmd->add_option("--stations", station_list, "comma-separated station subset");

  auto* eval_cmd = app.add_subcommand("evaluate", "score forecasts and write reports");
  std::string forecast_file, cv_mode = "none";
  eval_cmd->add_option("--forecast", forecast_file, "forecast CSV (default <out_dir>/forecast.csv)");
  eval_cmd->add_option("--cv", cv_mode, "none, rolling or sliding")
      ->check(CLI::IsMember({"none", "rolling", "sliding"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    // --target / --jobs style overrides arrive via --set or the config file.
    if (opts.print_config) {
      config::print_run_config(resolve_config(opts), std::cout);
      return 0;
    }
    if (synth_cmd->parsed()) return cmd_synth(opts, synth_spec, synth_out);
    const config::RunConfig cfg = resolve_config(opts);
    if (ingest_cmd->parsed()) return cmd_ingest(cfg);
    if (train_cmd->parsed()) return cmd_train(cfg, stage, dump_features);
    if (forecast_cmd->parsed()) return cmd_forecast(cfg, zero_shot_file, station_list);
    if (eval_cmd->parsed()) return cmd_evaluate(cfg, forecast_file, cv_mode);
    std::cout << app.help();
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const NumericsError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
