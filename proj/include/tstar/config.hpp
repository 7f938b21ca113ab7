#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tstar/pipeline.hpp"
#include "tstar/synth.hpp"

namespace tstar::config {

// Flat `key = value` run configuration; every default matches the reference
// setup (V1 = V2 = 24, H = 1, N = 100, alpha = 0.1, nu = 300 m, 100 epochs,
// batch 256).
struct RunConfig {
  // input files
  std::string trips = "data/trips.csv";
  std::string stations = "data/stations.csv";
  std::string weather = "data/weather.csv";
  std::string holidays = "data/holidays.txt";
  std::string metro = "data/metro.csv";                  // empty disables metro features
  std::string metro_stations = "data/metro_stations.csv";
  // timeline
  std::string grid_start = "2022-10-03T00:00";
  std::size_t days = 90;
  std::size_t train_days = 70;
  // output
  std::string out_dir = "out";
  // pipeline
  int v1 = 24;
  int v2 = 24;
  std::size_t n_samples = 100;
  double alpha = 0.1;
  double nu_meters = 300.0;
  std::string target = "pickup";
  std::uint64_t seed = 42;
  int jobs = 1;
  bool stage2_holiday = false;
  bool stage2_quarter_channel = true;
  std::string stage2_signals = "in_sample";  // or "blocked"
  int station_embed_dim = 8;
  int global_embed_dim = 16;
  std::string holdout_stations;  // comma-separated ids excluded from training
  // stage-1 training
  int s1_epochs = 100;
  int s1_batch = 256;
  int s1_blocks = 1;
  int s1_hidden = 64;
  double s1_lr = 6e-4;
  double s1_dropout = 0.1;
  std::size_t s1_windows_per_epoch = 0;
  // stage-2 training
  int s2_epochs = 100;
  int s2_batch = 256;
  int s2_blocks = 3;
  int s2_hidden = 16;
  double s2_lr = 6e-4;
  double s2_dropout = 0.1;
  std::size_t s2_windows_per_epoch = 0;
  int grad_shards = 1;
  // cross-validation harness
  std::size_t cv_initial_weeks = 4;
  std::size_t cv_val_weeks = 2;
  std::size_t cv_expand_weeks = 2;
  std::size_t cv_window_weeks = 8;
  std::size_t cv_step_weeks = 1;
  std::size_t cv_max_folds = 0;
};

RunConfig load_run_config(const std::string& path);
void set_key(RunConfig& cfg, const std::string& key, const std::string& value);
void print_run_config(const RunConfig& cfg, std::ostream& out);

DemandKind parse_kind(const std::string& name);
Minutes parse_grid_start(const RunConfig& cfg);
SplitSpec quarter_split(const RunConfig& cfg);
pipeline::PipelineConfig to_pipeline_config(const RunConfig& cfg);
pipeline::DataPaths raw_paths(const RunConfig& cfg);
std::vector<std::string> split_list(const std::string& comma_separated);

synth::SynthSpec load_synth_spec(const std::string& path);

// Validated dataset bundle under <out_dir>/bundle: canonical station list,
// aggregated demand, dense weather, accepted metro rows and run metadata.
std::string bundle_dir(const RunConfig& cfg);
void write_bundle(const RunConfig& cfg, const pipeline::Dataset& ds,
                  const pipeline::IngestSummary& summary);
pipeline::Dataset load_bundle(const RunConfig& cfg);
pipeline::Dataset load_bundle_with_split(const RunConfig& cfg, const SplitSpec& qsplit);

}  // namespace tstar::config
