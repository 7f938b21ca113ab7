#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tstar/eval.hpp"
#include "tstar/features.hpp"
#include "tstar/ingest.hpp"
#include "tstar/timegrid.hpp"
#include "tstar/transformer.hpp"

namespace tstar::pipeline {

struct PipelineConfig {
  int v1 = 24;  // stage-1 look-back, hours
  int v2 = 24;  // stage-2 look-back, quarters
  int h1 = 1;
  int h2 = 1;
  std::size_t n_samples = 100;
  double alpha = 0.1;
  DemandKind target = DemandKind::pickup;
  std::uint64_t seed = 42;
  int jobs = 1;
  std::size_t train_begin_q = 0;  // sliding-window CV: first training quarter
  bool stage2_holiday = false;        // holiday flag stays a stage-1 input by default
  bool stage2_quarter_channel = true; // quarter-of-hour one-hot for the sub-hour phase
  // Stage-2 training signals come from in-sample rolling stage-1 forecasts by
  // default; the blocked variant generates each training half's forecasts
  // with a stage-1 model fit on the other half.
  bool blocked_signals = false;
  int station_embed_dim = 8;
  int global_embed_dim = 16;
  nn::TrainConfig stage1_train;
  nn::TrainConfig stage2_train;

  void validate() const;
};

// Canonical in-memory bundle shared by training, forecasting and scoring.
struct Dataset {
  TimeGrid qgrid;
  TimeGrid hgrid;
  SplitSpec qsplit;
  SplitSpec hsplit;
  std::vector<ingest::StationMeta> stations;
  double max_capacity = 1.0;
  std::vector<DemandSeries> pickup_q, dropoff_q;  // [station]
  std::vector<DemandSeries> pickup_h, dropoff_h;
  std::vector<features::MetroDeviationSeries> metro_dev;  // [station], may be empty
  std::vector<ingest::WeatherRecord> weather;             // dense hourly
  std::set<std::int64_t> holidays;

  const std::vector<DemandSeries>& quarter_series(DemandKind k) const {
    return k == DemandKind::pickup ? pickup_q : dropoff_q;
  }
  const std::vector<DemandSeries>& hourly_series(DemandKind k) const {
    return k == DemandKind::pickup ? pickup_h : dropoff_h;
  }
  int station_index(const StationId& id) const;
};

struct DataPaths {
  std::string trips;
  std::string stations;
  std::string weather;
  std::string holidays;
  std::string metro;           // optional: empty disables metro features
  std::string metro_stations;  // optional
};

struct IngestSummary {
  ingest::RejectionReport trips;
  ingest::RejectionReport metro;
  ingest::RejectionReport weather;
  std::size_t discarded_trips_out_of_window = 0;
  std::size_t discarded_trips_unknown_station = 0;
  std::size_t linked_stations = 0;
};

Dataset build_dataset(const DataPaths& paths, Minutes grid_start, std::size_t days,
                      const SplitSpec& qsplit, double nu_meters, int jobs = 1,
                      IngestSummary* summary = nullptr);

// Dataset index -> embedding row of the trained model; kMeanEmbedding for
// stations held out of training (zero-shot substitution).
struct StationMap {
  std::vector<int> embed_index;
  int trained_count = 0;

  static StationMap identity(std::size_t n_stations);
  static StationMap subset(std::size_t n_stations, const std::vector<int>& train_stations);
};

// Stage-1 forecast for hour h, generated at the end of hour h-1. sigma is the
// sample standard deviation of the drawn forecast paths; the analytic value
// is recorded alongside.
struct ArchiveEntry {
  double mu = 0.0;
  double sigma = 0.0;
  double sigma_analytic = 0.0;
  bool covered = false;
};

struct Stage1Archive {
  DemandKind kind = DemandKind::pickup;
  std::vector<std::vector<ArchiveEntry>> entries;  // [station][hour]

  const ArchiveEntry& at(std::size_t station, std::size_t hour) const {
    return entries[station][hour];
  }
};

struct VariationSignals {
  std::vector<std::vector<double>> delta_pickup;   // [station][quarter]
  std::vector<std::vector<double>> delta_dropoff;
  std::vector<std::vector<std::uint8_t>> covered;  // gap markers, never zero-filled
};

struct Stage1Model {
  DemandKind kind = DemandKind::pickup;
  nn::TstModel model;
  features::NormStats stats;
  nn::TrainResult history;
};

struct Stage2Model {
  DemandKind target = DemandKind::pickup;
  nn::TstModel model;
  features::NormStats stats;
  nn::TrainResult history;
};

Stage1Model stage1_fit(const Dataset& ds, DemandKind kind, const PipelineConfig& cfg,
                       const StationMap& map);
// Restricted training range in hourly indices (used by the blocked-signal
// variant and the sliding-window harness).
Stage1Model stage1_fit_range(const Dataset& ds, DemandKind kind, const PipelineConfig& cfg,
                             const StationMap& map, std::size_t h_begin, std::size_t h_end,
                             std::uint64_t salt = 0);

// Rolling one-step-ahead forecasts for hours [v1, hgrid.length); each uses
// only information available before the target hour starts.
Stage1Archive stage1_forecast_rolling(const Stage1Model& s1, const Dataset& ds,
                                      const PipelineConfig& cfg, const StationMap& map);
void stage1_roll_into(Stage1Archive& archive, const Stage1Model& s1, const Dataset& ds,
                      const PipelineConfig& cfg, const StationMap& map, std::size_t h_begin,
                      std::size_t h_end);
// The archive feeding variation signals: plain in-sample rolling, or the
// blocked two-fold variant when cfg.blocked_signals is set.
Stage1Archive signal_archive(const Stage1Model& full, const Dataset& ds,
                             const PipelineConfig& cfg, const StationMap& map);

// delta = y_q - mu_parent/4 for both demand kinds (Eq. telescoping holds
// exactly per covered hour).
VariationSignals variation_signals(const Dataset& ds, const Stage1Archive& pickup_archive,
                                   const Stage1Archive& dropoff_archive);

Stage2Model stage2_fit(const Dataset& ds, const Stage1Archive& target_archive,
                       const VariationSignals& signals, const PipelineConfig& cfg,
                       const StationMap& map);

struct QuarterForecast {
  int station = -1;
  std::int64_t quarter = 0;
  nn::ForecastDistribution dist;
};

std::vector<QuarterForecast> stage2_forecast_range(
    const Stage2Model& s2, const Dataset& ds, const Stage1Archive& target_archive,
    const VariationSignals& signals, const PipelineConfig& cfg, const StationMap& map,
    const std::vector<int>& stations, std::size_t q_begin, std::size_t q_end);

struct TrainedPipeline {
  PipelineConfig cfg;
  StationMap map;
  Stage1Model s1_pickup;
  Stage1Model s1_dropoff;
  Stage1Archive arch_pickup;
  Stage1Archive arch_dropoff;
  VariationSignals signals;
  Stage2Model s2;

  const Stage1Archive& target_archive() const {
    return cfg.target == DemandKind::pickup ? arch_pickup : arch_dropoff;
  }
};

// Full two-stage fit: stage-1 per demand kind, in-sample rolling archives,
// variation signals, then the stage-2 model for cfg.target.
TrainedPipeline fit_tstar(const Dataset& ds, const PipelineConfig& cfg,
                          const std::vector<int>* train_stations = nullptr);

std::vector<eval::ScoreRow> score_forecasts(const Dataset& ds, DemandKind kind,
                                            std::span<const QuarterForecast> forecasts,
                                            double alpha);

// Baselines (point predictors; CRPS of a point forecast is its absolute error).
std::vector<eval::ScoreRow> baseline_historical_average(const Dataset& ds, DemandKind kind,
                                                        const std::vector<int>& stations,
                                                        std::size_t q_begin, std::size_t q_end,
                                                        double alpha);
std::vector<eval::ScoreRow> baseline_myopic(const Dataset& ds, DemandKind kind,
                                            const std::vector<int>& stations, std::size_t q_begin,
                                            std::size_t q_end, double alpha);
std::vector<eval::ScoreRow> baseline_hourly_split(const Dataset& ds, DemandKind kind,
                                                  const Stage1Archive& archive,
                                                  const std::vector<int>& stations,
                                                  std::size_t q_begin, std::size_t q_end,
                                                  double alpha);

void write_archive_csv(const std::string& path, const Dataset& ds, const Stage1Archive& archive);
void write_signals_csv(const std::string& path, const Dataset& ds, const VariationSignals& signals);
void write_forecast_csv(const std::string& path, const Dataset& ds,
                        std::span<const QuarterForecast> forecasts);

std::vector<int> all_stations(const Dataset& ds);

// Seed stream for the N forecast samples of one (station, quarter); shared by
// the forecaster and any later re-scoring of a forecast file.
std::uint64_t forecast_sample_seed(std::uint64_t base_seed, std::size_t station,
                                   std::size_t quarter);

}  // namespace tstar::pipeline
