#include "tstar/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "tstar/csv.hpp"
#include "tstar/errors.hpp"
#include "tstar/parallel.hpp"

namespace tstar::pipeline {

namespace {

constexpr std::uint64_t kStage1Tag = 0x51a6e1;
constexpr std::uint64_t kStage2Tag = 0x51a6e2;
constexpr std::uint64_t kArchiveTag = 0xa2c417e;
constexpr std::uint64_t kForecastTag = 0xf02eca57;

std::uint64_t kind_tag(DemandKind k) { return k == DemandKind::pickup ? 1 : 2; }

}  // namespace

std::uint64_t forecast_sample_seed(std::uint64_t base_seed, std::size_t station,
                                   std::size_t quarter) {
  return derive_seed(base_seed, kForecastTag, station, quarter);
}

void PipelineConfig::validate() const {
  if (v1 < 1 || v2 < 1) throw ConfigError("pipeline: look-back windows must be >= 1");
  if (h1 != 1 || h2 != 1) throw ConfigError("pipeline: only one-step horizons are supported");
  if (n_samples < 1) throw ConfigError("pipeline: n_samples must be >= 1");
  if (alpha <= 0.0 || alpha >= 1.0) throw ConfigError("pipeline: alpha must be in (0,1)");
  if (station_embed_dim < 1 || global_embed_dim < 1)
    throw ConfigError("pipeline: embedding dims must be >= 1");
}

int Dataset::station_index(const StationId& id) const {
  for (std::size_t i = 0; i < stations.size(); ++i)
    if (stations[i].id == id) return static_cast<int>(i);
  return -1;
}

StationMap StationMap::identity(std::size_t n_stations) {
  StationMap map;
  map.embed_index.resize(n_stations);
  for (std::size_t i = 0; i < n_stations; ++i) map.embed_index[i] = static_cast<int>(i);
  map.trained_count = static_cast<int>(n_stations);
  return map;
}

StationMap StationMap::subset(std::size_t n_stations, const std::vector<int>& train_stations) {
  StationMap map;
  map.embed_index.assign(n_stations, nn::kMeanEmbedding);
  int next = 0;
  for (int ds_idx : train_stations) {
    if (ds_idx < 0 || ds_idx >= static_cast<int>(n_stations))
      throw ConfigError("station map: training station index out of range");
    if (map.embed_index[ds_idx] != nn::kMeanEmbedding)
      throw ConfigError("station map: duplicate training station");
    map.embed_index[ds_idx] = next++;
  }
  map.trained_count = next;
  if (next == 0) throw ConfigError("station map: no training stations");
  return map;
}

std::vector<int> all_stations(const Dataset& ds) {
  std::vector<int> out(ds.stations.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<int>(i);
  return out;
}

// ---------------------------------------------------------------------------
// Dataset construction

Dataset build_dataset(const DataPaths& paths, Minutes grid_start, std::size_t days,
                      const SplitSpec& qsplit, double nu_meters, int jobs,
                      IngestSummary* summary) {
  Dataset ds;
  if (((grid_start % 1440) + 1440) % 1440 != 0)
    throw ConfigError("build_dataset: the grid must be anchored at local midnight");
  ds.qgrid = build_grid(grid_start, 15, days * 96);
  ds.hgrid = hourly_counterpart(ds.qgrid);
  qsplit.validate(ds.qgrid.length);
  if (qsplit.train_end % 4 != 0 || qsplit.test_end % 4 != 0)
    throw ConfigError("build_dataset: split boundaries must align to hours");
  ds.qsplit = qsplit;
  ds.hsplit = SplitSpec{qsplit.train_end / 4, qsplit.test_end / 4};

  auto stations = ingest::parse_stations(paths.stations);
  if (stations.stations.empty()) throw DataError(paths.stations + ": no valid stations");
  ds.stations = std::move(stations.stations);
  ds.max_capacity = 1.0;
  for (const auto& st : ds.stations)
    ds.max_capacity = std::max(ds.max_capacity, static_cast<double>(st.capacity));

  std::unordered_map<std::string, int> index;
  for (std::size_t i = 0; i < ds.stations.size(); ++i)
    index.emplace(ds.stations[i].id, static_cast<int>(i));

  auto trips = ingest::parse_trips(paths.trips);
  if (summary) summary->trips = trips.report;

  // Single pass over trips; station-major layout matches aggregate_trips.
  const std::size_t n = ds.stations.size();
  ds.pickup_q.resize(n);
  ds.dropoff_q.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.pickup_q[i] = DemandSeries{ds.stations[i].id, ds.qgrid, DemandKind::pickup,
                                  std::vector<std::int64_t>(ds.qgrid.length, 0)};
    ds.dropoff_q[i] = DemandSeries{ds.stations[i].id, ds.qgrid, DemandKind::dropoff,
                                   std::vector<std::int64_t>(ds.qgrid.length, 0)};
  }
  std::size_t out_of_window = 0, unknown_station = 0;
  for (const TripRecord& trip : trips.trips) {
    auto orig = index.find(trip.origin);
    if (orig == index.end()) {
      ++unknown_station;
    } else {
      const std::int64_t t = ds.qgrid.index_of(trip.start_time);
      if (t < 0)
        ++out_of_window;
      else
        ++ds.pickup_q[orig->second].values[t];
    }
    auto dest = index.find(trip.destination);
    if (dest == index.end()) {
      ++unknown_station;
    } else {
      const std::int64_t t = ds.qgrid.index_of(trip.end_time);
      if (t < 0)
        ++out_of_window;
      else
        ++ds.dropoff_q[dest->second].values[t];
    }
  }
  if (summary) {
    summary->discarded_trips_out_of_window = out_of_window;
    summary->discarded_trips_unknown_station = unknown_station;
  }

  ds.pickup_h.resize(n);
  ds.dropoff_h.resize(n);
  parallel_for(jobs, n, [&](std::size_t i) {
    ds.pickup_h[i] = downsample_to_hourly(ds.pickup_q[i]);
    ds.dropoff_h[i] = downsample_to_hourly(ds.dropoff_q[i]);
  });

  auto weather = ingest::parse_weather(paths.weather, ds.hgrid);
  ds.weather = std::move(weather.hours);
  if (summary) summary->weather = weather.report;
  ds.holidays = ingest::load_holidays(paths.holidays);

  if (!paths.metro.empty() && !paths.metro_stations.empty()) {
    auto flows = ingest::parse_metro(paths.metro, ds.qgrid);
    if (summary) summary->metro = flows.report;
    auto metros = ingest::parse_metro_stations(paths.metro_stations);
    auto links = ingest::link_metro_stations(ds.stations, metros, nu_meters);
    auto table = features::MetroFlowTable::build(flows.flows, ds.qgrid);
    ds.metro_dev = features::compute_metro_deviations(table, links, ds.qgrid, qsplit.train_end);
    if (summary)
      for (const auto& dev : ds.metro_dev)
        if (dev.linked) ++summary->linked_stations;
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Window assembly

namespace {

struct StageInputs {
  std::vector<features::FeatureFrame> frames;  // per station, normalized
  features::NormStats stats;                   // real channels + "y"
  int global_channels = 0;
  int local_dim = 0;
};

// Global channel layout, stage 1: hour(24) dow(7) holiday(1) temp precip wind.
constexpr int kStage1Globals = 24 + 7 + 1 + 3;

StageInputs prepare_stage1_inputs(const Dataset& ds, DemandKind kind, const StationMap& map,
                                  const features::NormStats* fixed_stats) {
  StageInputs in;
  in.global_channels = kStage1Globals;
  in.local_dim = 1;  // capacity
  in.frames.reserve(ds.stations.size());
  for (std::size_t i = 0; i < ds.stations.size(); ++i)
    in.frames.push_back(features::assemble_stage1_features(
        ds.stations[i], static_cast<int>(i), ds.max_capacity, ds.hgrid, ds.weather, ds.holidays));

  if (fixed_stats) {
    in.stats = *fixed_stats;
  } else {
    std::vector<features::FeatureFrame> train_frames;
    std::vector<const std::vector<std::int64_t>*> train_series;
    for (std::size_t i = 0; i < ds.stations.size(); ++i) {
      if (map.embed_index[i] == nn::kMeanEmbedding) continue;
      train_frames.push_back(in.frames[i]);
      train_series.push_back(&ds.hourly_series(kind)[i].values);
    }
    in.stats = features::fit_norm_stats(train_frames, ds.hsplit.train_end);
    in.stats.channels.push_back(features::fit_value_stat("y", train_series, ds.hsplit.train_end));
  }
  for (auto& frame : in.frames) features::apply_norm(frame, in.stats);
  return in;
}

features::Stage2Locals stage2_locals_for(const Dataset& ds, std::size_t station,
                                         const Stage1Archive& target_archive,
                                         const VariationSignals& signals, DemandKind target) {
  const std::size_t tq = ds.qgrid.length;
  features::Stage2Locals loc;
  loc.mu_quarter.assign(tq, 0.0);
  loc.sigma_hour.assign(tq, 0.0);
  loc.delta_pickup.assign(tq, 0.0);
  loc.delta_dropoff.assign(tq, 0.0);
  loc.metro_dev.assign(tq, 0.0);
  loc.covered.assign(tq, 0);
  const auto* dev = ds.metro_dev.empty() ? nullptr : &ds.metro_dev[station];
  for (std::size_t t = 0; t < tq; ++t) {
    const std::size_t parent = t / 4;
    const ArchiveEntry& entry = target_archive.at(station, parent);
    const bool cov = entry.covered && signals.covered[station][t];
    loc.covered[t] = cov ? 1 : 0;
    if (cov) {
      loc.mu_quarter[t] = entry.mu / 4.0;
      loc.sigma_hour[t] = entry.sigma;
      loc.delta_pickup[t] = signals.delta_pickup[station][t];
      loc.delta_dropoff[t] = signals.delta_dropoff[station][t];
    }
    if (dev) loc.metro_dev[t] = target == DemandKind::pickup ? dev->d_out[t] : dev->d_in[t];
  }
  return loc;
}

StageInputs prepare_stage2_inputs(const Dataset& ds, const Stage1Archive& target_archive,
                                  const VariationSignals& signals, const PipelineConfig& cfg,
                                  const StationMap& map, const features::NormStats* fixed_stats) {
  StageInputs in;
  in.global_channels = 24 + 7 + (cfg.stage2_quarter_channel ? 4 : 0) + (cfg.stage2_holiday ? 1 : 0);
  in.local_dim = 6;  // capacity, mu/4, sigma, delta_p, delta_d, metro
  in.frames.reserve(ds.stations.size());
  for (std::size_t i = 0; i < ds.stations.size(); ++i) {
    auto locals = stage2_locals_for(ds, i, target_archive, signals, cfg.target);
    in.frames.push_back(features::assemble_stage2_features(
        ds.stations[i], static_cast<int>(i), ds.max_capacity, ds.qgrid, locals, ds.holidays));
  }
  if (fixed_stats) {
    in.stats = *fixed_stats;
  } else {
    std::vector<features::FeatureFrame> train_frames;
    std::vector<const std::vector<std::int64_t>*> train_series;
    for (std::size_t i = 0; i < ds.stations.size(); ++i) {
      if (map.embed_index[i] == nn::kMeanEmbedding) continue;
      train_frames.push_back(in.frames[i]);
      train_series.push_back(&ds.quarter_series(cfg.target)[i].values);
    }
    in.stats = features::fit_norm_stats(train_frames, ds.qsplit.train_end);
    in.stats.channels.push_back(features::fit_value_stat("y", train_series, ds.qsplit.train_end));
  }
  for (auto& frame : in.frames) features::apply_norm(frame, in.stats);
  return in;
}

void fill_stage1_globals(nn::Tensor& g, std::size_t row, const features::FeatureFrame& frame,
                         std::size_t t) {
  g.at(row, frame.hour[t]) = 1.0;
  g.at(row, 24 + frame.dow[t]) = 1.0;
  g.at(row, 31) = frame.holiday[t];
  g.at(row, 32) = frame.reals[0].values[t];  // temperature
  g.at(row, 33) = frame.reals[1].values[t];  // precipitation
  g.at(row, 34) = frame.reals[2].values[t];  // wind
}

// Window rows pair y at interval u with the known-in-advance covariates of
// u+1; the last row therefore carries the target interval's calendar context.
nn::Window make_stage1_window(const StageInputs& in, const Dataset& ds, DemandKind kind,
                              std::size_t station, int embed_index, std::size_t target_hour,
                              int v1, double y_mean, double y_std) {
  const features::FeatureFrame& frame = in.frames[station];
  const auto& y = ds.hourly_series(kind)[station].values;
  nn::Window w;
  w.station = embed_index;
  w.target_index = static_cast<std::int64_t>(target_hour);
  w.target = static_cast<double>(y[target_hour]);
  const std::size_t v = static_cast<std::size_t>(v1);
  w.y_in = nn::Tensor(v, 1);
  w.globals = nn::Tensor(v, kStage1Globals);
  w.locals = nn::Tensor(v, 1);
  for (std::size_t j = 0; j < v; ++j) {
    const std::size_t obs = target_hour - v + j;
    w.y_in.at(j, 0) = (static_cast<double>(y[obs]) - y_mean) / y_std;
    fill_stage1_globals(w.globals, j, frame, obs + 1);
    w.locals.at(j, 0) = frame.capacity_norm;
  }
  return w;
}

nn::Window make_stage2_window(const StageInputs& in, const Dataset& ds,
                              const PipelineConfig& cfg, std::size_t station, int embed_index,
                              std::size_t target_q, double y_mean, double y_std) {
  const features::FeatureFrame& frame = in.frames[station];
  const auto& y = ds.quarter_series(cfg.target)[station].values;
  const std::size_t v = static_cast<std::size_t>(cfg.v2);
  nn::Window w;
  w.station = embed_index;
  w.target_index = static_cast<std::int64_t>(target_q);
  w.target = static_cast<double>(y[target_q]);
  w.y_in = nn::Tensor(v, 1);
  w.globals = nn::Tensor(v, in.global_channels);
  w.locals = nn::Tensor(v, in.local_dim);
  const auto& mu_q = frame.reals[0].values;
  const auto& sigma_h = frame.reals[1].values;
  const auto& delta_p = frame.reals[2].values;
  const auto& delta_d = frame.reals[3].values;
  const auto& metro = frame.reals[4].values;
  for (std::size_t j = 0; j < v; ++j) {
    const std::size_t obs = target_q - v + j;
    const std::size_t cov = obs + 1;
    w.y_in.at(j, 0) = (static_cast<double>(y[obs]) - y_mean) / y_std;
    int col = 0;
    w.globals.at(j, col + frame.hour[cov]) = 1.0;
    col += 24;
    w.globals.at(j, col + frame.dow[cov]) = 1.0;
    col += 7;
    if (cfg.stage2_quarter_channel) {
      w.globals.at(j, col + frame.quarter[cov]) = 1.0;
      col += 4;
    }
    if (cfg.stage2_holiday) w.globals.at(j, col) = frame.holiday[cov];
    w.locals.at(j, 0) = frame.capacity_norm;
    w.locals.at(j, 1) = mu_q[cov];
    w.locals.at(j, 2) = sigma_h[cov];
    w.locals.at(j, 3) = delta_p[obs];
    w.locals.at(j, 4) = delta_d[obs];
    w.locals.at(j, 5) = metro[obs];
  }
  return w;
}

bool stage2_window_covered(const features::FeatureFrame& frame, std::size_t target_q, int v2) {
  if (target_q < static_cast<std::size_t>(v2) + 1) return false;
  for (std::size_t t = target_q - v2; t <= target_q; ++t)
    if (!frame.valid[t]) return false;
  return true;
}

double stat_mean(const features::NormStats& stats, const std::string& name) {
  const features::ChannelStat* s = stats.find(name);
  if (!s) throw ConfigError("missing '" + name + "' statistics");
  return s->mean;
}

double stat_std(const features::NormStats& stats, const std::string& name) {
  return stats.find(name)->std;
}

// Deterministic enumerated (station, target) pairs for training.
struct Stage1Source : nn::WindowSource {
  const StageInputs& in;
  const Dataset& ds;
  DemandKind kind;
  const StationMap& map;
  int v1;
  double y_mean, y_std;
  std::vector<std::pair<std::size_t, std::size_t>> items;  // (station, target hour)

  Stage1Source(const StageInputs& inputs, const Dataset& dataset, DemandKind k,
               const StationMap& m, int v, std::size_t h_begin, std::size_t h_end)
      : in(inputs), ds(dataset), kind(k), map(m), v1(v) {
    y_mean = stat_mean(in.stats, "y");
    y_std = stat_std(in.stats, "y");
    const std::size_t first = std::max<std::size_t>(h_begin + v1, static_cast<std::size_t>(v1));
    for (std::size_t st = 0; st < ds.stations.size(); ++st) {
      if (map.embed_index[st] == nn::kMeanEmbedding) continue;
      for (std::size_t h = first; h < h_end; ++h) items.emplace_back(st, h);
    }
  }
  std::size_t size() const override { return items.size(); }
  std::int64_t target_index(std::size_t i) const override {
    return static_cast<std::int64_t>(items[i].second);
  }
  nn::Window get(std::size_t i) const override {
    const auto [st, h] = items[i];
    return make_stage1_window(in, ds, kind, st, map.embed_index[st], h, v1, y_mean, y_std);
  }
};

struct Stage2Source : nn::WindowSource {
  const StageInputs& in;
  const Dataset& ds;
  const PipelineConfig& cfg;
  const StationMap& map;
  double y_mean, y_std;
  std::vector<std::pair<std::size_t, std::size_t>> items;

  Stage2Source(const StageInputs& inputs, const Dataset& dataset, const PipelineConfig& c,
               const StationMap& m)
      : in(inputs), ds(dataset), cfg(c), map(m) {
    y_mean = stat_mean(in.stats, "y");
    y_std = stat_std(in.stats, "y");
    const std::size_t first = std::max<std::size_t>(static_cast<std::size_t>(cfg.v2) + 1,
                                                    cfg.train_begin_q + cfg.v2);
    for (std::size_t st = 0; st < ds.stations.size(); ++st) {
      if (map.embed_index[st] == nn::kMeanEmbedding) continue;
      for (std::size_t q = first; q < ds.qsplit.train_end; ++q)
        if (stage2_window_covered(in.frames[st], q, cfg.v2)) items.emplace_back(st, q);
    }
  }
  std::size_t size() const override { return items.size(); }
  std::int64_t target_index(std::size_t i) const override {
    return static_cast<std::int64_t>(items[i].second);
  }
  nn::Window get(std::size_t i) const override {
    const auto [st, q] = items[i];
    return make_stage2_window(in, ds, cfg, st, map.embed_index[st], q, y_mean, y_std);
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// Stage fitting and rolling forecasts

Stage1Model stage1_fit_range(const Dataset& ds, DemandKind kind, const PipelineConfig& cfg,
                             const StationMap& map, std::size_t h_begin, std::size_t h_end,
                             std::uint64_t salt) {
  cfg.validate();
  StageInputs in = prepare_stage1_inputs(ds, kind, map, nullptr);
  nn::EmbedConfig embed;
  embed.station_count = map.trained_count;
  embed.station_embed_dim = cfg.station_embed_dim;
  embed.global_channels = in.global_channels;
  embed.global_embed_dim = cfg.global_embed_dim;
  embed.local_dim = in.local_dim;
  embed.model_dim = cfg.stage1_train.hidden_size;
  embed.lookback = cfg.v1;

  nn::TrainConfig train_cfg = cfg.stage1_train;
  train_cfg.seed = derive_seed(cfg.seed, kStage1Tag, kind_tag(kind), salt);

  nn::TstModel model(embed, train_cfg.encoder_blocks,
                     derive_seed(cfg.seed, kStage1Tag, kind_tag(kind), 0x1217 ^ salt));
  Stage1Source source(in, ds, kind, map, cfg.v1, h_begin, h_end);
  if (source.size() == 0) throw ConfigError("stage1_fit: no training windows in range");
  nn::TrainResult history =
      model.train(source, train_cfg, static_cast<std::int64_t>(h_end) - 1);
  return Stage1Model{kind, std::move(model), std::move(in.stats), std::move(history)};
}

Stage1Model stage1_fit(const Dataset& ds, DemandKind kind, const PipelineConfig& cfg,
                       const StationMap& map) {
  return stage1_fit_range(ds, kind, cfg, map, cfg.train_begin_q / 4, ds.hsplit.train_end);
}

void stage1_roll_into(Stage1Archive& archive, const Stage1Model& s1, const Dataset& ds,
                      const PipelineConfig& cfg, const StationMap& map, std::size_t h_begin,
                      std::size_t h_end) {
  StageInputs in = prepare_stage1_inputs(ds, s1.kind, map, &s1.stats);
  const double y_mean = stat_mean(in.stats, "y");
  const double y_std = stat_std(in.stats, "y");
  const std::size_t first = std::max<std::size_t>(h_begin, static_cast<std::size_t>(cfg.v1));
  parallel_for(cfg.jobs, ds.stations.size(), [&](std::size_t st) {
    for (std::size_t h = first; h < h_end; ++h) {
      nn::Window w = make_stage1_window(in, ds, s1.kind, st, map.embed_index[st], h, cfg.v1,
                                        y_mean, y_std);
      const auto fc = s1.model.predict(
          w, cfg.n_samples, derive_seed(cfg.seed, kArchiveTag ^ kind_tag(s1.kind), st, h));
      ArchiveEntry& entry = archive.entries[st][h];
      entry.mu = fc.params.mu;
      entry.sigma = fc.sample_sigma;
      entry.sigma_analytic = fc.analytic_sigma;
      entry.covered = true;
    }
  });
}

Stage1Archive stage1_forecast_rolling(const Stage1Model& s1, const Dataset& ds,
                                      const PipelineConfig& cfg, const StationMap& map) {
  Stage1Archive archive;
  archive.kind = s1.kind;
  archive.entries.assign(ds.stations.size(),
                         std::vector<ArchiveEntry>(ds.hgrid.length, ArchiveEntry{}));
  stage1_roll_into(archive, s1, ds, cfg, map, cfg.v1, ds.hgrid.length);
  return archive;
}

VariationSignals variation_signals(const Dataset& ds, const Stage1Archive& pickup_archive,
                                   const Stage1Archive& dropoff_archive) {
  if (pickup_archive.kind != DemandKind::pickup || dropoff_archive.kind != DemandKind::dropoff)
    throw ConfigError("variation_signals: archives passed in the wrong order");
  const std::size_t n = ds.stations.size();
  VariationSignals out;
  out.delta_pickup.assign(n, std::vector<double>(ds.qgrid.length, 0.0));
  out.delta_dropoff.assign(n, std::vector<double>(ds.qgrid.length, 0.0));
  out.covered.assign(n, std::vector<std::uint8_t>(ds.qgrid.length, 0));
  for (std::size_t st = 0; st < n; ++st) {
    for (std::size_t q = 0; q < ds.qgrid.length; ++q) {
      const std::size_t parent = q / 4;
      const ArchiveEntry& pe = pickup_archive.at(st, parent);
      const ArchiveEntry& de = dropoff_archive.at(st, parent);
      if (!pe.covered || !de.covered) continue;  // gap marker, never zero-filled
      out.covered[st][q] = 1;
      out.delta_pickup[st][q] = static_cast<double>(ds.pickup_q[st].values[q]) - pe.mu / 4.0;
      out.delta_dropoff[st][q] = static_cast<double>(ds.dropoff_q[st].values[q]) - de.mu / 4.0;
    }
  }
  return out;
}

Stage2Model stage2_fit(const Dataset& ds, const Stage1Archive& target_archive,
                       const VariationSignals& signals, const PipelineConfig& cfg,
                       const StationMap& map) {
  cfg.validate();
  if (target_archive.kind != cfg.target)
    throw ConfigError("stage2_fit: archive kind does not match the configured target");
  StageInputs in = prepare_stage2_inputs(ds, target_archive, signals, cfg, map, nullptr);
  nn::EmbedConfig embed;
  embed.station_count = map.trained_count;
  embed.station_embed_dim = cfg.station_embed_dim;
  embed.global_channels = in.global_channels;
  embed.global_embed_dim = cfg.global_embed_dim;
  embed.local_dim = in.local_dim;
  embed.model_dim = cfg.stage2_train.hidden_size;
  embed.lookback = cfg.v2;

  nn::TrainConfig train_cfg = cfg.stage2_train;
  train_cfg.seed = derive_seed(cfg.seed, kStage2Tag, kind_tag(cfg.target));

  nn::TstModel model(embed, train_cfg.encoder_blocks,
                     derive_seed(cfg.seed, kStage2Tag, kind_tag(cfg.target), 0x1217));
  Stage2Source source(in, ds, cfg, map);
  if (source.size() == 0)
    throw ConfigError("stage2_fit: no covered training windows (archive gaps too wide)");
  nn::TrainResult history =
      model.train(source, train_cfg, static_cast<std::int64_t>(ds.qsplit.train_end) - 1);
  return Stage2Model{cfg.target, std::move(model), std::move(in.stats), std::move(history)};
}

std::vector<QuarterForecast> stage2_forecast_range(
    const Stage2Model& s2, const Dataset& ds, const Stage1Archive& target_archive,
    const VariationSignals& signals, const PipelineConfig& cfg, const StationMap& map,
    const std::vector<int>& stations, std::size_t q_begin, std::size_t q_end) {
  if (q_end > ds.qgrid.length || q_begin >= q_end)
    throw ConfigError("stage2_forecast_range: bad quarter range");
  StageInputs in = prepare_stage2_inputs(ds, target_archive, signals, cfg, map, &s2.stats);
  const double y_mean = stat_mean(in.stats, "y");
  const double y_std = stat_std(in.stats, "y");

  std::vector<std::vector<QuarterForecast>> per_station(stations.size());
  parallel_for(cfg.jobs, stations.size(), [&](std::size_t k) {
    const std::size_t st = static_cast<std::size_t>(stations[k]);
    for (std::size_t q = q_begin; q < q_end; ++q) {
      if (!stage2_window_covered(in.frames[st], q, cfg.v2)) continue;
      nn::Window w =
          make_stage2_window(in, ds, cfg, st, map.embed_index[st], q, y_mean, y_std);
      QuarterForecast f;
      f.station = static_cast<int>(st);
      f.quarter = static_cast<std::int64_t>(q);
      f.dist = s2.model.predict(w, cfg.n_samples, forecast_sample_seed(cfg.seed, st, q));
      per_station[k].push_back(std::move(f));
    }
  });
  std::vector<QuarterForecast> out;
  for (auto& chunk : per_station)
    for (auto& f : chunk) out.push_back(std::move(f));
  return out;
}

// In-sample rolling by default; the blocked variant forecasts each training
// half with a stage-1 model fit on the other half, and always uses the full
// in-sample model for the test range.
Stage1Archive signal_archive(const Stage1Model& full, const Dataset& ds,
                             const PipelineConfig& cfg, const StationMap& map) {
  Stage1Archive archive;
  archive.kind = full.kind;
  archive.entries.assign(ds.stations.size(),
                         std::vector<ArchiveEntry>(ds.hgrid.length, ArchiveEntry{}));
  if (!cfg.blocked_signals) {
    stage1_roll_into(archive, full, ds, cfg, map, cfg.v1, ds.hgrid.length);
    return archive;
  }
  const std::size_t train_end = ds.hsplit.train_end;
  const std::size_t mid = train_end / 2;
  Stage1Model first_half = stage1_fit_range(ds, full.kind, cfg, map, 0, mid, 0xb10c1);
  Stage1Model second_half = stage1_fit_range(ds, full.kind, cfg, map, mid, train_end, 0xb10c2);
  stage1_roll_into(archive, second_half, ds, cfg, map, cfg.v1, mid);
  stage1_roll_into(archive, first_half, ds, cfg, map, mid, train_end);
  stage1_roll_into(archive, full, ds, cfg, map, train_end, ds.hgrid.length);
  return archive;
}

TrainedPipeline fit_tstar(const Dataset& ds, const PipelineConfig& cfg,
                          const std::vector<int>* train_stations) {
  cfg.validate();
  StationMap map = train_stations ? StationMap::subset(ds.stations.size(), *train_stations)
                                  : StationMap::identity(ds.stations.size());
  TrainedPipeline tp{cfg,
                     map,
                     stage1_fit(ds, DemandKind::pickup, cfg, map),
                     stage1_fit(ds, DemandKind::dropoff, cfg, map),
                     {},
                     {},
                     {},
                     Stage2Model{cfg.target, nn::TstModel(nn::EmbedConfig{}, 0, 0), {}, {}}};
  tp.arch_pickup = signal_archive(tp.s1_pickup, ds, cfg, map);
  tp.arch_dropoff = signal_archive(tp.s1_dropoff, ds, cfg, map);
  tp.signals = variation_signals(ds, tp.arch_pickup, tp.arch_dropoff);
  tp.s2 = stage2_fit(ds, tp.target_archive(), tp.signals, cfg, map);
  return tp;
}

// ---------------------------------------------------------------------------
// Scoring helpers and baselines

std::vector<eval::ScoreRow> score_forecasts(const Dataset& ds, DemandKind kind,
                                            std::span<const QuarterForecast> forecasts,
                                            double alpha) {
  std::vector<eval::ScoreRow> rows;
  rows.reserve(forecasts.size());
  for (const QuarterForecast& f : forecasts) {
    const auto& series = ds.quarter_series(kind)[f.station];
    std::vector<double> samples(f.dist.samples.begin(), f.dist.samples.end());
    rows.push_back(eval::score_row(series.station, f.quarter,
                                   static_cast<double>(series.values[f.quarter]), f.dist.point,
                                   f.dist.lo, f.dist.hi, samples, alpha));
  }
  return rows;
}

namespace {

std::vector<eval::ScoreRow> point_rows(const Dataset& ds, DemandKind kind,
                                       const std::vector<int>& stations, std::size_t q_begin,
                                       std::size_t q_end, double alpha,
                                       const std::function<double(std::size_t, std::size_t)>& point) {
  if (q_end > ds.qgrid.length || q_begin >= q_end)
    throw ConfigError("baseline: bad quarter range");
  std::vector<eval::ScoreRow> rows;
  for (int sidx : stations) {
    const std::size_t st = static_cast<std::size_t>(sidx);
    const auto& series = ds.quarter_series(kind)[st];
    for (std::size_t q = q_begin; q < q_end; ++q) {
      const double p = point(st, q);
      const double samples[1] = {p};
      rows.push_back(eval::score_row(series.station, static_cast<std::int64_t>(q),
                                     static_cast<double>(series.values[q]), p, p, p, samples,
                                     alpha));
    }
  }
  return rows;
}

}  // namespace

std::vector<eval::ScoreRow> baseline_historical_average(const Dataset& ds, DemandKind kind,
                                                        const std::vector<int>& stations,
                                                        std::size_t q_begin, std::size_t q_end,
                                                        double alpha) {
  std::vector<features::SeasonalProfile> profiles;
  profiles.reserve(ds.stations.size());
  for (std::size_t st = 0; st < ds.stations.size(); ++st)
    profiles.push_back(features::SeasonalProfile::build_counts(
        ds.qgrid, ds.quarter_series(kind)[st].values, ds.qsplit.train_end));
  return point_rows(ds, kind, stations, q_begin, q_end, alpha, [&](std::size_t st, std::size_t q) {
    return profiles[st].lookup(ds.qgrid.dow_at(q), ds.qgrid.hour_at(q), ds.qgrid.quarter_at(q));
  });
}

std::vector<eval::ScoreRow> baseline_myopic(const Dataset& ds, DemandKind kind,
                                            const std::vector<int>& stations, std::size_t q_begin,
                                            std::size_t q_end, double alpha) {
  if (q_begin == 0) throw ConfigError("myopic baseline: no observation before the first interval");
  return point_rows(ds, kind, stations, q_begin, q_end, alpha, [&](std::size_t st, std::size_t q) {
    return static_cast<double>(ds.quarter_series(kind)[st].values[q - 1]);
  });
}

std::vector<eval::ScoreRow> baseline_hourly_split(const Dataset& ds, DemandKind kind,
                                                  const Stage1Archive& archive,
                                                  const std::vector<int>& stations,
                                                  std::size_t q_begin, std::size_t q_end,
                                                  double alpha) {
  return point_rows(ds, kind, stations, q_begin, q_end, alpha, [&](std::size_t st, std::size_t q) {
    const ArchiveEntry& e = archive.at(st, q / 4);
    if (!e.covered)
      throw DataError("hourly-split baseline: no stage-1 forecast for hour " +
                      std::to_string(q / 4));
    return e.mu / 4.0;
  });
}

// ---------------------------------------------------------------------------
// Dumps

void write_archive_csv(const std::string& path, const Dataset& ds, const Stage1Archive& archive) {
  csv::Writer w(path);
  if (!w.ok()) throw DataError("cannot write " + path);
  w.raw("station_id,hour_index,mu,sigma");
  for (std::size_t st = 0; st < archive.entries.size(); ++st)
    for (std::size_t h = 0; h < archive.entries[st].size(); ++h) {
      const ArchiveEntry& e = archive.entries[st][h];
      if (!e.covered) continue;
      w.row({ds.stations[st].id, std::to_string(h), csv::fmt(e.mu), csv::fmt(e.sigma)});
    }
}

void write_signals_csv(const std::string& path, const Dataset& ds,
                       const VariationSignals& signals) {
  csv::Writer w(path);
  if (!w.ok()) throw DataError("cannot write " + path);
  w.raw("station_id,quarter_index,delta_pickup,delta_dropoff");
  for (std::size_t st = 0; st < signals.delta_pickup.size(); ++st)
    for (std::size_t q = 0; q < signals.delta_pickup[st].size(); ++q) {
      if (!signals.covered[st][q]) continue;
      w.row({ds.stations[st].id, std::to_string(q), csv::fmt(signals.delta_pickup[st][q]),
             csv::fmt(signals.delta_dropoff[st][q])});
    }
}

void write_forecast_csv(const std::string& path, const Dataset& ds,
                        std::span<const QuarterForecast> forecasts) {
  csv::Writer w(path);
  if (!w.ok()) throw DataError("cannot write " + path);
  w.raw("station_id,quarter_index,mu,r,median,p05,p95");
  for (const QuarterForecast& f : forecasts)
    w.row({ds.stations[f.station].id, std::to_string(f.quarter), csv::fmt(f.dist.params.mu),
           csv::fmt(f.dist.params.r), csv::fmt(f.dist.point), csv::fmt(f.dist.lo),
           csv::fmt(f.dist.hi)});
}

}  // namespace tstar::pipeline
