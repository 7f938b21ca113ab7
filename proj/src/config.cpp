#include "tstar/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include "tstar/csv.hpp"
#include "tstar/errors.hpp"

namespace tstar::config {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// key = value lines; '#' starts a comment.
void parse_flat_file(const std::string& path,
                     const std::function<void(const std::string&, const std::string&)>& on_kv) {
  std::ifstream in(path);
  if (!in.is_open()) throw ConfigError("cannot open config file " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    on_kv(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

long long to_int(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const long long out = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size())
    throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size())
    throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected boolean, got '" + v + "'");
}

}  // namespace

void set_key(RunConfig& c, const std::string& k, const std::string& v) {
  if (k == "trips") c.trips = v;
  else if (k == "stations") c.stations = v;
  else if (k == "weather") c.weather = v;
  else if (k == "holidays") c.holidays = v;
  else if (k == "metro") c.metro = v;
  else if (k == "metro_stations") c.metro_stations = v;
  else if (k == "grid_start") c.grid_start = v;
  else if (k == "days") c.days = static_cast<std::size_t>(to_int(k, v));
  else if (k == "train_days") c.train_days = static_cast<std::size_t>(to_int(k, v));
  else if (k == "out_dir") c.out_dir = v;
  else if (k == "v1") c.v1 = static_cast<int>(to_int(k, v));
  else if (k == "v2") c.v2 = static_cast<int>(to_int(k, v));
  else if (k == "n_samples") c.n_samples = static_cast<std::size_t>(to_int(k, v));
  else if (k == "alpha") c.alpha = to_double(k, v);
  else if (k == "nu_meters") c.nu_meters = to_double(k, v);
  else if (k == "target") c.target = v;
  else if (k == "seed") c.seed = static_cast<std::uint64_t>(to_int(k, v));
  else if (k == "jobs") c.jobs = static_cast<int>(to_int(k, v));
  else if (k == "stage2_holiday") c.stage2_holiday = to_bool(k, v);
  else if (k == "stage2_quarter_channel") c.stage2_quarter_channel = to_bool(k, v);
  else if (k == "stage2_signals") {
    if (v != "in_sample" && v != "blocked")
      throw ConfigError("stage2_signals must be 'in_sample' or 'blocked'");
    c.stage2_signals = v;
  }
  else if (k == "station_embed_dim") c.station_embed_dim = static_cast<int>(to_int(k, v));
  else if (k == "global_embed_dim") c.global_embed_dim = static_cast<int>(to_int(k, v));
  else if (k == "holdout_stations") c.holdout_stations = v;
  else if (k == "s1_epochs") c.s1_epochs = static_cast<int>(to_int(k, v));
  else if (k == "s1_batch") c.s1_batch = static_cast<int>(to_int(k, v));
  else if (k == "s1_blocks") c.s1_blocks = static_cast<int>(to_int(k, v));
  else if (k == "s1_hidden") c.s1_hidden = static_cast<int>(to_int(k, v));
  else if (k == "s1_lr") c.s1_lr = to_double(k, v);
  else if (k == "s1_dropout") c.s1_dropout = to_double(k, v);
  else if (k == "s1_windows_per_epoch") c.s1_windows_per_epoch = static_cast<std::size_t>(to_int(k, v));
  else if (k == "s2_epochs") c.s2_epochs = static_cast<int>(to_int(k, v));
  else if (k == "s2_batch") c.s2_batch = static_cast<int>(to_int(k, v));
  else if (k == "s2_blocks") c.s2_blocks = static_cast<int>(to_int(k, v));
  else if (k == "s2_hidden") c.s2_hidden = static_cast<int>(to_int(k, v));
  else if (k == "s2_lr") c.s2_lr = to_double(k, v);
  else if (k == "s2_dropout") c.s2_dropout = to_double(k, v);
  else if (k == "s2_windows_per_epoch") c.s2_windows_per_epoch = static_cast<std::size_t>(to_int(k, v));
  else if (k == "grad_shards") c.grad_shards = static_cast<int>(to_int(k, v));
  else if (k == "cv_initial_weeks") c.cv_initial_weeks = static_cast<std::size_t>(to_int(k, v));
  else if (k == "cv_val_weeks") c.cv_val_weeks = static_cast<std::size_t>(to_int(k, v));
  else if (k == "cv_expand_weeks") c.cv_expand_weeks = static_cast<std::size_t>(to_int(k, v));
  else if (k == "cv_window_weeks") c.cv_window_weeks = static_cast<std::size_t>(to_int(k, v));
  else if (k == "cv_step_weeks") c.cv_step_weeks = static_cast<std::size_t>(to_int(k, v));
  else if (k == "cv_max_folds") c.cv_max_folds = static_cast<std::size_t>(to_int(k, v));
  else throw ConfigError("unknown config key '" + k + "'");
}

RunConfig load_run_config(const std::string& path) {
  RunConfig cfg;
  parse_flat_file(path, [&](const std::string& k, const std::string& v) { set_key(cfg, k, v); });
  return cfg;
}

void print_run_config(const RunConfig& c, std::ostream& out) {
  out << "trips = " << c.trips << '\n'
      << "stations = " << c.stations << '\n'
      << "weather = " << c.weather << '\n'
      << "holidays = " << c.holidays << '\n'
      << "metro = " << c.metro << '\n'
      << "metro_stations = " << c.metro_stations << '\n'
      << "grid_start = " << c.grid_start << '\n'
      << "days = " << c.days << '\n'
      << "train_days = " << c.train_days << '\n'
      << "out_dir = " << c.out_dir << '\n'
      << "v1 = " << c.v1 << '\n'
      << "v2 = " << c.v2 << '\n'
      << "n_samples = " << c.n_samples << '\n'
      << "alpha = " << csv::fmt(c.alpha) << '\n'
      << "nu_meters = " << csv::fmt(c.nu_meters) << '\n'
      << "target = " << c.target << '\n'
      << "seed = " << c.seed << '\n'
      << "jobs = " << c.jobs << '\n'
      << "stage2_holiday = " << (c.stage2_holiday ? 1 : 0) << '\n'
      << "stage2_quarter_channel = " << (c.stage2_quarter_channel ? 1 : 0) << '\n'
      << "stage2_signals = " << c.stage2_signals << '\n'
      << "station_embed_dim = " << c.station_embed_dim << '\n'
      << "global_embed_dim = " << c.global_embed_dim << '\n'
      << "holdout_stations = " << c.holdout_stations << '\n'
      << "s1_epochs = " << c.s1_epochs << '\n'
      << "s1_batch = " << c.s1_batch << '\n'
      << "s1_blocks = " << c.s1_blocks << '\n'
      << "s1_hidden = " << c.s1_hidden << '\n'
      << "s1_lr = " << csv::fmt(c.s1_lr) << '\n'
      << "s1_dropout = " << csv::fmt(c.s1_dropout) << '\n'
      << "s1_windows_per_epoch = " << c.s1_windows_per_epoch << '\n'
      << "s2_epochs = " << c.s2_epochs << '\n'
      << "s2_batch = " << c.s2_batch << '\n'
      << "s2_blocks = " << c.s2_blocks << '\n'
      << "s2_hidden = " << c.s2_hidden << '\n'
      << "s2_lr = " << csv::fmt(c.s2_lr) << '\n'
      << "s2_dropout = " << csv::fmt(c.s2_dropout) << '\n'
      << "s2_windows_per_epoch = " << c.s2_windows_per_epoch << '\n'
      << "grad_shards = " << c.grad_shards << '\n'
      << "cv_initial_weeks = " << c.cv_initial_weeks << '\n'
      << "cv_val_weeks = " << c.cv_val_weeks << '\n'
      << "cv_expand_weeks = " << c.cv_expand_weeks << '\n'
      << "cv_window_weeks = " << c.cv_window_weeks << '\n'
      << "cv_step_weeks = " << c.cv_step_weeks << '\n'
      << "cv_max_folds = " << c.cv_max_folds << '\n';
}

DemandKind parse_kind(const std::string& name) {
  if (name == "pickup") return DemandKind::pickup;
  if (name == "dropoff") return DemandKind::dropoff;
  throw ConfigError("target must be 'pickup' or 'dropoff', got '" + name + "'");
}

Minutes parse_grid_start(const RunConfig& cfg) {
  Minutes start = 0;
  if (!parse_timestamp(cfg.grid_start, start))
    throw ConfigError("bad grid_start timestamp '" + cfg.grid_start + "'");
  return start;
}

SplitSpec quarter_split(const RunConfig& cfg) {
  if (cfg.train_days == 0 || cfg.train_days >= cfg.days)
    throw ConfigError("train_days must be positive and smaller than days");
  return SplitSpec{cfg.train_days * 96, cfg.days * 96};
}

pipeline::PipelineConfig to_pipeline_config(const RunConfig& c) {
  pipeline::PipelineConfig p;
  p.v1 = c.v1;
  p.v2 = c.v2;
  p.n_samples = c.n_samples;
  p.alpha = c.alpha;
  p.target = parse_kind(c.target);
  p.seed = c.seed;
  p.jobs = c.jobs;
  p.stage2_holiday = c.stage2_holiday;
  p.stage2_quarter_channel = c.stage2_quarter_channel;
  p.blocked_signals = c.stage2_signals == "blocked";
  p.station_embed_dim = c.station_embed_dim;
  p.global_embed_dim = c.global_embed_dim;
  p.stage1_train.epochs = c.s1_epochs;
  p.stage1_train.batch_size = c.s1_batch;
  p.stage1_train.encoder_blocks = c.s1_blocks;
  p.stage1_train.hidden_size = c.s1_hidden;
  p.stage1_train.learning_rate = c.s1_lr;
  p.stage1_train.dropout = c.s1_dropout;
  p.stage1_train.max_windows_per_epoch = c.s1_windows_per_epoch;
  p.stage1_train.grad_shards = c.grad_shards;
  p.stage2_train.epochs = c.s2_epochs;
  p.stage2_train.batch_size = c.s2_batch;
  p.stage2_train.encoder_blocks = c.s2_blocks;
  p.stage2_train.hidden_size = c.s2_hidden;
  p.stage2_train.learning_rate = c.s2_lr;
  p.stage2_train.dropout = c.s2_dropout;
  p.stage2_train.max_windows_per_epoch = c.s2_windows_per_epoch;
  p.stage2_train.grad_shards = c.grad_shards;
  return p;
}

pipeline::DataPaths raw_paths(const RunConfig& c) {
  pipeline::DataPaths p;
  p.trips = c.trips;
  p.stations = c.stations;
  p.weather = c.weather;
  p.holidays = c.holidays;
  p.metro = c.metro;
  p.metro_stations = c.metro_stations;
  return p;
}

std::vector<std::string> split_list(const std::string& comma_separated) {
  std::vector<std::string> out;
  std::stringstream ss(comma_separated);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

synth::SynthSpec load_synth_spec(const std::string& path) {
  synth::SynthSpec spec;
  parse_flat_file(path, [&](const std::string& k, const std::string& v) {
    if (k == "stations") spec.station_count = static_cast<int>(to_int(k, v));
    else if (k == "days") spec.days = static_cast<std::size_t>(to_int(k, v));
    else if (k == "seed") spec.seed = static_cast<std::uint64_t>(to_int(k, v));
    else if (k == "start") {
      Minutes m = 0;
      if (!parse_timestamp(v, m)) throw ConfigError("bad synth start timestamp '" + v + "'");
      spec.grid_start = m;
    } else if (k == "base_rate") spec.base_rate = to_double(k, v);
    else if (k == "quarter_weights") {
      auto parts = split_list(v);
      if (parts.size() != 4) throw ConfigError("quarter_weights needs 4 comma-separated values");
      for (int i = 0; i < 4; ++i) spec.quarter_weights[i] = to_double(k, parts[i]);
    } else if (k == "temp_coef") spec.weather_sens.temp = to_double(k, v);
    else if (k == "precip_coef") spec.weather_sens.precip = to_double(k, v);
    else if (k == "wind_coef") spec.weather_sens.wind = to_double(k, v);
    else if (k == "metro_coupling") spec.metro_coupling = to_double(k, v);
    else if (k == "r_true") spec.r_true = to_double(k, v);
    else if (k == "zero_inflation") spec.zero_inflation = to_double(k, v);
    else throw ConfigError("unknown synth key '" + k + "'");
  });
  return spec;
}

// ---------------------------------------------------------------------------
// Bundle

std::string bundle_dir(const RunConfig& cfg) { return cfg.out_dir + "/bundle"; }

void write_bundle(const RunConfig& cfg, const pipeline::Dataset& ds,
                  const pipeline::IngestSummary& summary) {
  const std::string dir = bundle_dir(cfg);
  std::filesystem::create_directories(dir);

  {
    std::ofstream meta(dir + "/meta.cfg");
    meta << "grid_start = " << cfg.grid_start << '\n'
         << "days = " << cfg.days << '\n'
         << "train_days = " << cfg.train_days << '\n'
         << "nu_meters = " << csv::fmt(cfg.nu_meters) << '\n'
         << "has_metro = " << (ds.metro_dev.empty() ? 0 : 1) << '\n';
  }
  {
    csv::Writer w(dir + "/stations.csv");
    w.raw("station_id,lat,lon,capacity");
    for (const auto& st : ds.stations)
      w.row({st.id, csv::fmt(st.lat), csv::fmt(st.lon), std::to_string(st.capacity)});
  }
  {
    csv::Writer w(dir + "/demand.csv");
    w.raw("station_id,quarter_index,pickup,dropoff");
    for (std::size_t i = 0; i < ds.stations.size(); ++i)
      for (std::size_t q = 0; q < ds.qgrid.length; ++q)
        w.row({ds.stations[i].id, std::to_string(q), std::to_string(ds.pickup_q[i].values[q]),
               std::to_string(ds.dropoff_q[i].values[q])});
  }
  {
    csv::Writer w(dir + "/weather.csv");
    w.raw("hour_start,temperature_c,precip_mm,wind_mps");
    for (std::size_t h = 0; h < ds.hgrid.length; ++h)
      w.row({format_timestamp(ds.hgrid.interval_begin(h)), csv::fmt(ds.weather[h].temperature),
             csv::fmt(ds.weather[h].precipitation), csv::fmt(ds.weather[h].wind_speed)});
  }
  {
    std::ofstream hol(dir + "/holidays.txt");
    for (std::int64_t day : ds.holidays) hol << format_date(day) << '\n';
  }
  if (!ds.metro_dev.empty()) {
    std::filesystem::copy_file(cfg.metro, dir + "/metro.csv",
                               std::filesystem::copy_options::overwrite_existing);
    std::filesystem::copy_file(cfg.metro_stations, dir + "/metro_stations.csv",
                               std::filesystem::copy_options::overwrite_existing);
  }
  {
    std::ofstream rep(dir + "/ingest_report.txt");
    rep << "trips_rows " << summary.trips.total_rows << '\n'
        << "trips_accepted " << summary.trips.accepted << '\n';
    for (const auto& [cls, count] : summary.trips.counts)
      rep << "trips_rejected_" << cls << ' ' << count << '\n';
    rep << "trips_out_of_window " << summary.discarded_trips_out_of_window << '\n'
        << "trips_unknown_station " << summary.discarded_trips_unknown_station << '\n'
        << "metro_rows " << summary.metro.total_rows << '\n'
        << "metro_accepted " << summary.metro.accepted << '\n'
        << "weather_rows " << summary.weather.total_rows << '\n'
        << "linked_stations " << summary.linked_stations << '\n';
  }
}

namespace {

pipeline::Dataset load_bundle_impl(const RunConfig& cfg, const SplitSpec& qsplit) {
  const std::string dir = bundle_dir(cfg);
  if (!std::filesystem::exists(dir + "/meta.cfg"))
    throw DataError("no ingested bundle under " + dir + " (run the ingest command first)");

  RunConfig meta = cfg;
  bool has_metro = false;
  parse_flat_file(dir + "/meta.cfg", [&](const std::string& k, const std::string& v) {
    if (k == "has_metro") has_metro = to_bool(k, v);
    else set_key(meta, k, v);
  });

  pipeline::Dataset ds;
  ds.qgrid = build_grid(parse_grid_start(meta), 15, meta.days * 96);
  ds.hgrid = hourly_counterpart(ds.qgrid);
  qsplit.validate(ds.qgrid.length);
  ds.qsplit = qsplit;
  ds.hsplit = SplitSpec{qsplit.train_end / 4, qsplit.test_end / 4};

  auto stations = ingest::parse_stations(dir + "/stations.csv");
  ds.stations = std::move(stations.stations);
  ds.max_capacity = 1.0;
  for (const auto& st : ds.stations)
    ds.max_capacity = std::max(ds.max_capacity, static_cast<double>(st.capacity));

  const std::size_t n = ds.stations.size();
  ds.pickup_q.resize(n);
  ds.dropoff_q.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.pickup_q[i] = DemandSeries{ds.stations[i].id, ds.qgrid, DemandKind::pickup,
                                  std::vector<std::int64_t>(ds.qgrid.length, 0)};
    ds.dropoff_q[i] = DemandSeries{ds.stations[i].id, ds.qgrid, DemandKind::dropoff,
                                   std::vector<std::int64_t>(ds.qgrid.length, 0)};
  }
  csv::Reader reader(dir + "/demand.csv");
  if (!reader.ok()) throw DataError("cannot open " + dir + "/demand.csv");
  const int c_id = reader.column("station_id");
  const int c_q = reader.column("quarter_index");
  const int c_p = reader.column("pickup");
  const int c_d = reader.column("dropoff");
  if (c_id < 0 || c_q < 0 || c_p < 0 || c_d < 0)
    throw DataError(dir + "/demand.csv: unexpected schema");
  std::vector<std::string> f;
  int last_station = -1;
  while (reader.next(f)) {
    if (last_station < 0 || ds.stations[last_station].id != f[c_id]) {
      last_station = ds.station_index(f[c_id]);
      if (last_station < 0) throw DataError("demand.csv references unknown station " + f[c_id]);
    }
    const std::size_t q = static_cast<std::size_t>(std::strtoull(f[c_q].c_str(), nullptr, 10));
    if (q >= ds.qgrid.length) throw DataError("demand.csv quarter index out of range");
    ds.pickup_q[last_station].values[q] = std::strtoll(f[c_p].c_str(), nullptr, 10);
    ds.dropoff_q[last_station].values[q] = std::strtoll(f[c_d].c_str(), nullptr, 10);
  }
  ds.pickup_h.resize(n);
  ds.dropoff_h.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.pickup_h[i] = downsample_to_hourly(ds.pickup_q[i]);
    ds.dropoff_h[i] = downsample_to_hourly(ds.dropoff_q[i]);
  }

  auto weather = ingest::parse_weather(dir + "/weather.csv", ds.hgrid);
  ds.weather = std::move(weather.hours);
  ds.holidays = ingest::load_holidays(dir + "/holidays.txt");

  if (has_metro) {
    auto flows = ingest::parse_metro(dir + "/metro.csv", ds.qgrid);
    auto metros = ingest::parse_metro_stations(dir + "/metro_stations.csv");
    auto links = ingest::link_metro_stations(ds.stations, metros, meta.nu_meters);
    auto table = features::MetroFlowTable::build(flows.flows, ds.qgrid);
    ds.metro_dev =
        features::compute_metro_deviations(table, links, ds.qgrid, ds.qsplit.train_end);
  }
  return ds;
}

}  // namespace

pipeline::Dataset load_bundle(const RunConfig& cfg) {
  if (!std::filesystem::exists(bundle_dir(cfg) + "/meta.cfg"))
    throw DataError("no ingested bundle under " + bundle_dir(cfg) +
                    " (run the ingest command first)");
  RunConfig meta = cfg;
  parse_flat_file(bundle_dir(cfg) + "/meta.cfg",
                  [&](const std::string& k, const std::string& v) {
                    if (k != "has_metro") set_key(meta, k, v);
                  });
  return load_bundle_impl(cfg, quarter_split(meta));
}

pipeline::Dataset load_bundle_with_split(const RunConfig& cfg, const SplitSpec& qsplit) {
  return load_bundle_impl(cfg, qsplit);
}

}  // namespace tstar::config
