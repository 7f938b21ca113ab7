#include "tstar/features.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "tstar/csv.hpp"
#include "tstar/errors.hpp"

namespace tstar::features {

SeasonalProfile SeasonalProfile::build(const TimeGrid& grid, std::span<const double> values,
                                       std::size_t train_end) {
  if (train_end == 0 || train_end > grid.length || values.size() < grid.length)
    throw ConfigError("seasonal_profile: invalid training range");
  SeasonalProfile p;
  p.quarters_ = grid.resolution == 15 ? 4 : 1;
  const std::size_t keys = 7 * 24 * static_cast<std::size_t>(p.quarters_);
  p.mean_.assign(keys, 0.0);
  p.count_.assign(keys, 0);
  p.hour_mean_.assign(24 * p.quarters_, 0.0);
  p.hour_count_.assign(24 * p.quarters_, 0);

  double total = 0.0;
  for (std::size_t t = 0; t < train_end; ++t) {
    const std::size_t k = p.key(grid.dow_at(t), grid.hour_at(t), grid.quarter_at(t));
    const std::size_t hk = static_cast<std::size_t>(grid.hour_at(t)) * p.quarters_ +
                           grid.quarter_at(t);
    p.mean_[k] += values[t];
    ++p.count_[k];
    p.hour_mean_[hk] += values[t];
    ++p.hour_count_[hk];
    total += values[t];
  }
  for (std::size_t k = 0; k < keys; ++k)
    if (p.count_[k] > 0) p.mean_[k] /= static_cast<double>(p.count_[k]);
  for (std::size_t k = 0; k < p.hour_mean_.size(); ++k)
    if (p.hour_count_[k] > 0) p.hour_mean_[k] /= static_cast<double>(p.hour_count_[k]);
  p.global_mean_ = total / static_cast<double>(train_end);
  return p;
}

SeasonalProfile SeasonalProfile::build_counts(const TimeGrid& grid,
                                              std::span<const std::int64_t> values,
                                              std::size_t train_end) {
  std::vector<double> real(values.begin(), values.end());
  return build(grid, real, train_end);
}

double SeasonalProfile::lookup(int dow, int hour, int quarter) const {
  const std::size_t k = key(dow, hour, quarter);
  if (count_[k] > 0) return mean_[k];
  const std::size_t hk = static_cast<std::size_t>(hour) * quarters_ + quarter;
  if (hour_count_[hk] > 0) return hour_mean_[hk];
  return global_mean_;
}

bool SeasonalProfile::key_observed(int dow, int hour, int quarter) const {
  return count_[key(dow, hour, quarter)] > 0;
}

std::size_t SeasonalProfile::missing_key_count() const {
  std::size_t n = 0;
  for (std::int64_t c : count_)
    if (c == 0) ++n;
  return n;
}

MetroFlowTable MetroFlowTable::build(std::span<const ingest::MetroFlowRecord> records,
                                     const TimeGrid& quarter_grid) {
  MetroFlowTable table;
  std::unordered_map<std::string, int> pos;
  for (const auto& rec : records) {
    auto [it, inserted] = pos.try_emplace(rec.metro_station, static_cast<int>(table.ids.size()));
    if (inserted) {
      table.ids.push_back(rec.metro_station);
      table.check_ins.emplace_back(quarter_grid.length, 0.0);
      table.check_outs.emplace_back(quarter_grid.length, 0.0);
    }
    if (rec.interval < 0 || rec.interval >= static_cast<std::int64_t>(quarter_grid.length))
      continue;
    table.check_ins[it->second][rec.interval] += static_cast<double>(rec.check_ins);
    table.check_outs[it->second][rec.interval] += static_cast<double>(rec.check_outs);
  }
  return table;
}

int MetroFlowTable::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == id) return static_cast<int>(i);
  return -1;
}

std::vector<MetroDeviationSeries> compute_metro_deviations(
    const MetroFlowTable& flows, std::span<const ingest::ProximityLink> links,
    const TimeGrid& quarter_grid, std::size_t train_end) {
  // Profiles are per metro station and per direction, training split only.
  std::vector<SeasonalProfile> prof_in, prof_out;
  prof_in.reserve(flows.ids.size());
  prof_out.reserve(flows.ids.size());
  for (std::size_t m = 0; m < flows.ids.size(); ++m) {
    prof_in.push_back(SeasonalProfile::build(quarter_grid, flows.check_ins[m], train_end));
    prof_out.push_back(SeasonalProfile::build(quarter_grid, flows.check_outs[m], train_end));
  }

  std::vector<MetroDeviationSeries> out;
  out.reserve(links.size());
  for (const auto& link : links) {
    MetroDeviationSeries dev;
    dev.bike_station = link.bike_station;
    dev.d_in.assign(quarter_grid.length, 0.0);
    dev.d_out.assign(quarter_grid.length, 0.0);
    std::vector<int> metro_idx;
    for (const auto& metro : link.metro_stations) {
      const int m = flows.index_of(metro);
      if (m >= 0) metro_idx.push_back(m);
    }
    dev.linked = !metro_idx.empty();
    for (std::size_t t = 0; t < quarter_grid.length; ++t) {
      const int dow = quarter_grid.dow_at(t);
      const int hour = quarter_grid.hour_at(t);
      const int q = quarter_grid.quarter_at(t);
      for (int m : metro_idx) {
        dev.d_in[t] += flows.check_ins[m][t] - prof_in[m].lookup(dow, hour, q);
        dev.d_out[t] += flows.check_outs[m][t] - prof_out[m].lookup(dow, hour, q);
      }
    }
    out.push_back(std::move(dev));
  }
  return out;
}

const Channel* FeatureFrame::find(const std::string& name) const {
  for (const auto& c : reals)
    if (c.name == name) return &c;
  return nullptr;
}

Channel* FeatureFrame::find(const std::string& name) {
  for (auto& c : reals)
    if (c.name == name) return &c;
  return nullptr;
}

namespace {

void fill_calendar(FeatureFrame& frame, const std::set<std::int64_t>& holidays) {
  const std::size_t n = frame.grid.length;
  frame.hour.resize(n);
  frame.dow.resize(n);
  frame.quarter.resize(n);
  frame.holiday.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    frame.hour[t] = static_cast<std::uint8_t>(frame.grid.hour_at(t));
    frame.dow[t] = static_cast<std::uint8_t>(frame.grid.dow_at(t));
    frame.quarter[t] = static_cast<std::uint8_t>(frame.grid.quarter_at(t));
    frame.holiday[t] = holidays.count(frame.grid.day_at(t)) ? 1 : 0;
  }
}

}  // namespace

FeatureFrame assemble_stage1_features(const ingest::StationMeta& station, int station_index,
                                      double max_capacity, const TimeGrid& hourly_grid,
                                      std::span<const ingest::WeatherRecord> weather,
                                      const std::set<std::int64_t>& holidays) {
  if (weather.size() < hourly_grid.length)
    throw DataError("assemble_stage1_features: weather does not cover the grid");
  FeatureFrame frame;
  frame.grid = hourly_grid;
  frame.station_index = station_index;
  frame.station = station.id;
  frame.capacity_norm = max_capacity > 0 ? station.capacity / max_capacity : 0.0;
  fill_calendar(frame, holidays);

  Channel temp{"temperature", {}}, precip{"precipitation", {}}, wind{"wind_speed", {}};
  temp.values.resize(hourly_grid.length);
  precip.values.resize(hourly_grid.length);
  wind.values.resize(hourly_grid.length);
  for (std::size_t h = 0; h < hourly_grid.length; ++h) {
    temp.values[h] = weather[h].temperature;
    precip.values[h] = weather[h].precipitation;
    wind.values[h] = weather[h].wind_speed;
  }
  frame.reals = {std::move(temp), std::move(precip), std::move(wind)};
  return frame;
}

FeatureFrame assemble_stage2_features(const ingest::StationMeta& station, int station_index,
                                      double max_capacity, const TimeGrid& quarter_grid,
                                      const Stage2Locals& locals,
                                      const std::set<std::int64_t>& holidays) {
  const std::size_t n = quarter_grid.length;
  if (locals.mu_quarter.size() != n || locals.sigma_hour.size() != n ||
      locals.delta_pickup.size() != n || locals.delta_dropoff.size() != n ||
      locals.metro_dev.size() != n || locals.covered.size() != n)
    throw DataError("assemble_stage2_features: local inputs do not cover the grid");
  FeatureFrame frame;
  frame.grid = quarter_grid;
  frame.station_index = station_index;
  frame.station = station.id;
  frame.capacity_norm = max_capacity > 0 ? station.capacity / max_capacity : 0.0;
  fill_calendar(frame, holidays);
  frame.reals = {Channel{"mu_quarter", locals.mu_quarter},
                 Channel{"sigma_hour", locals.sigma_hour},
                 Channel{"delta_pickup", locals.delta_pickup},
                 Channel{"delta_dropoff", locals.delta_dropoff},
                 Channel{"metro_dev", locals.metro_dev}};
  frame.valid.assign(locals.covered.begin(), locals.covered.end());
  return frame;
}

const ChannelStat* NormStats::find(const std::string& name) const {
  for (const auto& c : channels)
    if (c.name == name) return &c;
  return nullptr;
}

void NormStats::add(const std::string& name, double mean, double std_dev, bool degenerate) {
  channels.push_back(ChannelStat{name, mean, std_dev, degenerate});
}

double NormStats::normalize(const std::string& name, double value) const {
  const ChannelStat* stat = find(name);
  if (!stat) throw ConfigError("normalize: no statistics for channel '" + name + "'");
  return (value - stat->mean) / stat->std;
}

namespace {

ChannelStat reduce_stat(const std::string& name, double sum, double sum_sq, std::size_t n) {
  ChannelStat stat;
  stat.name = name;
  if (n == 0) {
    stat.degenerate = true;
    return stat;
  }
  stat.mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, sum_sq / static_cast<double>(n) - stat.mean * stat.mean);
  stat.std = std::sqrt(var);
  if (stat.std < 1e-12) {
    stat.std = 1.0;
    stat.degenerate = true;
  }
  return stat;
}

}  // namespace

NormStats fit_norm_stats(std::span<const FeatureFrame> frames, std::size_t train_end) {
  NormStats stats;
  if (frames.empty()) return stats;
  for (const auto& proto : frames.front().reals) {
    double sum = 0.0, sum_sq = 0.0;
    std::size_t n = 0;
    for (const auto& frame : frames) {
      const Channel* c = frame.find(proto.name);
      if (!c) throw ConfigError("fit_norm_stats: frames disagree on channel '" + proto.name + "'");
      const std::size_t limit = std::min<std::size_t>(train_end, c->values.size());
      for (std::size_t t = 0; t < limit; ++t) {
        if (!frame.valid.empty() && !frame.valid[t]) continue;
        sum += c->values[t];
        sum_sq += c->values[t] * c->values[t];
        ++n;
      }
    }
    stats.channels.push_back(reduce_stat(proto.name, sum, sum_sq, n));
  }
  return stats;
}

ChannelStat fit_value_stat(const std::string& name,
                           std::span<const std::vector<std::int64_t>* const> series,
                           std::size_t train_end) {
  double sum = 0.0, sum_sq = 0.0;
  std::size_t n = 0;
  for (const auto* s : series) {
    const std::size_t limit = std::min<std::size_t>(train_end, s->size());
    for (std::size_t t = 0; t < limit; ++t) {
      const double v = static_cast<double>((*s)[t]);
      sum += v;
      sum_sq += v * v;
      ++n;
    }
  }
  return reduce_stat(name, sum, sum_sq, n);
}

void apply_norm(FeatureFrame& frame, const NormStats& stats) {
  if (frame.normalized) throw ConfigError("apply_norm: frame is already normalized");
  for (auto& channel : frame.reals) {
    const ChannelStat* stat = stats.find(channel.name);
    if (!stat) throw ConfigError("apply_norm: no statistics for channel '" + channel.name + "'");
    for (double& v : channel.values) v = (v - stat->mean) / stat->std;
  }
  frame.normalized = true;
}

void write_features_csv(const std::string& path, std::span<const FeatureFrame> frames) {
  csv::Writer w(path);
  if (!w.ok()) throw DataError("cannot write " + path);
  std::string header = "station_id,interval,hour,dow,quarter,holiday,capacity_norm";
  if (!frames.empty())
    for (const auto& c : frames.front().reals) header += "," + c.name;
  w.raw(header);
  std::vector<std::string> row;
  for (const auto& frame : frames) {
    for (std::size_t t = 0; t < frame.grid.length; ++t) {
      row = {frame.station, std::to_string(t), std::to_string(frame.hour[t]),
             std::to_string(frame.dow[t]), std::to_string(frame.quarter[t]),
             std::to_string(frame.holiday[t]), csv::fmt(frame.capacity_norm)};
      for (const auto& c : frame.reals) row.push_back(csv::fmt(c.values[t]));
      w.row(row);
    }
  }
}

}  // namespace tstar::features
