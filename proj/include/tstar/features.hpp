#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "tstar/ingest.hpp"
#include "tstar/timegrid.hpp"

namespace tstar::features {

// Mean value per (day-of-week, hour-of-day[, quarter-of-hour]) key over the
// training split, with the documented fallback chain for unseen keys:
// (dow, hour, quarter) -> (hour, quarter) -> global mean.
class SeasonalProfile {
 public:
  static SeasonalProfile build(const TimeGrid& grid, std::span<const double> values,
                               std::size_t train_end);
  static SeasonalProfile build_counts(const TimeGrid& grid,
                                      std::span<const std::int64_t> values,
                                      std::size_t train_end);

  double lookup(int dow, int hour, int quarter) const;
  bool key_observed(int dow, int hour, int quarter) const;
  std::size_t missing_key_count() const;
  double global_mean() const { return global_mean_; }
  int quarters_per_hour() const { return quarters_; }

 private:
  int quarters_ = 1;
  std::vector<double> mean_;        // [dow][hour][quarter]
  std::vector<std::int64_t> count_;
  std::vector<double> hour_mean_;   // [hour][quarter]
  std::vector<std::int64_t> hour_count_;
  double global_mean_ = 0.0;

  std::size_t key(int dow, int hour, int quarter) const {
    return (static_cast<std::size_t>(dow) * 24 + hour) * quarters_ + quarter;
  }
};

// Dense per-metro-station flow table on the quarter grid; intervals without
// a record stay zero.
struct MetroFlowTable {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> check_ins;   // [metro][quarter]
  std::vector<std::vector<double>> check_outs;

  static MetroFlowTable build(std::span<const ingest::MetroFlowRecord> records,
                              const TimeGrid& quarter_grid);
  int index_of(const std::string& id) const;
};

// Observed-minus-profile deviations summed over a bike station's linked
// metro stations; all-zero when the station is unlinked.
struct MetroDeviationSeries {
  StationId bike_station;
  bool linked = false;
  std::vector<double> d_in;
  std::vector<double> d_out;
};

std::vector<MetroDeviationSeries> compute_metro_deviations(
    const MetroFlowTable& flows, std::span<const ingest::ProximityLink> links,
    const TimeGrid& quarter_grid, std::size_t train_end);

struct Channel {
  std::string name;
  std::vector<double> values;
};

// Aligned per-station context. Calendar channels are stored as small codes
// and expanded to one-hot vectors at window assembly; real channels carry
// the z-score state via `normalized`.
struct FeatureFrame {
  TimeGrid grid;
  int station_index = -1;
  StationId station;
  double capacity_norm = 0.0;
  std::vector<std::uint8_t> hour;
  std::vector<std::uint8_t> dow;      // Monday = 0
  std::vector<std::uint8_t> quarter;  // quarter-of-hour, 0 on hourly grids
  std::vector<std::uint8_t> holiday;
  std::vector<Channel> reals;
  std::vector<std::uint8_t> valid;  // empty means fully covered
  bool normalized = false;

  const Channel* find(const std::string& name) const;
  Channel* find(const std::string& name);
};

FeatureFrame assemble_stage1_features(const ingest::StationMeta& station, int station_index,
                                      double max_capacity, const TimeGrid& hourly_grid,
                                      std::span<const ingest::WeatherRecord> weather,
                                      const std::set<std::int64_t>& holidays);

// Stage-2 local inputs, one value per quarter; `covered` marks quarters whose
// parent hour has a stage-1 forecast (gap markers stay excluded, never zero).
struct Stage2Locals {
  std::vector<double> mu_quarter;    // parent-hour mu / 4
  std::vector<double> sigma_hour;    // parent-hour sample sigma
  std::vector<double> delta_pickup;
  std::vector<double> delta_dropoff;
  std::vector<double> metro_dev;     // check-out dev for pickup, check-in for dropoff
  std::vector<std::uint8_t> covered;
};

FeatureFrame assemble_stage2_features(const ingest::StationMeta& station, int station_index,
                                      double max_capacity, const TimeGrid& quarter_grid,
                                      const Stage2Locals& locals,
                                      const std::set<std::int64_t>& holidays);

struct ChannelStat {
  std::string name;
  double mean = 0.0;
  double std = 1.0;
  bool degenerate = false;  // constant channel: std replaced by 1
};

struct NormStats {
  std::vector<ChannelStat> channels;

  const ChannelStat* find(const std::string& name) const;
  void add(const std::string& name, double mean, double std_dev, bool degenerate);
  double normalize(const std::string& name, double value) const;
};

// Statistics from rows < train_end only.
NormStats fit_norm_stats(std::span<const FeatureFrame> frames, std::size_t train_end);
ChannelStat fit_value_stat(const std::string& name,
                           std::span<const std::vector<std::int64_t>* const> series,
                           std::size_t train_end);

// Throws on double application.
void apply_norm(FeatureFrame& frame, const NormStats& stats);

void write_features_csv(const std::string& path, std::span<const FeatureFrame> frames);

}  // namespace tstar::features
