#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tstar/timeutil.hpp"

namespace tstar {

using StationId = std::string;

enum class DemandKind { pickup, dropoff };

inline const char* kind_name(DemandKind k) { return k == DemandKind::pickup ? "pickup" : "dropoff"; }

// Fixed discretization of the service timeline. Interval t covers the
// half-open window [start + t*resolution, start + (t+1)*resolution); a
// timestamp exactly on a boundary belongs to the later interval.
struct TimeGrid {
  Minutes start = 0;
  int resolution = 15;  // minutes; 15 or 60
  std::size_t length = 0;

  Minutes interval_begin(std::size_t t) const { return start + static_cast<Minutes>(t) * resolution; }
  Minutes end() const { return start + static_cast<Minutes>(length) * resolution; }

  // Interval containing a timestamp, or -1 when outside the grid.
  std::int64_t index_of(Minutes ts) const {
    if (ts < start || ts >= end()) return -1;
    return (ts - start) / resolution;
  }

  int hour_at(std::size_t t) const { return hour_of_day(interval_begin(t)); }
  int dow_at(std::size_t t) const { return day_of_week(day_of(interval_begin(t))); }
  int quarter_at(std::size_t t) const { return minute_of_hour(interval_begin(t)) / 15; }
  std::int64_t day_at(std::size_t t) const { return day_of(interval_begin(t)); }

  bool operator==(const TimeGrid&) const = default;
};

TimeGrid build_grid(Minutes start, int resolution, std::size_t length);

// Hourly counterpart that shares the same start: hour_of(q) = q / 4.
TimeGrid hourly_counterpart(const TimeGrid& quarter_grid);

struct TripRecord {
  Minutes start_time = 0;
  Minutes end_time = 0;
  StationId origin;
  StationId destination;
};

// Per-station integer counts on one grid.
struct DemandSeries {
  StationId station;
  TimeGrid grid;
  DemandKind kind = DemandKind::pickup;
  std::vector<std::int64_t> values;
};

struct AggregateResult {
  DemandSeries series;
  std::size_t discarded_out_of_window = 0;
};

AggregateResult aggregate_trips(std::span<const TripRecord> trips, const TimeGrid& grid,
                                const StationId& station, DemandKind kind);

DemandSeries downsample_to_hourly(const DemandSeries& quarter_series);

// Train/test boundary in interval indices, both exclusive ends.
struct SplitSpec {
  std::size_t train_end = 0;
  std::size_t test_end = 0;

  void validate(std::size_t total) const;
  // 15-min split of an hourly one (and vice versa) anchored at the same start.
  SplitSpec scaled(int factor) const { return {train_end * factor, test_end * factor}; }
};

struct SplitView {
  std::span<const std::int64_t> train;
  std::span<const std::int64_t> test;
};

SplitView split(const DemandSeries& series, const SplitSpec& spec);

}  // namespace tstar
