#include "tstar/timegrid.hpp"

#include "tstar/errors.hpp"

namespace tstar {

TimeGrid build_grid(Minutes start, int resolution, std::size_t length) {
  if (resolution != 15 && resolution != 60)
    throw ConfigError("build_grid: resolution must be 15 or 60 minutes, got " +
                      std::to_string(resolution));
  if (length == 0) throw ConfigError("build_grid: length must be positive");
  return TimeGrid{start, resolution, length};
}

TimeGrid hourly_counterpart(const TimeGrid& quarter_grid) {
  if (quarter_grid.resolution != 15)
    throw ConfigError("hourly_counterpart: expected a 15-minute grid");
  if (quarter_grid.length % 4 != 0)
    throw DataError("hourly_counterpart: grid length not divisible by 4");
  return TimeGrid{quarter_grid.start, 60, quarter_grid.length / 4};
}

AggregateResult aggregate_trips(std::span<const TripRecord> trips, const TimeGrid& grid,
                                const StationId& station, DemandKind kind) {
  AggregateResult out;
  out.series.station = station;
  out.series.grid = grid;
  out.series.kind = kind;
  out.series.values.assign(grid.length, 0);
  for (const TripRecord& trip : trips) {
    const StationId& endpoint = kind == DemandKind::pickup ? trip.origin : trip.destination;
    if (endpoint != station) continue;
    const Minutes ts = kind == DemandKind::pickup ? trip.start_time : trip.end_time;
    const std::int64_t t = grid.index_of(ts);
    if (t < 0) {
      ++out.discarded_out_of_window;
      continue;
    }
    ++out.series.values[static_cast<std::size_t>(t)];
  }
  return out;
}

DemandSeries downsample_to_hourly(const DemandSeries& quarter_series) {
  if (quarter_series.grid.resolution != 15)
    throw DataError("downsample_to_hourly: input is not a 15-minute series");
  if (quarter_series.grid.length % 4 != 0)
    throw DataError("downsample_to_hourly: ragged tail, length not divisible by 4");
  DemandSeries out;
  out.station = quarter_series.station;
  out.kind = quarter_series.kind;
  out.grid = hourly_counterpart(quarter_series.grid);
  out.values.resize(out.grid.length);
  for (std::size_t h = 0; h < out.grid.length; ++h) {
    out.values[h] = quarter_series.values[4 * h] + quarter_series.values[4 * h + 1] +
                    quarter_series.values[4 * h + 2] + quarter_series.values[4 * h + 3];
  }
  return out;
}

void SplitSpec::validate(std::size_t total) const {
  if (train_end == 0) throw ConfigError("split: empty training range");
  if (train_end >= test_end) throw ConfigError("split: train_end must precede test_end");
  if (test_end > total)
    throw ConfigError("split: test_end " + std::to_string(test_end) + " exceeds grid length " +
                      std::to_string(total));
}

SplitView split(const DemandSeries& series, const SplitSpec& spec) {
  spec.validate(series.grid.length);
  std::span<const std::int64_t> all(series.values);
  return SplitView{all.subspan(0, spec.train_end),
                   all.subspan(spec.train_end, spec.test_end - spec.train_end)};
}

}  // namespace tstar
