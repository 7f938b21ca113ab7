#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tstar/timegrid.hpp"

namespace tstar::synth {

struct WeatherSensitivity {
  double temp = 0.35;
  double precip = 0.5;
  double wind = 0.2;
};

// Known-ground-truth generator: per (station, quarter) the pickup/drop-off
// rate is base(dow,hour)/4 * quarter_weight * weather_factor * metro_factor
// and counts are drawn from a zero-inflated NB(rate, r_true).
struct SynthSpec {
  int station_count = 20;
  std::size_t days = 120;
  std::uint64_t seed = 7;
  Minutes grid_start = 0;  // 0 -> default anchor (a Monday midnight)
  double base_rate = 8.0;  // mean weekday hourly demand scale
  std::array<double, 4> quarter_weights{2.0, 1.2, 0.6, 0.2};
  WeatherSensitivity weather_sens;
  double metro_coupling = 0.5;
  double r_true = 4.0;
  double zero_inflation = 0.1;

  // Materialized per-station rate tables, [station][dow*24 + hour]. Left
  // empty they are derived deterministically from the fields above.
  std::vector<std::vector<double>> pickup_profile;
  std::vector<std::vector<double>> dropoff_profile;

  void validate() const;
  void materialize_profiles();
};

struct SynthFiles {
  std::string trips;
  std::string stations;
  std::string metro;
  std::string metro_stations;
  std::string weather;
  std::string holidays;
  std::string truth;
};

struct GroundTruth {
  TimeGrid qgrid;
  std::vector<std::string> station_ids;
  std::vector<std::vector<double>> lambda_pickup;  // [station][quarter], pre zero-inflation
  std::vector<std::vector<double>> lambda_dropoff;
  std::vector<std::vector<std::int64_t>> counts_pickup;  // realized observations
  std::vector<std::vector<std::int64_t>> counts_dropoff;
  double r_true = 4.0;
  double pi0 = 0.0;
};

// Writes the full ingest schema set plus truth.csv under out_dir.
GroundTruth generate(SynthSpec spec, const std::string& out_dir, SynthFiles* files = nullptr);

SynthFiles default_files(const std::string& out_dir);

// Draws from the generator's observation distribution (used as the oracle
// forecaster in benchmarks).
std::vector<std::int64_t> zinb_sample(double lambda, double r, double pi0, std::size_t n,
                                      std::uint64_t seed);

}  // namespace tstar::synth
