#include "tstar/synth.hpp"

#include <cmath>
#include <filesystem>

#include "tstar/csv.hpp"
#include "tstar/errors.hpp"
#include "tstar/nbdist.hpp"
#include "tstar/random.hpp"

namespace tstar::synth {

namespace {

// 2022-10-03 was a Monday; weeks on the grid align with calendar weeks.
Minutes default_anchor() { return minutes_from_civil(2022, 10, 3, 0, 0); }

double weekday_shape(int hour) {
  static const double shape[24] = {0.10, 0.08, 0.06, 0.06, 0.08, 0.15, 0.50, 1.10,
                                   1.70, 1.50, 1.00, 0.90, 0.95, 0.90, 0.90, 1.00,
                                   1.30, 1.90, 1.60, 1.20, 0.80, 0.50, 0.30, 0.15};
  return shape[hour];
}

double weekend_shape(int hour) {
  static const double shape[24] = {0.15, 0.10, 0.08, 0.06, 0.06, 0.08, 0.15, 0.30,
                                   0.55, 0.85, 1.10, 1.25, 1.30, 1.30, 1.25, 1.20,
                                   1.15, 1.05, 0.90, 0.70, 0.50, 0.40, 0.30, 0.20};
  return shape[hour];
}

double metro_base_out(int dow, int hour) {
  if (dow >= 5) return hour >= 9 && hour <= 20 ? 40.0 : 5.0;
  if (hour == 8 || hour == 9) return 150.0;
  if (hour == 17 || hour == 18) return 160.0;
  if (hour >= 7 && hour <= 20) return 60.0;
  return 5.0;
}

double metro_base_in(int dow, int hour) { return metro_base_out(dow, hour == 23 ? 23 : hour); }

std::string station_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "S%03d", i);
  return buf;
}

}  // namespace

void SynthSpec::validate() const {
  if (station_count < 1) throw ConfigError("synth: station_count must be >= 1");
  if (days < 2) throw ConfigError("synth: need at least two days");
  if (base_rate < 0) throw ConfigError("synth: base_rate must be non-negative");
  double wsum = 0;
  for (double w : quarter_weights) {
    if (w < 0) throw ConfigError("synth: quarter weights must be non-negative");
    wsum += w;
  }
  if (std::abs(wsum - 4.0) > 1e-9)
    throw ConfigError("synth: quarter weights must sum to 4 to preserve hourly totals");
  if (zero_inflation < 0.0 || zero_inflation >= 1.0)
    throw ConfigError("synth: zero_inflation must lie in [0, 1)");
  if (r_true <= 0) throw ConfigError("synth: r_true must be positive");
  for (const auto& prof : {&pickup_profile, &dropoff_profile})
    for (const auto& row : *prof)
      for (double v : row)
        if (v < 0) throw ConfigError("synth: profile rates must be non-negative");
}

void SynthSpec::materialize_profiles() {
  if (!pickup_profile.empty() && !dropoff_profile.empty()) return;
  pickup_profile.assign(station_count, std::vector<double>(7 * 24, 0.0));
  dropoff_profile.assign(station_count, std::vector<double>(7 * 24, 0.0));
  for (int st = 0; st < station_count; ++st) {
    const double scale = 0.6 + 0.1 * (st % 11);
    for (int dow = 0; dow < 7; ++dow) {
      for (int hour = 0; hour < 24; ++hour) {
        const double shape = dow >= 5 ? weekend_shape(hour) : weekday_shape(hour);
        pickup_profile[st][dow * 24 + hour] = base_rate * scale * shape;
        // Returns trail rentals by roughly an hour.
        const double lag_shape = dow >= 5 ? weekend_shape((hour + 23) % 24)
                                          : weekday_shape((hour + 23) % 24);
        dropoff_profile[st][dow * 24 + hour] = base_rate * scale * lag_shape;
      }
    }
  }
}

SynthFiles default_files(const std::string& out_dir) {
  SynthFiles f;
  f.trips = out_dir + "/trips.csv";
  f.stations = out_dir + "/stations.csv";
  f.metro = out_dir + "/metro.csv";
  f.metro_stations = out_dir + "/metro_stations.csv";
  f.weather = out_dir + "/weather.csv";
  f.holidays = out_dir + "/holidays.txt";
  f.truth = out_dir + "/truth.csv";
  return f;
}

std::vector<std::int64_t> zinb_sample(double lambda, double r, double pi0, std::size_t n,
                                      std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::int64_t> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const bool zeroed = pi0 > 0.0 && uniform01(rng) < pi0;
    if (zeroed || lambda < 1e-9) continue;
    out[i] = nb::sample_one({lambda, r}, rng);
  }
  return out;
}

GroundTruth generate(SynthSpec spec, const std::string& out_dir, SynthFiles* files_out) {
  if (spec.grid_start == 0) spec.grid_start = default_anchor();
  spec.materialize_profiles();
  spec.validate();
  std::filesystem::create_directories(out_dir);
  const SynthFiles files = default_files(out_dir);
  if (files_out) *files_out = files;

  const TimeGrid qgrid = build_grid(spec.grid_start, 15, spec.days * 96);
  const std::size_t tq = qgrid.length;
  const std::size_t hours = tq / 4;
  const int n = spec.station_count;

  GroundTruth truth;
  truth.qgrid = qgrid;
  truth.r_true = spec.r_true;
  truth.pi0 = spec.zero_inflation;
  for (int st = 0; st < n; ++st) truth.station_ids.push_back(station_name(st));

  // Stations on a ~550 m grid around downtown; every third one sits within
  // ~170 m of a metro station.
  {
    csv::Writer w(files.stations);
    w.raw("station_id,lat,lon,capacity");
    for (int st = 0; st < n; ++st) {
      const double lat = 38.90 + 0.005 * (st / 5);
      const double lon = -77.03 + 0.0065 * (st % 5);
      w.row({station_name(st), csv::fmt(lat), csv::fmt(lon), std::to_string(15 + (st * 7) % 25)});
    }
  }
  std::vector<int> metro_of_station(n, -1);
  int n_metros = 0;
  {
    csv::Writer w(files.metro_stations);
    w.raw("metro_station_id,lat,lon");
    for (int st = 0; st < n; ++st) {
      if (st % 3 != 0) continue;
      const double lat = 38.90 + 0.005 * (st / 5) + 0.0015;
      const double lon = -77.03 + 0.0065 * (st % 5);
      char buf[16];
      std::snprintf(buf, sizeof(buf), "M%03d", n_metros);
      w.row({buf, csv::fmt(lat), csv::fmt(lon)});
      metro_of_station[st] = n_metros++;
    }
  }

  // Hourly weather: diurnal cycle, monthly drift, AR(1) noise, rain episodes
  // and a cold spell over the final two weeks.
  std::vector<double> temp(hours), precip(hours), wind(hours), weather_factor(hours);
  {
    Rng rng(derive_seed(spec.seed, 0x77ea));
    double t_noise = 0.0, w_noise = 0.0;
    bool rain_day = false;
    for (std::size_t h = 0; h < hours; ++h) {
      const std::size_t day = h / 24;
      const int hod = static_cast<int>(h % 24);
      if (hod == 0) rain_day = uniform01(rng) < 0.25;
      t_noise = 0.9 * t_noise + normal01(rng) * 1.0;
      w_noise = 0.8 * w_noise + normal01(rng) * 0.8;
      double snap = 0.0;
      if (spec.days >= 28 && day + 12 >= spec.days)
        snap = -8.0 * std::min(1.0, static_cast<double>(day + 12 - spec.days + 1) / 4.0);
      temp[h] = 14.0 + 7.0 * std::sin(2.0 * M_PI * (hod - 8) / 24.0) +
                4.0 * std::sin(2.0 * M_PI * static_cast<double>(day) / 30.0) + snap + t_noise;
      precip[h] = rain_day && uniform01(rng) < 0.3 ? 1.0 + 5.0 * uniform01(rng) : 0.0;
      wind[h] = 2.0 + std::abs(w_noise);
      double f = std::exp(spec.weather_sens.temp * (temp[h] - 14.0) / 10.0 -
                          spec.weather_sens.precip * std::min(precip[h], 8.0) / 8.0 -
                          spec.weather_sens.wind * (wind[h] - 2.0) / 10.0);
      weather_factor[h] = std::clamp(f, 0.15, 3.0);
    }
    csv::Writer w(files.weather);
    w.raw("hour_start,temperature_c,precip_mm,wind_mps");
    for (std::size_t h = 0; h < hours; ++h)
      w.row({format_timestamp(spec.grid_start + static_cast<Minutes>(h) * 60), csv::fmt(temp[h]),
             csv::fmt(precip[h]), csv::fmt(wind[h])});
  }

  // Metro flows with AR(1) deviation clusters; deviations later multiply into
  // linked stations' demand so the cross-modal signal is learnable.
  std::vector<std::vector<double>> eps_out(n_metros, std::vector<double>(tq, 0.0));
  std::vector<std::vector<double>> eps_in(n_metros, std::vector<double>(tq, 0.0));
  {
    csv::Writer w(files.metro);
    w.raw("interval_start,metro_station_id,check_ins,check_outs");
    for (int m = 0; m < n_metros; ++m) {
      Rng rng(derive_seed(spec.seed, 0x3e7a0, static_cast<std::uint64_t>(m)));
      double eo = 0.0, ei = 0.0;
      char name[16];
      std::snprintf(name, sizeof(name), "M%03d", m);
      for (std::size_t q = 0; q < tq; ++q) {
        eo = 0.85 * eo + normal01(rng) * 10.0;
        ei = 0.85 * ei + normal01(rng) * 10.0;
        eps_out[m][q] = eo;
        eps_in[m][q] = ei;
        const int dow = qgrid.dow_at(q);
        const int hour = qgrid.hour_at(q);
        const double out_flow = std::max(0.0, metro_base_out(dow, hour) / 4.0 + eo);
        const double in_flow = std::max(0.0, metro_base_in(dow, hour) / 4.0 + ei);
        w.row({format_timestamp(qgrid.interval_begin(q)), name,
               std::to_string(static_cast<std::int64_t>(std::llround(in_flow))),
               std::to_string(static_cast<std::int64_t>(std::llround(out_flow)))});
      }
    }
  }

  // Demand: rates from the construction formula, counts from zero-inflated NB
  // draws on per-(station, kind) seeded streams.
  truth.lambda_pickup.assign(n, std::vector<double>(tq, 0.0));
  truth.lambda_dropoff.assign(n, std::vector<double>(tq, 0.0));
  std::vector<std::vector<std::int64_t>> picks(n, std::vector<std::int64_t>(tq, 0));
  std::vector<std::vector<std::int64_t>> drops(n, std::vector<std::int64_t>(tq, 0));
  for (int st = 0; st < n; ++st) {
    Rng rng_p(derive_seed(spec.seed, 0xde4a7d, static_cast<std::uint64_t>(st), 1));
    Rng rng_d(derive_seed(spec.seed, 0xde4a7d, static_cast<std::uint64_t>(st), 2));
    const int metro = metro_of_station[st];
    for (std::size_t q = 0; q < tq; ++q) {
      const std::size_t h = q / 4;
      const int dow = qgrid.dow_at(q);
      const int hour = qgrid.hour_at(q);
      const double wq = spec.quarter_weights[qgrid.quarter_at(q)];
      double mf_p = 1.0, mf_d = 1.0;
      if (metro >= 0 && spec.metro_coupling != 0.0) {
        mf_p = std::exp(spec.metro_coupling * std::tanh(eps_out[metro][q] / 30.0));
        mf_d = std::exp(spec.metro_coupling * std::tanh(eps_in[metro][q] / 30.0));
      }
      const double lam_p =
          spec.pickup_profile[st][dow * 24 + hour] / 4.0 * wq * weather_factor[h] * mf_p;
      const double lam_d =
          spec.dropoff_profile[st][dow * 24 + hour] / 4.0 * wq * weather_factor[h] * mf_d;
      truth.lambda_pickup[st][q] = lam_p;
      truth.lambda_dropoff[st][q] = lam_d;
      const bool zp = spec.zero_inflation > 0.0 && uniform01(rng_p) < spec.zero_inflation;
      const bool zd = spec.zero_inflation > 0.0 && uniform01(rng_d) < spec.zero_inflation;
      if (!zp && lam_p > 1e-9) picks[st][q] = nb::sample_one({lam_p, spec.r_true}, rng_p);
      if (!zd && lam_d > 1e-9) drops[st][q] = nb::sample_one({lam_d, spec.r_true}, rng_d);
    }
  }

  // Each demand event becomes one trip whose opposite endpoint falls outside
  // the grid window, keeping the pickup and drop-off processes independent
  // while the files stay valid against the ingest schema.
  {
    csv::Writer w(files.trips);
    w.raw("start_time,end_time,start_station_id,end_station_id");
    const Minutes grid_end = qgrid.end();
    for (int st = 0; st < n; ++st) {
      const std::string self = station_name(st);
      const std::string other = station_name((st + 1) % n);
      for (std::size_t q = 0; q < tq; ++q) {
        const Minutes begin = qgrid.interval_begin(q);
        for (std::int64_t j = 0; j < picks[st][q]; ++j) {
          const Minutes start = begin + (j * 7) % 15;
          const Minutes end = grid_end + 1 + (j % 360);
          w.row({format_timestamp(start), format_timestamp(end), self, other});
        }
        for (std::int64_t j = 0; j < drops[st][q]; ++j) {
          const Minutes end = begin + (j * 11) % 15;
          const Minutes start = spec.grid_start - 1 - (j % 360);
          w.row({format_timestamp(start), format_timestamp(end), other, self});
        }
      }
    }
  }

  {
    csv::Writer w(files.holidays);
    const std::int64_t day0 = day_of(spec.grid_start);
    w.raw(format_date(day0 + std::min<std::size_t>(28, spec.days / 2)));
    if (spec.days >= 16) w.raw(format_date(day0 + static_cast<std::int64_t>(spec.days) - 8));
  }

  {
    csv::Writer w(files.truth);
    w.raw("station_id,quarter_index,lambda_pickup,lambda_dropoff,r,pi0");
    for (int st = 0; st < n; ++st)
      for (std::size_t q = 0; q < tq; ++q)
        w.row({station_name(st), std::to_string(q), csv::fmt(truth.lambda_pickup[st][q]),
               csv::fmt(truth.lambda_dropoff[st][q]), csv::fmt(spec.r_true),
               csv::fmt(spec.zero_inflation)});
  }

  truth.counts_pickup = std::move(picks);
  truth.counts_dropoff = std::move(drops);
  return truth;
}

}  // namespace tstar::synth
