#include "tstar/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "tstar/csv.hpp"
#include "tstar/errors.hpp"

namespace tstar::ingest {

namespace {

constexpr double kEarthRadiusM = 6371000.0;
constexpr double kDegToRad = 0.017453292519943295;

csv::Reader open_checked(const std::string& path, const std::vector<std::string>& required) {
  csv::Reader reader(path);
  if (!reader.ok()) throw DataError("cannot open " + path);
  for (const auto& col : required)
    if (reader.column(col) < 0) throw DataError(path + ": missing required column '" + col + "'");
  return reader;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

bool parse_count(const std::string& s, std::int64_t& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtoll(s.c_str(), &end, 10);
  return end == s.c_str() + s.size();
}

}  // namespace

std::size_t RejectionReport::rejected() const {
  std::size_t n = 0;
  for (const auto& [cls, count] : counts) n += count;
  return n;
}

TripParse parse_trips(const std::string& path) {
  auto reader =
      open_checked(path, {"start_time", "end_time", "start_station_id", "end_station_id"});
  const int c_start = reader.column("start_time");
  const int c_end = reader.column("end_time");
  const int c_orig = reader.column("start_station_id");
  const int c_dest = reader.column("end_station_id");
  const std::size_t width = reader.header().size();

  TripParse out;
  std::vector<std::string> f;
  while (reader.next(f)) {
    ++out.report.total_rows;
    if (f.size() != width) {
      out.report.add("field_count");
      continue;
    }
    TripRecord trip;
    if (!parse_timestamp(f[c_start], trip.start_time) ||
        !parse_timestamp(f[c_end], trip.end_time)) {
      out.report.add("bad_timestamp");
      continue;
    }
    if (f[c_orig].empty() || f[c_dest].empty()) {
      out.report.add("missing_station");
      continue;
    }
    if (trip.end_time < trip.start_time) {
      out.report.add("negative_duration");
      continue;
    }
    trip.origin = f[c_orig];
    trip.destination = f[c_dest];
    out.trips.push_back(std::move(trip));
    ++out.report.accepted;
  }
  return out;
}

MetroParse parse_metro(const std::string& path, const TimeGrid& quarter_grid) {
  auto reader = open_checked(path, {"interval_start", "metro_station_id", "check_ins", "check_outs"});
  const int c_ts = reader.column("interval_start");
  const int c_id = reader.column("metro_station_id");
  const int c_in = reader.column("check_ins");
  const int c_out = reader.column("check_outs");

  MetroParse out;
  std::vector<std::string> f;
  while (reader.next(f)) {
    ++out.report.total_rows;
    Minutes ts = 0;
    if (f.size() <= static_cast<std::size_t>(std::max({c_ts, c_id, c_in, c_out})) ||
        !parse_timestamp(f[c_ts], ts)) {
      out.report.add("bad_timestamp");
      continue;
    }
    MetroFlowRecord rec;
    rec.interval = quarter_grid.index_of(ts);
    if (rec.interval < 0) {
      out.report.add("outside_grid");
      continue;
    }
    if (!parse_count(f[c_in], rec.check_ins) || !parse_count(f[c_out], rec.check_outs) ||
        rec.check_ins < 0 || rec.check_outs < 0) {
      out.report.add("bad_count");
      continue;
    }
    rec.metro_station = f[c_id];
    out.flows.push_back(std::move(rec));
    ++out.report.accepted;
  }
  return out;
}

WeatherParse parse_weather(const std::string& path, const TimeGrid& hourly_grid,
                           int max_gap_hours) {
  auto reader = open_checked(path, {"hour_start", "temperature_c", "precip_mm", "wind_mps"});
  const int c_ts = reader.column("hour_start");
  const int c_t = reader.column("temperature_c");
  const int c_p = reader.column("precip_mm");
  const int c_w = reader.column("wind_mps");

  std::vector<bool> seen(hourly_grid.length, false);
  WeatherParse out;
  out.hours.resize(hourly_grid.length);
  std::vector<std::string> f;
  while (reader.next(f)) {
    ++out.report.total_rows;
    Minutes ts = 0;
    if (!parse_timestamp(f[c_ts], ts)) {
      out.report.add("bad_timestamp");
      continue;
    }
    const std::int64_t h = hourly_grid.index_of(ts);
    if (h < 0) {
      out.report.add("outside_grid");
      continue;
    }
    WeatherRecord rec;
    rec.hour = h;
    if (!parse_double(f[c_t], rec.temperature) || !parse_double(f[c_p], rec.precipitation) ||
        !parse_double(f[c_w], rec.wind_speed) || rec.precipitation < 0 || rec.wind_speed < 0) {
      out.report.add("bad_value");
      continue;
    }
    out.hours[static_cast<std::size_t>(h)] = rec;
    seen[static_cast<std::size_t>(h)] = true;
    ++out.report.accepted;
  }

  if (!seen.empty() && !seen[0]) throw DataError(path + ": no weather record for the first hour");
  int gap = 0;
  for (std::size_t h = 1; h < seen.size(); ++h) {
    if (seen[h]) {
      gap = 0;
      continue;
    }
    if (++gap > max_gap_hours)
      throw DataError(path + ": weather gap exceeds " + std::to_string(max_gap_hours) +
                      " hours at hour index " + std::to_string(h));
    out.hours[h] = out.hours[h - 1];
    out.hours[h].hour = static_cast<std::int64_t>(h);
    ++out.filled_gaps;
  }
  return out;
}

StationParse parse_stations(const std::string& path) {
  auto reader = open_checked(path, {"station_id", "lat", "lon", "capacity"});
  const int c_id = reader.column("station_id");
  const int c_lat = reader.column("lat");
  const int c_lon = reader.column("lon");
  const int c_cap = reader.column("capacity");

  StationParse out;
  std::vector<std::string> f;
  while (reader.next(f)) {
    ++out.report.total_rows;
    StationMeta meta;
    std::int64_t cap = 0;
    if (f[c_id].empty()) {
      out.report.add("missing_id");
      continue;
    }
    if (!parse_double(f[c_lat], meta.lat) || !parse_double(f[c_lon], meta.lon) ||
        meta.lat < -90 || meta.lat > 90 || meta.lon < -180 || meta.lon > 180) {
      out.report.add("bad_location");
      continue;
    }
    if (!parse_count(f[c_cap], cap) || cap < 1) {
      out.report.add("bad_capacity");
      continue;
    }
    meta.id = f[c_id];
    meta.capacity = static_cast<int>(cap);
    out.stations.push_back(std::move(meta));
    ++out.report.accepted;
  }
  return out;
}

std::vector<MetroStation> parse_metro_stations(const std::string& path) {
  auto reader = open_checked(path, {"metro_station_id", "lat", "lon"});
  const int c_id = reader.column("metro_station_id");
  const int c_lat = reader.column("lat");
  const int c_lon = reader.column("lon");
  std::vector<MetroStation> out;
  std::vector<std::string> f;
  while (reader.next(f)) {
    MetroStation m;
    if (f[c_id].empty() || !parse_double(f[c_lat], m.lat) || !parse_double(f[c_lon], m.lon))
      throw DataError(path + ": malformed metro station row " + std::to_string(out.size() + 2));
    m.id = f[c_id];
    out.push_back(std::move(m));
  }
  return out;
}

std::set<std::int64_t> load_holidays(const std::string& path) {
  std::ifstream in(path);
  if (!in.is_open()) throw DataError("cannot open " + path);
  std::set<std::int64_t> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::int64_t day = 0;
    if (!parse_date(line, day)) throw DataError(path + ": bad date '" + line + "'");
    out.insert(day);
  }
  return out;
}

double haversine_meters(double lat1, double lon1, double lat2, double lon2) {
  const double phi1 = lat1 * kDegToRad;
  const double phi2 = lat2 * kDegToRad;
  const double dphi = (lat2 - lat1) * kDegToRad;
  const double dlam = (lon2 - lon1) * kDegToRad;
  const double a = std::sin(dphi / 2) * std::sin(dphi / 2) +
                   std::cos(phi1) * std::cos(phi2) * std::sin(dlam / 2) * std::sin(dlam / 2);
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(a)));
}

std::vector<ProximityLink> link_metro_stations(const std::vector<StationMeta>& bikes,
                                               const std::vector<MetroStation>& metros,
                                               double nu_meters) {
  if (nu_meters <= 0) throw ConfigError("link_metro_stations: threshold must be positive");
  std::vector<ProximityLink> out;
  out.reserve(bikes.size());
  for (const StationMeta& bike : bikes) {
    ProximityLink link;
    link.bike_station = bike.id;
    link.threshold = nu_meters;
    for (const MetroStation& metro : metros)
      if (haversine_meters(bike.lat, bike.lon, metro.lat, metro.lon) <= nu_meters)
        link.metro_stations.push_back(metro.id);
    std::sort(link.metro_stations.begin(), link.metro_stations.end());
    out.push_back(std::move(link));
  }
  return out;
}

}  // namespace tstar::ingest
