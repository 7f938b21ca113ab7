#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tstar/timegrid.hpp"

namespace tstar::ingest {

using MetroId = std::string;

struct StationMeta {
  StationId id;
  double lat = 0.0;
  double lon = 0.0;
  int capacity = 1;  // dock count, >= 1
};

struct MetroStation {
  MetroId id;
  double lat = 0.0;
  double lon = 0.0;
};

struct MetroFlowRecord {
  MetroId metro_station;
  std::int64_t interval = 0;  // 15-min index on the service grid
  std::int64_t check_ins = 0;
  std::int64_t check_outs = 0;
};

struct WeatherRecord {
  std::int64_t hour = 0;  // hourly index on the service grid
  double temperature = 0.0;
  double precipitation = 0.0;
  double wind_speed = 0.0;
};

// Which metro stations sit within nu great-circle meters of a bike station.
struct ProximityLink {
  StationId bike_station;
  std::vector<MetroId> metro_stations;  // sorted, may be empty
  double threshold = 0.0;
};

// Every input row either becomes a record or lands in exactly one class here.
struct RejectionReport {
  std::map<std::string, std::size_t> counts;
  std::size_t total_rows = 0;
  std::size_t accepted = 0;

  std::size_t rejected() const;
  void add(const std::string& cls) { ++counts[cls]; }
};

struct TripParse {
  std::vector<TripRecord> trips;
  RejectionReport report;
};

struct MetroParse {
  std::vector<MetroFlowRecord> flows;
  RejectionReport report;
};

struct WeatherParse {
  std::vector<WeatherRecord> hours;  // dense, one record per grid hour
  RejectionReport report;
  std::size_t filled_gaps = 0;
};

struct StationParse {
  std::vector<StationMeta> stations;
  RejectionReport report;
};

// trips.csv: start_time,end_time,start_station_id,end_station_id
TripParse parse_trips(const std::string& path);

// metro.csv: interval_start,metro_station_id,check_ins,check_outs
MetroParse parse_metro(const std::string& path, const TimeGrid& quarter_grid);

// weather.csv: hour_start,temperature_c,precip_mm,wind_mps. Missing hours are
// forward-filled up to max_gap_hours, otherwise a DataError is raised.
WeatherParse parse_weather(const std::string& path, const TimeGrid& hourly_grid,
                           int max_gap_hours = 3);

// stations.csv: station_id,lat,lon,capacity
StationParse parse_stations(const std::string& path);

// metro_stations.csv: metro_station_id,lat,lon
std::vector<MetroStation> parse_metro_stations(const std::string& path);

// holidays.txt: one ISO date per line.
std::set<std::int64_t> load_holidays(const std::string& path);

double haversine_meters(double lat1, double lon1, double lat2, double lon2);

std::vector<ProximityLink> link_metro_stations(const std::vector<StationMeta>& bikes,
                                               const std::vector<MetroStation>& metros,
                                               double nu_meters);

}  // namespace tstar::ingest
