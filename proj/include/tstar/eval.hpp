#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tstar/timegrid.hpp"

namespace tstar::eval {

double mae(std::span<const double> actuals, std::span<const double> points);
double rmse(std::span<const double> actuals, std::span<const double> points);

// Empirical-CDF CRPS: (1/N) sum |x_i - y| - (1/(2N^2)) sum_ij |x_i - x_j|,
// computed via the sorted O(N log N) form of the pairwise term.
double crps_empirical(std::span<const double> samples, double y);

// (u - l) + (2/alpha)(l - y) 1[y < l] + (2/alpha)(y - u) 1[y > u]
double interval_score(double lo, double hi, double y, double alpha = 0.1);

struct ScoreRow {
  std::string station;
  std::int64_t interval = 0;
  double actual = 0.0;
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double abs_err = 0.0;
  double sq_err = 0.0;
  double crps = 0.0;
  double is = 0.0;
};

ScoreRow score_row(const std::string& station, std::int64_t interval, double actual, double point,
                   double lo, double hi, std::span<const double> samples, double alpha = 0.1);

struct MetricSummary {
  double mae = 0.0;
  double rmse = 0.0;
  double mcrps = 0.0;
  double mis = 0.0;
  std::size_t n = 0;
};

MetricSummary summarize(std::span<const ScoreRow> rows);

// Station/quarter flags for demand z-scores >= threshold, where mean and std
// come from the training split only.
struct AbnormalMask {
  double threshold = 3.0;
  std::map<std::string, std::vector<std::uint8_t>> flags;

  bool flagged(const std::string& station, std::int64_t interval) const;
};

AbnormalMask build_abnormal_mask(std::span<const DemandSeries> series, std::size_t train_end,
                                 double threshold = 3.0);

struct ScoreReport {
  MetricSummary overall;
  std::vector<std::pair<std::string, MetricSummary>> per_station;      // sorted by id
  std::vector<std::pair<std::int64_t, MetricSummary>> per_timestep;    // sorted by interval
  MetricSummary normal;
  MetricSummary abnormal;
};

ScoreReport build_report(std::span<const ScoreRow> rows, const AbnormalMask* mask = nullptr);

// Appendix-style backtesting folds over interval indices. Validation always
// starts exactly at the training boundary.
struct Fold {
  std::size_t train_begin = 0;
  std::size_t train_end = 0;
  std::size_t val_begin = 0;
  std::size_t val_end = 0;
};

struct RollingSpec {
  std::size_t intervals_per_week = 0;
  std::size_t initial_train_weeks = 4;
  std::size_t val_weeks = 2;
  std::size_t expand_weeks = 2;
  std::size_t max_folds = 0;  // 0 = as many as fit
};

struct SlidingSpec {
  std::size_t intervals_per_week = 0;
  std::size_t window_weeks = 8;
  std::size_t val_weeks = 2;
  std::size_t step_weeks = 1;
  std::size_t max_folds = 0;
};

std::vector<Fold> make_rolling_folds(std::size_t total_intervals, const RollingSpec& spec);
std::vector<Fold> make_sliding_folds(std::size_t total_intervals, const SlidingSpec& spec);

// Returns scored validation rows for one fold; the harness enforces that
// every row lies inside the fold's validation range.
using FoldRunner = std::function<std::vector<ScoreRow>(const Fold&, std::uint64_t seed)>;

std::vector<ScoreReport> rolling_origin_cv(const FoldRunner& runner, std::size_t total_intervals,
                                           const RollingSpec& spec, std::uint64_t base_seed,
                                           const AbnormalMask* mask = nullptr);
std::vector<ScoreReport> sliding_window_cv(const FoldRunner& runner, std::size_t total_intervals,
                                           const SlidingSpec& spec, std::uint64_t base_seed,
                                           const AbnormalMask* mask = nullptr);
std::vector<ScoreReport> run_folds(std::span<const Fold> folds, const FoldRunner& runner,
                                   std::uint64_t base_seed, const AbnormalMask* mask = nullptr);

void write_report_csv(const std::string& path, std::span<const ScoreRow> rows);
void write_summary_csv(const std::string& path, const ScoreReport& report);
void write_temporal_csv(const std::string& path, const ScoreReport& report);

}  // namespace tstar::eval
