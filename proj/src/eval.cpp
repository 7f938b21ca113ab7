#include "tstar/eval.hpp"

#include <algorithm>
#include <cmath>

#include "tstar/csv.hpp"
#include "tstar/errors.hpp"

namespace tstar::eval {

double mae(std::span<const double> actuals, std::span<const double> points) {
  if (actuals.size() != points.size() || actuals.empty())
    throw ConfigError("mae: mismatched or empty inputs");
  double sum = 0.0;
  for (std::size_t i = 0; i < actuals.size(); ++i) sum += std::abs(actuals[i] - points[i]);
  return sum / static_cast<double>(actuals.size());
}

double rmse(std::span<const double> actuals, std::span<const double> points) {
  if (actuals.size() != points.size() || actuals.empty())
    throw ConfigError("rmse: mismatched or empty inputs");
  double sum = 0.0;
  for (std::size_t i = 0; i < actuals.size(); ++i) {
    const double d = actuals[i] - points[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(actuals.size()));
}

double crps_empirical(std::span<const double> samples, double y) {
  if (samples.empty()) throw ConfigError("crps_empirical: empty sample set");
  const double n = static_cast<double>(samples.size());
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  double term1 = 0.0;
  for (double x : sorted) term1 += std::abs(x - y);
  term1 /= n;
  // sum_ij |x_i - x_j| = 2 * sum_i x_(i) * (2i - N + 1) over the sorted order.
  double pair_sum = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i)
    pair_sum += sorted[i] * (2.0 * static_cast<double>(i) - n + 1.0);
  return term1 - pair_sum / (n * n);
}

double interval_score(double lo, double hi, double y, double alpha) {
  if (lo > hi) throw ConfigError("interval_score: lower bound exceeds upper bound");
  if (alpha <= 0.0 || alpha >= 1.0) throw ConfigError("interval_score: alpha must be in (0,1)");
  double score = hi - lo;
  if (y < lo) score += 2.0 / alpha * (lo - y);
  if (y > hi) score += 2.0 / alpha * (y - hi);
  return score;
}

ScoreRow score_row(const std::string& station, std::int64_t interval, double actual, double point,
                   double lo, double hi, std::span<const double> samples, double alpha) {
  ScoreRow row;
  row.station = station;
  row.interval = interval;
  row.actual = actual;
  row.point = point;
  row.lo = lo;
  row.hi = hi;
  row.abs_err = std::abs(actual - point);
  row.sq_err = (actual - point) * (actual - point);
  row.crps = crps_empirical(samples, actual);
  row.is = interval_score(lo, hi, actual, alpha);
  return row;
}

MetricSummary summarize(std::span<const ScoreRow> rows) {
  MetricSummary s;
  s.n = rows.size();
  if (rows.empty()) return s;
  double se = 0.0;
  for (const ScoreRow& r : rows) {
    s.mae += r.abs_err;
    se += r.sq_err;
    s.mcrps += r.crps;
    s.mis += r.is;
  }
  const double n = static_cast<double>(s.n);
  s.mae /= n;
  s.rmse = std::sqrt(se / n);
  s.mcrps /= n;
  s.mis /= n;
  return s;
}

bool AbnormalMask::flagged(const std::string& station, std::int64_t interval) const {
  auto it = flags.find(station);
  if (it == flags.end()) return false;
  if (interval < 0 || interval >= static_cast<std::int64_t>(it->second.size())) return false;
  return it->second[interval] != 0;
}

AbnormalMask build_abnormal_mask(std::span<const DemandSeries> series, std::size_t train_end,
                                 double threshold) {
  AbnormalMask mask;
  mask.threshold = threshold;
  for (const DemandSeries& s : series) {
    if (train_end == 0 || train_end > s.values.size())
      throw ConfigError("abnormal mask: invalid training range");
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t t = 0; t < train_end; ++t) {
      sum += static_cast<double>(s.values[t]);
      sum_sq += static_cast<double>(s.values[t]) * static_cast<double>(s.values[t]);
    }
    const double mean = sum / static_cast<double>(train_end);
    const double var = std::max(0.0, sum_sq / static_cast<double>(train_end) - mean * mean);
    const double sd = std::sqrt(var);
    std::vector<std::uint8_t> f(s.values.size(), 0);
    for (std::size_t t = 0; t < s.values.size(); ++t) {
      const double y = static_cast<double>(s.values[t]);
      // Degenerate training history: any exceedance of the mean is abnormal.
      const bool hit = sd > 1e-12 ? (y - mean) / sd >= threshold : y > mean;
      f[t] = hit ? 1 : 0;
    }
    mask.flags[s.station] = std::move(f);
  }
  return mask;
}

ScoreReport build_report(std::span<const ScoreRow> rows, const AbnormalMask* mask) {
  ScoreReport report;
  report.overall = summarize(rows);

  std::map<std::string, std::vector<ScoreRow>> by_station;
  std::map<std::int64_t, std::vector<ScoreRow>> by_interval;
  std::vector<ScoreRow> normal, abnormal;
  for (const ScoreRow& r : rows) {
    by_station[r.station].push_back(r);
    by_interval[r.interval].push_back(r);
    if (mask && mask->flagged(r.station, r.interval))
      abnormal.push_back(r);
    else
      normal.push_back(r);
  }
  for (const auto& [station, sr] : by_station)
    report.per_station.emplace_back(station, summarize(sr));
  for (const auto& [interval, ir] : by_interval)
    report.per_timestep.emplace_back(interval, summarize(ir));
  report.normal = summarize(normal);
  report.abnormal = summarize(abnormal);
  return report;
}

std::vector<Fold> make_rolling_folds(std::size_t total_intervals, const RollingSpec& spec) {
  if (spec.intervals_per_week == 0) throw ConfigError("rolling folds: intervals_per_week not set");
  if (spec.initial_train_weeks == 0 || spec.val_weeks == 0 || spec.expand_weeks == 0)
    throw ConfigError("rolling folds: week counts must be positive");
  const std::size_t w = spec.intervals_per_week;
  std::vector<Fold> folds;
  for (std::size_t train_weeks = spec.initial_train_weeks;; train_weeks += spec.expand_weeks) {
    const std::size_t train_end = train_weeks * w;
    const std::size_t val_end = train_end + spec.val_weeks * w;
    if (val_end > total_intervals) break;
    folds.push_back(Fold{0, train_end, train_end, val_end});
    if (spec.max_folds > 0 && folds.size() == spec.max_folds) break;
  }
  if (folds.empty())
    throw ConfigError("rolling folds: data shorter than the first train+validation window");
  return folds;
}

std::vector<Fold> make_sliding_folds(std::size_t total_intervals, const SlidingSpec& spec) {
  if (spec.intervals_per_week == 0) throw ConfigError("sliding folds: intervals_per_week not set");
  if (spec.window_weeks == 0 || spec.val_weeks == 0 || spec.step_weeks == 0)
    throw ConfigError("sliding folds: week counts must be positive");
  const std::size_t w = spec.intervals_per_week;
  std::vector<Fold> folds;
  for (std::size_t start_week = 0;; start_week += spec.step_weeks) {
    const std::size_t train_begin = start_week * w;
    const std::size_t train_end = train_begin + spec.window_weeks * w;
    const std::size_t val_end = train_end + spec.val_weeks * w;
    if (val_end > total_intervals) break;
    folds.push_back(Fold{train_begin, train_end, train_end, val_end});
    if (spec.max_folds > 0 && folds.size() == spec.max_folds) break;
  }
  if (folds.empty())
    throw ConfigError("sliding folds: training window longer than the available data");
  return folds;
}

std::vector<ScoreReport> run_folds(std::span<const Fold> folds, const FoldRunner& runner,
                                   std::uint64_t base_seed, const AbnormalMask* mask) {
  std::vector<ScoreReport> reports;
  reports.reserve(folds.size());
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const Fold& fold = folds[f];
    std::vector<ScoreRow> rows = runner(fold, base_seed + f);
    for (const ScoreRow& r : rows) {
      if (r.interval < static_cast<std::int64_t>(fold.val_begin) ||
          r.interval >= static_cast<std::int64_t>(fold.val_end))
        throw ConfigError("cv harness: scored interval " + std::to_string(r.interval) +
                          " escapes the fold validation range");
    }
    reports.push_back(build_report(rows, mask));
  }
  return reports;
}

std::vector<ScoreReport> rolling_origin_cv(const FoldRunner& runner, std::size_t total_intervals,
                                           const RollingSpec& spec, std::uint64_t base_seed,
                                           const AbnormalMask* mask) {
  return run_folds(make_rolling_folds(total_intervals, spec), runner, base_seed, mask);
}

std::vector<ScoreReport> sliding_window_cv(const FoldRunner& runner, std::size_t total_intervals,
                                           const SlidingSpec& spec, std::uint64_t base_seed,
                                           const AbnormalMask* mask) {
  return run_folds(make_sliding_folds(total_intervals, spec), runner, base_seed, mask);
}

void write_report_csv(const std::string& path, std::span<const ScoreRow> rows) {
  csv::Writer w(path);
  if (!w.ok()) throw DataError("cannot write " + path);
  w.raw("station_id,interval,actual,point,p05,p95,abs_err,sq_err,crps,is");
  for (const ScoreRow& r : rows)
    w.row({r.station, std::to_string(r.interval), csv::fmt(r.actual), csv::fmt(r.point),
           csv::fmt(r.lo), csv::fmt(r.hi), csv::fmt(r.abs_err), csv::fmt(r.sq_err),
           csv::fmt(r.crps), csv::fmt(r.is)});
}

namespace {

void summary_row(csv::Writer& w, const std::string& section, const std::string& key,
                 const MetricSummary& s) {
  w.row({section, key, csv::fmt(s.mae), csv::fmt(s.rmse), csv::fmt(s.mcrps), csv::fmt(s.mis),
         std::to_string(s.n)});
}

}  // namespace

void write_summary_csv(const std::string& path, const ScoreReport& report) {
  csv::Writer w(path);
  if (!w.ok()) throw DataError("cannot write " + path);
  w.raw("section,key,mae,rmse,mcrps,mis,n");
  summary_row(w, "overall", "", report.overall);
  summary_row(w, "regime", "normal", report.normal);
  summary_row(w, "regime", "abnormal", report.abnormal);
  for (const auto& [station, s] : report.per_station) summary_row(w, "station", station, s);
}

void write_temporal_csv(const std::string& path, const ScoreReport& report) {
  csv::Writer w(path);
  if (!w.ok()) throw DataError("cannot write " + path);
  w.raw("interval,mae,rmse,mcrps,mis,n");
  for (const auto& [interval, s] : report.per_timestep)
    w.row({std::to_string(interval), csv::fmt(s.mae), csv::fmt(s.rmse), csv::fmt(s.mcrps),
           csv::fmt(s.mis), std::to_string(s.n)});
}

}  // namespace tstar::eval
