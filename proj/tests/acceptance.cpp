// Acceptance suite: runs every release criterion at its stated tolerance and
// prints one pass/fail line per criterion. The tstar CLI path is expected as
// argv[1] for the end-to-end determinism check.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "tstar/config.hpp"
#include "tstar/errors.hpp"
#include "tstar/eval.hpp"
#include "tstar/nbdist.hpp"
#include "tstar/pipeline.hpp"
#include "tstar/synth.hpp"
#include "tstar/transformer.hpp"

using namespace tstar;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --------------------------------------------------------------------------
// Criterion 1: metric oracles

double crps_by_integration(std::vector<double> samples, double y) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  auto cdf = [&](double x) {
    return static_cast<double>(std::upper_bound(samples.begin(), samples.end(), x) -
                               samples.begin()) /
           n;
  };
  std::vector<double> grid = samples;
  grid.push_back(y);
  std::sort(grid.begin(), grid.end());
  double total = 0.0;
  double prev = grid.front() - 1.0;
  grid.push_back(grid.back() + 1.0);
  for (double knot : grid) {
    if (knot > prev) {
      const double mid = (prev + knot) / 2;
      const double f = cdf(mid) - (mid >= y ? 1.0 : 0.0);
      total += f * f * (knot - prev);
    }
    prev = knot;
  }
  return total;
}

Outcome criterion_metric_oracles() {
  Outcome out;
  Rng rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 20;
    std::vector<double> samples(n);
    for (double& s : samples) s = static_cast<double>(rng() % 15) + 0.25 * (rng() % 4);
    const double y = static_cast<double>(rng() % 15);
    const double got = eval::crps_empirical(samples, y);
    const double want = crps_by_integration(samples, y);
    worst = std::max(worst, std::abs(got - want));
  }
  out.require(worst <= 1e-9, "crps deviates from CDF integration by " + fmt2(worst));
  out.note("crps max deviation " + fmt2(worst));

  out.require(eval::interval_score(0, 2, 1) == 2.0, "IS inside-interval example");
  out.require(eval::interval_score(0, 2, 3, 0.1) == 22.0, "IS above-interval example");
  out.require(eval::interval_score(1, 1, 1) == 0.0, "IS zero-width example");

  // Four-row spreadsheet fixture: errors 1, 2, 0, 2.
  const std::vector<double> actual = {2, 0, 5, 1};
  const std::vector<double> point = {1, 2, 5, 3};
  out.require(eval::mae(actual, point) == 1.25, "MAE fixture");
  out.require(eval::rmse(actual, point) == 1.5, "RMSE fixture");
  return out;
}

// --------------------------------------------------------------------------
// Criterion 2: negative binomial correctness

Outcome criterion_nb() {
  Outcome out;
  Rng rng(202);
  double worst_mass = 1.0;
  for (int trial = 0; trial < 50; ++trial) {
    nb::NegBinParams p{0.05 + 20.0 * uniform01(rng), 0.2 + 8.0 * uniform01(rng)};
    const std::int64_t bound = nb::support_bound(p, 1e-10);
    double total = 0.0;
    for (std::int64_t k = 0; k <= bound; ++k) total += nb::pmf(p, k);
    worst_mass = std::min(worst_mass, total);
  }
  out.require(worst_mass >= 1.0 - 1e-9, "pmf mass " + fmt2(worst_mass));
  out.note("min pmf mass 1 - " + fmt2(1.0 - worst_mass));

  const std::size_t n = 1000000;
  int pair_idx = 0;
  for (auto [mu, r] : {std::pair{0.4, 0.5}, {1.0, 1.0}, {2.0, 4.0}, {6.0, 2.0}, {15.0, 8.0}}) {
    nb::NegBinParams p{mu, r};
    auto draws = nb::sample(p, n, 777 + pair_idx++);
    std::vector<double> freq(256, 0.0);
    double mean = 0.0;
    for (auto d : draws) {
      mean += static_cast<double>(d);
      if (d < 256) freq[d] += 1.0 / static_cast<double>(n);
    }
    mean /= static_cast<double>(n);
    for (std::int64_t k = 0; k < 64; ++k) {
      const double expected = nb::pmf(p, k);
      if (expected < 1e-6) continue;
      const double tol = 5.0 * std::sqrt(expected * (1.0 - expected) / n) + 1e-6;
      out.require(std::abs(freq[k] - expected) <= tol,
                  "sampler frequency off at mu=" + fmt2(mu) + " k=" + std::to_string(k));
    }
    out.require(std::abs(mean - mu) <= 0.01 * std::max(1.0, mu),
                "sample mean " + fmt2(mean) + " vs " + fmt2(mu));
  }

  auto [m, v] = nb::moments({2.0, 4.0});
  out.require(m == 2.0 && v == 3.0, "moments (2, 4)");
  auto [m2, v2] = nb::moments({0.5, 0.5});
  out.require(m2 == 0.5 && v2 == 1.0, "moments (0.5, 0.5)");
  return out;
}

// --------------------------------------------------------------------------
// Criterion 3: gradient check

Outcome criterion_gradient_check() {
  Outcome out;
  nn::EmbedConfig cfg;
  cfg.station_count = 4;
  cfg.station_embed_dim = 6;
  cfg.global_channels = 12;
  cfg.global_embed_dim = 8;
  cfg.local_dim = 3;
  cfg.model_dim = 32;
  cfg.n_heads = 4;
  cfg.lookback = 12;

  std::vector<nn::Window> batch;
  Rng rng(303);
  for (std::size_t i = 0; i < 12; ++i) {
    nn::Window w;
    w.station = static_cast<int>(i % cfg.station_count);
    w.target_index = static_cast<std::int64_t>(i);
    w.target = static_cast<double>(rng() % 7);
    w.y_in = nn::Tensor(cfg.lookback, 1);
    w.globals = nn::Tensor(cfg.lookback, cfg.global_channels);
    w.locals = nn::Tensor(cfg.lookback, cfg.local_dim);
    for (double& v : w.y_in.data) v = normal01(rng);
    for (double& v : w.globals.data) v = normal01(rng);
    for (double& v : w.locals.data) v = normal01(rng);
    batch.push_back(std::move(w));
  }

  nn::TstModel model(cfg, 2, 404);
  auto rand_report = model.gradient_check(batch, 1e-3, 64, 9);
  out.require(rand_report.pass && rand_report.n_checked >= 50,
              "random model worst " + fmt2(rand_report.max_rel_err) + " at " +
                  rand_report.worst_param);
  out.note("random model max rel err " + fmt2(rand_report.max_rel_err));

  nn::TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 6;
  tc.learning_rate = 1e-3;
  tc.dropout = 0.1;
  tc.encoder_blocks = 2;
  tc.hidden_size = cfg.model_dim;
  tc.seed = 5;
  model.train(batch, tc);
  auto trained_report = model.gradient_check(batch, 1e-3, 64, 21);
  out.require(trained_report.pass, "trained model worst " + fmt2(trained_report.max_rel_err) +
                                       " at " + trained_report.worst_param);
  out.note("trained model max rel err " + fmt2(trained_report.max_rel_err));

  auto corrupted = model.gradient_check(batch, 1e-3, 64, 9, [](std::vector<nn::Tensor>& g) {
    for (auto& t : g)
      for (double& v : t.data) v += 0.5;
  });
  out.require(!corrupted.pass, "corrupted gradients were not caught");
  return out;
}

// --------------------------------------------------------------------------
// Shared synthetic benchmark fixture (criteria 4 and 6-8)

struct Benchmark {
  std::string dir = "/tmp/tstar_acceptance_bench";
  synth::SynthSpec spec;
  synth::GroundTruth truth;
  pipeline::Dataset ds;

  Benchmark() {
    spec.station_count = 20;
    spec.days = 120;
    spec.seed = 424242;
    spec.base_rate = 8.0;
    spec.quarter_weights = {2.0, 1.2, 0.6, 0.2};
    spec.metro_coupling = 0.6;
    spec.r_true = 4.0;
    spec.zero_inflation = 0.1;
    synth::SynthFiles files;
    truth = synth::generate(spec, dir, &files);
    pipeline::DataPaths paths{files.trips, files.stations, files.weather,
                              files.holidays, files.metro, files.metro_stations};
    ds = pipeline::build_dataset(paths, truth.qgrid.start, spec.days,
                                 SplitSpec{96 * 96, 120 * 96}, 300.0);
  }
};

pipeline::PipelineConfig benchmark_config() {
  pipeline::PipelineConfig cfg;
  cfg.seed = 20240917;
  cfg.n_samples = 100;
  cfg.station_embed_dim = 8;
  cfg.global_embed_dim = 16;
  cfg.stage1_train.epochs = 6;
  cfg.stage1_train.batch_size = 256;
  cfg.stage1_train.hidden_size = 32;
  cfg.stage1_train.encoder_blocks = 1;
  cfg.stage1_train.dropout = 0.1;
  cfg.stage1_train.learning_rate = 1e-3;
  cfg.stage1_train.max_windows_per_epoch = 8000;
  cfg.stage2_train.epochs = 8;
  cfg.stage2_train.batch_size = 256;
  cfg.stage2_train.hidden_size = 32;
  cfg.stage2_train.encoder_blocks = 2;
  cfg.stage2_train.dropout = 0.1;
  cfg.stage2_train.learning_rate = 1e-3;
  cfg.stage2_train.max_windows_per_epoch = 12000;
  return cfg;
}

// --------------------------------------------------------------------------
// Criterion 4: variation-signal exactness

Outcome criterion_signal_exactness(const Benchmark& bench) {
  Outcome out;
  const pipeline::Dataset& ds = bench.ds;
  pipeline::Stage1Archive arch_p, arch_d;
  arch_p.kind = DemandKind::pickup;
  arch_d.kind = DemandKind::dropoff;
  Rng rng(505);
  arch_p.entries.assign(ds.stations.size(),
                        std::vector<pipeline::ArchiveEntry>(ds.hgrid.length,
                                                            pipeline::ArchiveEntry{}));
  arch_d.entries = arch_p.entries;
  for (std::size_t st = 0; st < ds.stations.size(); ++st)
    for (std::size_t h = 24; h < ds.hgrid.length; ++h) {
      arch_p.entries[st][h] = {0.5 + 10.0 * uniform01(rng), 1.0, 1.0, true};
      arch_d.entries[st][h] = {0.5 + 10.0 * uniform01(rng), 1.0, 1.0, true};
    }
  auto signals = pipeline::variation_signals(ds, arch_p, arch_d);

  double worst = 0.0;
  for (std::size_t st = 0; st < ds.stations.size(); ++st) {
    for (std::size_t h = 24; h < ds.hgrid.length; ++h) {
      double sum = 0.0;
      for (int j = 0; j < 4; ++j) sum += signals.delta_pickup[st][4 * h + j];
      const double expected =
          static_cast<double>(ds.pickup_h[st].values[h]) - arch_p.entries[st][h].mu;
      worst = std::max(worst, std::abs(sum - expected));
    }
  }
  out.require(worst <= 1e-12, "telescoping residual " + fmt2(worst));
  out.note("max telescoping residual " + fmt2(worst));

  // Fixture: mu = 4, y = 3 -> delta = 2.
  pipeline::Dataset fixture;
  fixture.qgrid = build_grid(ds.qgrid.start, 15, 8);
  fixture.hgrid = hourly_counterpart(fixture.qgrid);
  fixture.stations = {{"F", 38.9, -77.0, 10}};
  DemandSeries yp{"F", fixture.qgrid, DemandKind::pickup, {0, 0, 0, 0, 3, 1, 1, 1}};
  fixture.pickup_q = {yp};
  fixture.dropoff_q = {yp};
  fixture.pickup_h = {downsample_to_hourly(yp)};
  fixture.dropoff_h = fixture.pickup_h;
  pipeline::Stage1Archive fp, fd;
  fp.kind = DemandKind::pickup;
  fd.kind = DemandKind::dropoff;
  fp.entries = {{pipeline::ArchiveEntry{0, 0, 0, false}, pipeline::ArchiveEntry{4.0, 1, 1, true}}};
  fd.entries = fp.entries;
  auto fsig = pipeline::variation_signals(fixture, fp, fd);
  out.require(fsig.delta_pickup[0][4] == 2.0, "fixture delta " + fmt2(fsig.delta_pickup[0][4]));
  return out;
}

// --------------------------------------------------------------------------
// Criterion 5: causality / leakage suite

Outcome criterion_causality() {
  Outcome out;

  // Small trained pipeline; perturb strictly-future inputs, demand the same bits.
  synth::SynthSpec spec;
  spec.station_count = 3;
  spec.days = 14;
  spec.seed = 606;
  const std::string dir = "/tmp/tstar_acceptance_causal";
  synth::SynthFiles files;
  auto truth = synth::generate(spec, dir, &files);
  pipeline::DataPaths paths{files.trips, files.stations, files.weather,
                            files.holidays, files.metro, files.metro_stations};
  auto ds = pipeline::build_dataset(paths, truth.qgrid.start, spec.days,
                                    SplitSpec{10 * 96, 14 * 96}, 300.0);
  pipeline::PipelineConfig cfg;
  cfg.seed = 9;
  cfg.n_samples = 50;
  cfg.stage1_train.epochs = 1;
  cfg.stage1_train.hidden_size = 16;
  cfg.stage1_train.encoder_blocks = 1;
  cfg.stage1_train.max_windows_per_epoch = 400;
  cfg.stage2_train = cfg.stage1_train;

  auto tp = pipeline::fit_tstar(ds, cfg);
  const auto stations = pipeline::all_stations(ds);
  const std::size_t t0 = ds.qsplit.train_end + 96;
  auto base = pipeline::stage2_forecast_range(tp.s2, ds, tp.target_archive(), tp.signals, cfg,
                                              tp.map, stations, ds.qsplit.train_end, t0 + 1);

  pipeline::Dataset poked = ds;
  for (std::size_t st = 0; st < poked.stations.size(); ++st) {
    for (std::size_t q = t0; q < poked.qgrid.length; ++q) {
      poked.pickup_q[st].values[q] += 23;
      poked.dropoff_q[st].values[q] += 11;
      if (!poked.metro_dev.empty()) {
        poked.metro_dev[st].d_in[q] += 55.0;
        poked.metro_dev[st].d_out[q] += 55.0;
      }
    }
    poked.pickup_h[st] = downsample_to_hourly(poked.pickup_q[st]);
    poked.dropoff_h[st] = downsample_to_hourly(poked.dropoff_q[st]);
  }
  for (std::size_t h = t0 / 4 + 1; h < poked.hgrid.length; ++h) {
    poked.weather[h].temperature -= 40.0;
    poked.weather[h].precipitation += 12.0;
  }

  auto arch_p = pipeline::stage1_forecast_rolling(tp.s1_pickup, poked, cfg, tp.map);
  auto arch_d = pipeline::stage1_forecast_rolling(tp.s1_dropoff, poked, cfg, tp.map);
  auto signals = pipeline::variation_signals(poked, arch_p, arch_d);
  auto poked_fc = pipeline::stage2_forecast_range(
      tp.s2, poked, cfg.target == DemandKind::pickup ? arch_p : arch_d, signals, cfg, tp.map,
      stations, ds.qsplit.train_end, t0 + 1);

  bool identical = base.size() == poked_fc.size();
  for (std::size_t i = 0; identical && i < base.size(); ++i)
    identical = base[i].dist.params.mu == poked_fc[i].dist.params.mu &&
                base[i].dist.params.r == poked_fc[i].dist.params.r &&
                base[i].dist.samples == poked_fc[i].dist.samples;
  out.require(identical, "future perturbation changed a past forecast");
  out.note(std::to_string(base.size()) + " forecasts bit-identical under future perturbation");

  // CV folds: validation strictly after training, and escaping rows rejected.
  const std::size_t week = 7 * 96;
  auto rolling = eval::make_rolling_folds(12 * week, {week, 4, 2, 2, 0});
  auto sliding = eval::make_sliding_folds(13 * week, {week, 8, 2, 1, 0});
  for (const auto& folds : {rolling, sliding})
    for (const auto& f : folds)
      out.require(f.val_begin == f.train_end && f.val_end > f.val_begin,
                  "fold validation range does not follow training");
  bool rejected = false;
  try {
    eval::FoldRunner bad = [](const eval::Fold& fold, std::uint64_t) {
      std::vector<eval::ScoreRow> rows;
      const double s[1] = {1.0};
      rows.push_back(eval::score_row("X", static_cast<std::int64_t>(fold.train_begin), 1, 1, 1,
                                     1, s, 0.1));
      return rows;
    };
    eval::run_folds(rolling, bad, 1);
  } catch (const tstar::ConfigError&) {
    rejected = true;
  }
  out.require(rejected, "cv harness accepted a row inside the training range");

  // Feature statistics ignore test-split perturbations.
  auto ds2 = ds;
  for (std::size_t st = 0; st < ds2.stations.size(); ++st)
    for (std::size_t q = ds2.qsplit.train_end; q < ds2.qgrid.length; ++q)
      ds2.pickup_q[st].values[q] += 1000;
  auto prof_a = features::SeasonalProfile::build_counts(ds.qgrid, ds.pickup_q[0].values,
                                                        ds.qsplit.train_end);
  auto prof_b = features::SeasonalProfile::build_counts(ds2.qgrid, ds2.pickup_q[0].values,
                                                        ds2.qsplit.train_end);
  bool stats_equal = true;
  for (int dow = 0; dow < 7 && stats_equal; ++dow)
    for (int hour = 0; hour < 24 && stats_equal; ++hour)
      for (int q = 0; q < 4 && stats_equal; ++q)
        stats_equal = prof_a.lookup(dow, hour, q) == prof_b.lookup(dow, hour, q);
  out.require(stats_equal, "seasonal profile leaked test-split data");

  std::filesystem::remove_all(dir);
  return out;
}

// --------------------------------------------------------------------------
// Criteria 6 and 7: synthetic directional benchmark and zero-shot protocol

Outcome criterion_benchmark(const Benchmark& bench) {
  Outcome out;
  const pipeline::Dataset& ds = bench.ds;
  pipeline::PipelineConfig cfg = benchmark_config();
  const auto stations = pipeline::all_stations(ds);
  const std::size_t q_begin = ds.qsplit.train_end;
  const std::size_t q_end = ds.qsplit.test_end;

  auto tp = pipeline::fit_tstar(ds, cfg);
  auto forecasts = pipeline::stage2_forecast_range(tp.s2, ds, tp.target_archive(), tp.signals,
                                                   cfg, tp.map, stations, q_begin, q_end);
  auto rows = pipeline::score_forecasts(ds, cfg.target, forecasts, cfg.alpha);
  auto report = eval::build_report(rows);

  auto ha = eval::build_report(
      pipeline::baseline_historical_average(ds, cfg.target, stations, q_begin, q_end, cfg.alpha));
  auto myopic = eval::build_report(
      pipeline::baseline_myopic(ds, cfg.target, stations, q_begin, q_end, cfg.alpha));
  auto split = eval::build_report(pipeline::baseline_hourly_split(
      ds, cfg.target, tp.target_archive(), stations, q_begin, q_end, cfg.alpha));

  // Oracle: the true generating distribution scored with the same sample budget.
  std::vector<eval::ScoreRow> oracle_rows;
  for (int st : stations) {
    const auto& series = ds.pickup_q[st];
    for (std::size_t q = q_begin; q < q_end; ++q) {
      auto draws = synth::zinb_sample(bench.truth.lambda_pickup[st][q], bench.truth.r_true,
                                      bench.truth.pi0, cfg.n_samples, derive_seed(777, st, q));
      std::vector<double> samples(draws.begin(), draws.end());
      std::vector<double> sorted = samples;
      std::sort(sorted.begin(), sorted.end());
      oracle_rows.push_back(eval::score_row(
          series.station, static_cast<std::int64_t>(q), static_cast<double>(series.values[q]),
          nn::nearest_rank(sorted, 0.5), nn::nearest_rank(sorted, 0.05),
          nn::nearest_rank(sorted, 0.95), samples, cfg.alpha));
    }
  }
  auto oracle = eval::build_report(oracle_rows);

  out.note("tstar mae " + fmt2(report.overall.mae) + " mcrps " + fmt2(report.overall.mcrps));
  out.note("hourly-split mae " + fmt2(split.overall.mae));
  out.note("ha mae " + fmt2(ha.overall.mae) + " mcrps " + fmt2(ha.overall.mcrps));
  out.note("myopic mae " + fmt2(myopic.overall.mae) + " mcrps " + fmt2(myopic.overall.mcrps));
  out.note("oracle mcrps " + fmt2(oracle.overall.mcrps));

  out.require(rows.size() == stations.size() * (q_end - q_begin), "incomplete forecast coverage");
  out.require(report.overall.mae < split.overall.mae, "tstar mae not below hourly-split");
  out.require(report.overall.mae < ha.overall.mae, "tstar mae not below historical average");
  out.require(report.overall.mae < myopic.overall.mae, "tstar mae not below myopic");
  out.require(report.overall.mcrps < ha.overall.mcrps, "tstar mcrps not below historical average");
  out.require(report.overall.mcrps < myopic.overall.mcrps, "tstar mcrps not below myopic");
  out.require(report.overall.mcrps <= 1.15 * oracle.overall.mcrps,
              "tstar mcrps worse than 1.15x the oracle");
  // The true generating distribution is the MCRPS floor for every predictor.
  for (double other : {report.overall.mcrps, ha.overall.mcrps, myopic.overall.mcrps})
    out.require(oracle.overall.mcrps <= other, "a predictor undercut the oracle mcrps");
  return out;
}

Outcome criterion_zero_shot(const Benchmark& bench) {
  Outcome out;
  const pipeline::Dataset& ds = bench.ds;
  pipeline::PipelineConfig cfg = benchmark_config();
  cfg.seed = 20240918;

  // Hold out two mid-scale stations; train on the remaining 18.
  const std::vector<int> holdout = {4, 15};
  std::vector<int> train;
  for (int st : pipeline::all_stations(ds))
    if (st != holdout[0] && st != holdout[1]) train.push_back(st);

  auto tp = pipeline::fit_tstar(ds, cfg, &train);
  out.require(tp.map.embed_index[holdout[0]] == nn::kMeanEmbedding &&
                  tp.map.embed_index[holdout[1]] == nn::kMeanEmbedding,
              "held-out stations were not excluded");

  // Substituted embedding equals the element-wise mean of the trained table.
  const nn::Tensor& table = tp.s2.model.params().at(tp.s2.model.params().find("station_embed"));
  nn::Tensor mean = tp.s2.model.mean_embedding();
  bool exact = table.rows == 18;
  for (std::size_t j = 0; j < table.cols && exact; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < table.rows; ++i) sum += table.at(i, j);
    exact = mean.at(0, j) == sum / static_cast<double>(table.rows);
  }
  out.require(exact, "mean embedding is not the exact table mean");

  const std::size_t q_begin = ds.qsplit.train_end;
  const std::size_t q_end = ds.qsplit.test_end;
  auto forecasts = pipeline::stage2_forecast_range(tp.s2, ds, tp.target_archive(), tp.signals,
                                                   cfg, tp.map, holdout, q_begin, q_end);
  out.require(forecasts.size() == holdout.size() * (q_end - q_begin),
              "zero-shot forecasting did not cover the held-out stations");
  auto rows = pipeline::score_forecasts(ds, cfg.target, forecasts, cfg.alpha);
  auto report = eval::build_report(rows);
  auto ha = eval::build_report(
      pipeline::baseline_historical_average(ds, cfg.target, holdout, q_begin, q_end, cfg.alpha));
  out.note("zero-shot mae " + fmt2(report.overall.mae) + " vs ha " + fmt2(ha.overall.mae));
  out.require(report.overall.mae < ha.overall.mae,
              "zero-shot mae not below the historical average");
  return out;
}

// --------------------------------------------------------------------------
// Criterion 8: backtesting harness layouts and determinism

Outcome criterion_cv_harnesses(const Benchmark& bench) {
  Outcome out;
  const pipeline::Dataset& ds = bench.ds;
  const std::size_t week = 7 * 96;
  const std::size_t total = 13 * week;  // first 13 weeks of the 120-day set

  auto rolling = eval::make_rolling_folds(total, {week, 4, 2, 2, 0});
  out.require(rolling.size() == 4, "rolling fold count");
  const std::size_t expected_train[4] = {4, 6, 8, 10};
  for (std::size_t k = 0; k < rolling.size() && k < 4; ++k) {
    out.require(rolling[k].train_begin == 0 && rolling[k].train_end == expected_train[k] * week &&
                    rolling[k].val_end == (expected_train[k] + 2) * week,
                "rolling fold " + std::to_string(k + 1) + " layout");
  }
  auto sliding = eval::make_sliding_folds(total, {week, 8, 2, 1, 0});
  out.require(sliding.size() == 4, "sliding fold count");
  for (std::size_t k = 0; k < sliding.size() && k < 4; ++k) {
    out.require(sliding[k].train_begin == k * week && sliding[k].train_end == (k + 8) * week &&
                    sliding[k].val_end == (k + 10) * week,
                "sliding fold " + std::to_string(k + 1) + " layout");
  }

  // Per-fold retrained predictor (seasonal profiles over the fold's training
  // range only); reports emitted and byte-deterministic per seed.
  eval::FoldRunner runner = [&](const eval::Fold& fold, std::uint64_t) {
    pipeline::Dataset fold_ds = ds;
    fold_ds.qsplit = SplitSpec{fold.train_end, fold.val_end};
    return pipeline::baseline_historical_average(fold_ds, DemandKind::pickup,
                                                 pipeline::all_stations(fold_ds), fold.val_begin,
                                                 fold.val_end, 0.1);
  };
  const std::string dir = "/tmp/tstar_acceptance_cv";
  std::filesystem::create_directories(dir);
  std::vector<std::string> first_pass;
  for (int run = 0; run < 2; ++run) {
    auto reports = eval::run_folds(rolling, runner, 1);
    for (std::size_t k = 0; k < reports.size(); ++k) {
      const std::string path = dir + "/fold" + std::to_string(k + 1) + "_summary.csv";
      eval::write_summary_csv(path, reports[k]);
      const std::string bytes = slurp(path);
      out.require(!bytes.empty(), "fold report missing");
      if (run == 0)
        first_pass.push_back(bytes);
      else
        out.require(bytes == first_pass[k], "fold report not deterministic");
    }
  }
  std::filesystem::remove_all(dir);
  return out;
}

// --------------------------------------------------------------------------
// Criterion 9: end-to-end CLI determinism

Outcome criterion_cli_determinism(const std::string& cli) {
  Outcome out;
  if (cli.empty()) {
    out.require(false, "tstar CLI path not supplied");
    return out;
  }
  const std::string root = "/tmp/tstar_acceptance_cli";
  std::filesystem::remove_all(root);
  std::filesystem::create_directories(root);
  {
    std::ofstream synth_cfg(root + "/synth.cfg");
    synth_cfg << "stations = 3\ndays = 14\nseed = 12\nbase_rate = 6\n";
    std::ofstream run_cfg(root + "/run.cfg");
    run_cfg << "grid_start = 2022-10-03T00:00\ndays = 14\ntrain_days = 10\nseed = 99\n"
            << "s1_epochs = 1\ns1_hidden = 16\ns1_blocks = 1\ns1_windows_per_epoch = 300\n"
            << "s2_epochs = 1\ns2_hidden = 16\ns2_blocks = 1\ns2_windows_per_epoch = 600\n"
            << "n_samples = 50\n"
            << "trips = " << root << "/data/trips.csv\n"
            << "stations = " << root << "/data/stations.csv\n"
            << "weather = " << root << "/data/weather.csv\n"
            << "holidays = " << root << "/data/holidays.txt\n"
            << "metro = " << root << "/data/metro.csv\n"
            << "metro_stations = " << root << "/data/metro_stations.csv\n";
  }
  auto run = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str()) == 0;
  };
  bool ok = run("synth --spec " + root + "/synth.cfg --out " + root + "/data");
  for (const std::string out_dir : {"a", "b"}) {
    const std::string common =
        "--config " + root + "/run.cfg --set out_dir=" + root + "/" + out_dir;
    ok = ok && run(common + " ingest");
    ok = ok && run(common + " train --stage both");
    ok = ok && run(common + " forecast");
    ok = ok && run(common + " evaluate");
  }
  out.require(ok, "a pipeline stage exited nonzero");
  if (ok) {
    const std::string a = slurp(root + "/a/report_summary.csv");
    const std::string b = slurp(root + "/b/report_summary.csv");
    out.require(!a.empty() && a == b, "report_summary.csv differs between identical runs");
    out.require(slurp(root + "/a/forecast.csv") == slurp(root + "/b/forecast.csv"),
                "forecast.csv differs between identical runs");
  }
  std::filesystem::remove_all(root);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  int failures = 0;

  Benchmark* bench = nullptr;
  auto get_bench = [&]() -> Benchmark& {
    if (!bench) bench = new Benchmark();
    return *bench;
  };

  struct Item {
    int id;
    const char* name;
    std::function<Outcome()> run;
    double limit_seconds;  // 0 = no stated limit
  };
  const std::vector<Item> items = {
      {1, "metric oracles (CRPS/IS/MAE/RMSE)", [] { return criterion_metric_oracles(); }, 5.0},
      {2, "negative binomial correctness", [] { return criterion_nb(); }, 60.0},
      {3, "gradient check", [] { return criterion_gradient_check(); }, 120.0},
      {4, "variation-signal exactness",
       [&] { return criterion_signal_exactness(get_bench()); }, 0.0},
      {5, "causality / leakage suite", [] { return criterion_causality(); }, 0.0},
      {6, "synthetic directional benchmark",
       [&] { return criterion_benchmark(get_bench()); }, 900.0},
      {7, "zero-shot protocol", [&] { return criterion_zero_shot(get_bench()); }, 0.0},
      {8, "backtesting harnesses", [&] { return criterion_cv_harnesses(get_bench()); }, 0.0},
      {9, "end-to-end determinism", [&] { return criterion_cli_determinism(cli); }, 0.0},
  };

  for (const Item& item : items) {
    const double start = now_seconds();
    Outcome outcome;
    try {
      outcome = item.run();
    } catch (const std::exception& e) {
      outcome.pass = false;
      outcome.detail = std::string("exception: ") + e.what();
    }
    const double elapsed = now_seconds() - start;
    if (item.limit_seconds > 0.0 && elapsed > item.limit_seconds) {
      outcome.pass = false;
      outcome.detail += "; exceeded the " + fmt2(item.limit_seconds) + " s budget";
    }
    std::printf("[%s] criterion %d: %s (%.1f s)%s%s\n", outcome.pass ? "PASS" : "FAIL", item.id,
                item.name, elapsed, outcome.detail.empty() ? " " : " -- ",
                outcome.detail.c_str());
    std::fflush(stdout);
    if (!outcome.pass) ++failures;
  }

  if (bench) {
    std::filesystem::remove_all(bench->dir);
    delete bench;
  }
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
