#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "tstar/errors.hpp"
#include "tstar/pipeline.hpp"
#include "tstar/synth.hpp"

using namespace tstar;
using namespace tstar::pipeline;

TEST_SUITE_BEGIN("pipeline");

namespace {

const Minutes kStart = minutes_from_civil(2022, 10, 3, 0, 0);

// Hand-built two-day dataset for the exact signal arithmetic tests.
Dataset tiny_dataset() {
  Dataset ds;
  ds.qgrid = build_grid(kStart, 15, 192);
  ds.hgrid = hourly_counterpart(ds.qgrid);
  ds.qsplit = SplitSpec{96, 192};
  ds.hsplit = SplitSpec{24, 48};
  ds.stations = {{"A", 38.9, -77.0, 20}};
  ds.max_capacity = 20;
  DemandSeries p{"A", ds.qgrid, DemandKind::pickup, std::vector<std::int64_t>(192, 0)};
  for (std::size_t q = 0; q < 192; ++q) p.values[q] = static_cast<std::int64_t>(q % 5);
  DemandSeries d = p;
  d.kind = DemandKind::dropoff;
  for (std::size_t q = 0; q < 192; ++q) d.values[q] = static_cast<std::int64_t>((q + 2) % 4);
  ds.pickup_q = {p};
  ds.dropoff_q = {d};
  ds.pickup_h = {downsample_to_hourly(p)};
  ds.dropoff_h = {downsample_to_hourly(d)};
  ds.weather.resize(48);
  for (std::size_t h = 0; h < 48; ++h) ds.weather[h] = {static_cast<std::int64_t>(h), 10, 0, 2};
  return ds;
}

Stage1Archive constant_archive(const Dataset& ds, DemandKind kind, double mu, double sigma) {
  Stage1Archive arch;
  arch.kind = kind;
  arch.entries.assign(ds.stations.size(),
                      std::vector<ArchiveEntry>(ds.hgrid.length, ArchiveEntry{}));
  for (auto& station : arch.entries)
    for (std::size_t h = 1; h < station.size(); ++h) station[h] = {mu, sigma, sigma, true};
  return arch;
}

PipelineConfig fast_config() {
  PipelineConfig cfg;
  cfg.seed = 11;
  cfg.station_embed_dim = 4;
  cfg.global_embed_dim = 8;
  cfg.stage1_train.epochs = 1;
  cfg.stage1_train.batch_size = 64;
  cfg.stage1_train.hidden_size = 16;
  cfg.stage1_train.encoder_blocks = 1;
  cfg.stage1_train.dropout = 0.1;
  cfg.stage1_train.learning_rate = 1e-3;
  cfg.stage1_train.max_windows_per_epoch = 256;
  cfg.stage2_train = cfg.stage1_train;
  cfg.n_samples = 20;
  return cfg;
}

struct SynthFixture {
  std::string dir = "/tmp/tstar_pipe_fixture";
  Dataset ds;
  synth::GroundTruth truth;

  explicit SynthFixture(std::size_t days = 14, int stations = 3) {
    synth::SynthSpec spec;
    spec.station_count = stations;
    spec.days = days;
    spec.seed = 21;
    spec.base_rate = 6.0;
    synth::SynthFiles files;
    truth = synth::generate(spec, dir, &files);
    DataPaths paths{files.trips, files.stations, files.weather,
                    files.holidays, files.metro, files.metro_stations};
    ds = build_dataset(paths, truth.qgrid.start, days, SplitSpec{(days - 4) * 96, days * 96},
                       300.0);
  }
  ~SynthFixture() { std::filesystem::remove_all(dir); }
};

}  // namespace

TEST_CASE("variation signals follow delta = y - mu/4 and telescope exactly") {
  Dataset ds = tiny_dataset();
  auto arch_p = constant_archive(ds, DemandKind::pickup, 4.0, 0.5);
  auto arch_d = constant_archive(ds, DemandKind::dropoff, 8.0, 0.5);
  auto signals = variation_signals(ds, arch_p, arch_d);

  // mu = 4, y = 3 -> delta = 2.
  std::size_t q3 = 0;
  for (std::size_t q = 4; q < 192; ++q)
    if (ds.pickup_q[0].values[q] == 3) {
      q3 = q;
      break;
    }
  CHECK(signals.delta_pickup[0][q3] == doctest::Approx(2.0).epsilon(1e-15));
  // y = mu/4 exactly -> delta = 0.
  std::size_t q1 = 0;
  for (std::size_t q = 4; q < 192; ++q)
    if (ds.pickup_q[0].values[q] == 1) {
      q1 = q;
      break;
    }
  CHECK(signals.delta_pickup[0][q1] == 0.0);

  // Telescoping: the four quarter deltas sum to (hourly actual - mu).
  for (std::size_t h = 1; h < 48; ++h) {
    double sum = 0.0;
    for (int j = 0; j < 4; ++j) sum += signals.delta_pickup[0][4 * h + j];
    const double expected = static_cast<double>(ds.pickup_h[0].values[h]) - 4.0;
    CHECK(std::abs(sum - expected) < 1e-12);
    double sum_d = 0.0;
    for (int j = 0; j < 4; ++j) sum_d += signals.delta_dropoff[0][4 * h + j];
    CHECK(std::abs(sum_d - (static_cast<double>(ds.dropoff_h[0].values[h]) - 8.0)) < 1e-12);
  }

  // Hour 0 has no forecast: gap markers, not zeros.
  CHECK(signals.covered[0][0] == 0);
  CHECK(signals.covered[0][4] == 1);
  CHECK_THROWS_AS(variation_signals(ds, arch_d, arch_p), ConfigError);
}

TEST_CASE("baseline point predictors") {
  Dataset ds = tiny_dataset();
  const std::vector<int> stations = {0};

  auto myopic = baseline_myopic(ds, DemandKind::pickup, stations, 96, 100, 0.1);
  REQUIRE(myopic.size() == 4);
  // First test quarter uses the last train quarter.
  CHECK(myopic[0].point == static_cast<double>(ds.pickup_q[0].values[95]));
  CHECK(myopic[1].point == static_cast<double>(ds.pickup_q[0].values[96]));
  CHECK_THROWS_AS(baseline_myopic(ds, DemandKind::pickup, stations, 0, 4, 0.1), ConfigError);

  auto arch = constant_archive(ds, DemandKind::pickup, 8.0, 0.5);
  auto split_rows = baseline_hourly_split(ds, DemandKind::pickup, arch, stations, 96, 104, 0.1);
  for (const auto& row : split_rows) CHECK(row.point == doctest::Approx(2.0));

  // Historical average: y has period 5 in quarters, so per-(dow,hour,quarter)
  // train keys repeat identically between both Mondays... use the profile op
  // directly: the pattern q % 5 gives each key a single train observation.
  auto ha = baseline_historical_average(ds, DemandKind::pickup, stations, 96, 192, 0.1);
  // Day 2 is Tuesday; keys unseen in the Monday-only train split fall back to
  // hour means, which equal the Monday values for this periodic series where
  // the phase matches.
  CHECK(ha.size() == 96);
  for (const auto& row : ha) {
    CHECK(row.point >= 0.0);
    CHECK(row.crps == doctest::Approx(row.abs_err).epsilon(1e-12));  // point-mass CRPS
  }
}

TEST_CASE("station map subsetting") {
  auto identity = StationMap::identity(3);
  CHECK(identity.trained_count == 3);
  CHECK(identity.embed_index == std::vector<int>{0, 1, 2});

  auto sub = StationMap::subset(4, {2, 0});
  CHECK(sub.trained_count == 2);
  CHECK(sub.embed_index[2] == 0);
  CHECK(sub.embed_index[0] == 1);
  CHECK(sub.embed_index[1] == nn::kMeanEmbedding);
  CHECK_THROWS_AS(StationMap::subset(4, {0, 0}), ConfigError);
  CHECK_THROWS_AS(StationMap::subset(4, {7}), ConfigError);
}

TEST_CASE("fit and rolling forecast on a small synthetic network") {
  SynthFixture fx;
  PipelineConfig cfg = fast_config();
  StationMap map = StationMap::identity(fx.ds.stations.size());

  auto s1 = stage1_fit(fx.ds, DemandKind::pickup, cfg, map);
  CHECK_FALSE(s1.history.epoch_nll.empty());
  auto arch = stage1_forecast_rolling(s1, fx.ds, cfg, map);
  for (std::size_t st = 0; st < fx.ds.stations.size(); ++st) {
    for (std::size_t h = 0; h < fx.ds.hgrid.length; ++h) {
      const auto& e = arch.at(st, h);
      CHECK(e.covered == (h >= static_cast<std::size_t>(cfg.v1)));
      if (e.covered) {
        CHECK(e.mu > 0.0);
        CHECK(e.sigma >= 0.0);
      }
    }
  }
}

TEST_CASE("full pipeline is deterministic and causal") {
  SynthFixture fx;
  PipelineConfig cfg = fast_config();

  TrainedPipeline tp = fit_tstar(fx.ds, cfg);
  const std::vector<int> stations = all_stations(fx.ds);
  const std::size_t t0 = fx.ds.qsplit.train_end + 48;
  auto fc = stage2_forecast_range(tp.s2, fx.ds, tp.target_archive(), tp.signals, cfg, tp.map,
                                  stations, t0, t0 + 1);
  REQUIRE(fc.size() == fx.ds.stations.size());

  // Determinism: refitting with the same seed reproduces the forecasts.
  TrainedPipeline tp2 = fit_tstar(fx.ds, cfg);
  auto fc2 = stage2_forecast_range(tp2.s2, fx.ds, tp2.target_archive(), tp2.signals, cfg,
                                   tp2.map, stations, t0, t0 + 1);
  for (std::size_t i = 0; i < fc.size(); ++i) {
    CHECK(fc[i].dist.params.mu == fc2[i].dist.params.mu);
    CHECK(fc[i].dist.params.r == fc2[i].dist.params.r);
    CHECK(fc[i].dist.samples == fc2[i].dist.samples);
  }

  // Causality: perturb strictly-future inputs and re-run the inference path.
  Dataset poked = fx.ds;
  for (std::size_t st = 0; st < poked.stations.size(); ++st) {
    for (std::size_t q = t0; q < poked.qgrid.length; ++q) {
      poked.pickup_q[st].values[q] += 17;
      poked.dropoff_q[st].values[q] += 9;
      if (!poked.metro_dev.empty()) {
        poked.metro_dev[st].d_in[q] += 100.0;
        poked.metro_dev[st].d_out[q] += 100.0;
      }
    }
    poked.pickup_h[st] = downsample_to_hourly(poked.pickup_q[st]);
    poked.dropoff_h[st] = downsample_to_hourly(poked.dropoff_q[st]);
  }
  for (std::size_t h = t0 / 4 + 1; h < poked.hgrid.length; ++h)
    poked.weather[h].temperature += 30.0;

  auto arch_p = stage1_forecast_rolling(tp.s1_pickup, poked, cfg, tp.map);
  auto arch_d = stage1_forecast_rolling(tp.s1_dropoff, poked, cfg, tp.map);
  auto signals = variation_signals(poked, arch_p, arch_d);
  auto fc_poked = stage2_forecast_range(tp.s2, poked,
                                        cfg.target == DemandKind::pickup ? arch_p : arch_d,
                                        signals, cfg, tp.map, stations, t0, t0 + 1);
  REQUIRE(fc_poked.size() == fc.size());
  for (std::size_t i = 0; i < fc.size(); ++i) {
    CHECK(fc[i].dist.params.mu == fc_poked[i].dist.params.mu);
    CHECK(fc[i].dist.params.r == fc_poked[i].dist.params.r);
    CHECK(fc[i].dist.samples == fc_poked[i].dist.samples);
  }
}

namespace {

Dataset constant_dataset(std::vector<std::int64_t> quarter_levels) {
  Dataset ds;
  ds.qgrid = build_grid(kStart, 15, 8 * 96);
  ds.hgrid = hourly_counterpart(ds.qgrid);
  ds.qsplit = SplitSpec{6 * 96, 8 * 96};
  ds.hsplit = SplitSpec{6 * 24, 8 * 24};
  ds.max_capacity = 20;
  for (std::size_t st = 0; st < quarter_levels.size(); ++st) {
    ds.stations.push_back({"K" + std::to_string(st), 38.9 + 0.01 * st, -77.0, 20});
    DemandSeries q{ds.stations.back().id, ds.qgrid, DemandKind::pickup,
                   std::vector<std::int64_t>(ds.qgrid.length, quarter_levels[st])};
    ds.pickup_q.push_back(q);
    q.kind = DemandKind::dropoff;
    ds.dropoff_q.push_back(q);
    ds.pickup_h.push_back(downsample_to_hourly(ds.pickup_q.back()));
    ds.dropoff_h.push_back(downsample_to_hourly(ds.dropoff_q.back()));
  }
  ds.weather.resize(ds.hgrid.length);
  for (std::size_t h = 0; h < ds.hgrid.length; ++h)
    ds.weather[h] = {static_cast<std::int64_t>(h), 10, 0, 2};
  return ds;
}

}  // namespace

TEST_CASE("two-stage fit recovers constant rates (MLE-of-mean oracle)") {
  // Quarters fixed at 1 and 2 (hourly 4 and 8), no sub-hour structure, so
  // stage-1 should land on the per-station means and stage-2 should track
  // the scaled hourly estimate.
  Dataset ds = constant_dataset({1, 2});
  PipelineConfig cfg = fast_config();
  cfg.stage1_train.epochs = 20;
  cfg.stage1_train.learning_rate = 5e-3;
  cfg.stage1_train.dropout = 0.0;
  cfg.stage1_train.max_windows_per_epoch = 0;
  cfg.stage2_train = cfg.stage1_train;
  cfg.stage2_train.epochs = 24;

  TrainedPipeline tp = fit_tstar(ds, cfg);
  for (std::size_t h = ds.hsplit.train_end; h < ds.hgrid.length; ++h) {
    CHECK(tp.arch_pickup.at(0, h).mu == doctest::Approx(4.0).epsilon(0.15));
    CHECK(tp.arch_pickup.at(1, h).mu == doctest::Approx(8.0).epsilon(0.15));
  }
  auto fc = stage2_forecast_range(tp.s2, ds, tp.target_archive(), tp.signals, cfg, tp.map,
                                  {0, 1}, ds.qsplit.train_end, ds.qsplit.train_end + 96);
  for (const auto& f : fc) {
    const double scaled = tp.arch_pickup.at(f.station, f.quarter / 4).mu / 4.0;
    CHECK(f.dist.params.mu == doctest::Approx(scaled).epsilon(0.10));
  }
}

TEST_CASE("all-zero demand yields zero medians everywhere") {
  Dataset ds = constant_dataset({0, 0});
  PipelineConfig cfg = fast_config();
  cfg.stage1_train.epochs = 6;
  cfg.stage1_train.dropout = 0.0;
  cfg.stage2_train = cfg.stage1_train;
  TrainedPipeline tp = fit_tstar(ds, cfg);
  auto fc = stage2_forecast_range(tp.s2, ds, tp.target_archive(), tp.signals, cfg, tp.map,
                                  {0, 1}, ds.qsplit.train_end, ds.qsplit.test_end);
  REQUIRE(!fc.empty());
  for (const auto& f : fc) CHECK(f.dist.point == 0.0);
}

TEST_CASE("blocked signal archive swaps the training halves, keeps the test range") {
  SynthFixture fx;
  PipelineConfig cfg = fast_config();
  StationMap map = StationMap::identity(fx.ds.stations.size());
  auto s1 = stage1_fit(fx.ds, DemandKind::pickup, cfg, map);

  auto in_sample = signal_archive(s1, fx.ds, cfg, map);
  PipelineConfig blocked_cfg = cfg;
  blocked_cfg.blocked_signals = true;
  auto blocked = signal_archive(s1, fx.ds, blocked_cfg, map);
  auto blocked_again = signal_archive(s1, fx.ds, blocked_cfg, map);

  const std::size_t train_end_h = fx.ds.hsplit.train_end;
  bool any_train_diff = false;
  for (std::size_t h = cfg.v1; h < train_end_h; ++h) {
    CHECK(blocked.at(0, h).covered);
    any_train_diff = any_train_diff || blocked.at(0, h).mu != in_sample.at(0, h).mu;
    CHECK(blocked.at(0, h).mu == blocked_again.at(0, h).mu);
  }
  CHECK(any_train_diff);  // fold models differ from the in-sample model
  for (std::size_t h = train_end_h; h < fx.ds.hgrid.length; ++h)
    CHECK(blocked.at(0, h).mu == in_sample.at(0, h).mu);  // test range: full model
}

TEST_CASE("zero-shot stations forecast through the mean embedding") {
  SynthFixture fx;
  PipelineConfig cfg = fast_config();
  const std::vector<int> train = {0, 1};  // hold out station 2
  TrainedPipeline tp = fit_tstar(fx.ds, cfg, &train);
  CHECK(tp.map.embed_index[2] == nn::kMeanEmbedding);

  // The substituted embedding is exactly the mean of the trained table.
  const nn::Tensor& table =
      tp.s2.model.params().at(tp.s2.model.params().find("station_embed"));
  nn::Tensor mean = tp.s2.model.mean_embedding();
  for (std::size_t j = 0; j < table.cols; ++j)
    CHECK(mean.at(0, j) == (table.at(0, j) + table.at(1, j)) / 2.0);

  const std::size_t t0 = fx.ds.qsplit.train_end;
  auto fc = stage2_forecast_range(tp.s2, fx.ds, tp.target_archive(), tp.signals, cfg, tp.map,
                                  {2}, t0, t0 + 8);
  CHECK(fc.size() == 8);
  for (const auto& f : fc) CHECK(f.dist.params.mu > 0.0);
}

TEST_CASE("stage-2 skips windows that overlap archive gaps") {
  Dataset ds = tiny_dataset();
  auto arch_p = constant_archive(ds, DemandKind::pickup, 4.0, 0.5);
  auto arch_d = constant_archive(ds, DemandKind::dropoff, 4.0, 0.5);
  arch_p.entries[0][30].covered = false;  // one missing hour in the test split
  auto signals = variation_signals(ds, arch_p, arch_d);
  for (int j = 0; j < 4; ++j) CHECK(signals.covered[0][120 + j] == 0);

  PipelineConfig cfg = fast_config();
  cfg.v2 = 8;
  StationMap map = StationMap::identity(1);
  Stage2Model s2 = stage2_fit(ds, arch_p, signals, cfg, map);
  auto fc = stage2_forecast_range(s2, ds, arch_p, signals, cfg, map, {0}, 96, 192);
  // A window for target q reads rows [q - v2, q], so targets 120..123+v2 are
  // absent; everything else in range is present.
  for (const auto& f : fc) {
    const bool overlaps_gap = f.quarter >= 120 && f.quarter <= 123 + cfg.v2;
    CHECK_FALSE(overlaps_gap);
  }
  CHECK(fc.size() == 96 - (4 + cfg.v2));
}

TEST_SUITE_END();
