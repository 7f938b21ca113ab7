#include "tstar/transformer.hpp"

#include <algorithm>
#include <bit>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "tstar/errors.hpp"

namespace tstar::nn {

void EmbedConfig::validate() const {
  if (station_count < 1 || station_embed_dim < 1 || global_embed_dim < 1 || model_dim < 1 ||
      lookback < 1 || global_channels < 0 || local_dim < 0)
    throw ConfigError("embed config: dimensions must be positive");
  if (horizon != 1) throw ConfigError("embed config: only one-step horizon is supported");
  if (model_dim % n_heads != 0)
    throw ConfigError("embed config: model_dim must be divisible by n_heads");
}

std::vector<std::string> TrainConfig::validate() const {
  std::vector<std::string> warnings;
  auto in = [](int v, std::initializer_list<int> set) {
    return std::find(set.begin(), set.end(), v) != set.end();
  };
  if (!in(encoder_blocks, {1, 2, 3}) && encoder_blocks != 0)
    warnings.push_back("encoder_blocks outside tuned range {1,2,3}");
  if (!in(hidden_size, {16, 32, 64})) warnings.push_back("hidden_size outside tuned range {16,32,64}");
  if (dropout != 0.0 && dropout != 0.1 && dropout != 0.2 && dropout != 0.3)
    warnings.push_back("dropout outside tuned range {0.1,0.2,0.3}");
  if (learning_rate != 0.0 && (learning_rate < 5e-5 || learning_rate > 1e-2))
    warnings.push_back("learning_rate outside tuned range [5e-5, 1e-2]");
  if (epochs < 1) warnings.push_back("epochs < 1: model stays at initialization");
  return warnings;
}

int ParamSet::add(const std::string& name, std::size_t rows, std::size_t cols) {
  names_.push_back(name);
  values_.emplace_back(rows, cols);
  return static_cast<int>(values_.size()) - 1;
}

int ParamSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<int>(i);
  return -1;
}

std::size_t ParamSet::total_scalars() const {
  std::size_t n = 0;
  for (const auto& t : values_) n += t.size();
  return n;
}

std::vector<Tensor> ParamSet::zeros_like() const {
  std::vector<Tensor> out;
  out.reserve(values_.size());
  for (const auto& t : values_) out.emplace_back(t.rows, t.cols);
  return out;
}

Tensor TstModel::positional_encoding(std::size_t positions, std::size_t dim) {
  Tensor pe(positions, dim);
  for (std::size_t pos = 0; pos < positions; ++pos) {
    for (std::size_t j = 0; 2 * j < dim; ++j) {
      const double angle =
          static_cast<double>(pos) /
          std::pow(10000.0, static_cast<double>(2 * j) / static_cast<double>(dim));
      pe.at(pos, 2 * j) = std::sin(angle);
      if (2 * j + 1 < dim) pe.at(pos, 2 * j + 1) = std::cos(angle);
    }
  }
  return pe;
}

namespace {

void init_uniform(Tensor& t, Rng& rng, double limit) {
  for (double& v : t.data) v = (2.0 * uniform01(rng) - 1.0) * limit;
}

void init_glorot(Tensor& t, Rng& rng) {
  init_uniform(t, rng, std::sqrt(6.0 / static_cast<double>(t.rows + t.cols)));
}

void init_normal(Tensor& t, Rng& rng, double sd) {
  for (double& v : t.data) v = normal01(rng) * sd;
}

constexpr double kHeadEps = 1e-6;

}  // namespace

TstModel::TstModel(const EmbedConfig& cfg, int encoder_blocks, std::uint64_t init_seed)
    : cfg_(cfg), blocks_(encoder_blocks) {
  cfg_.validate();
  if (blocks_ < 0) throw ConfigError("encoder_blocks must be >= 0");
  const int e = cfg_.model_dim;
  const int d = cfg_.concat_dim();
  const int f = cfg_.ff();

  Rng rng(init_seed);
  id_embed_ = params_.add("station_embed", cfg_.station_count, cfg_.station_embed_dim);
  init_normal(params_.at(id_embed_), rng, 0.02);
  id_wg_ = params_.add("global_dense_w", std::max(cfg_.global_channels, 1), cfg_.global_embed_dim);
  init_glorot(params_.at(id_wg_), rng);
  id_bg_ = params_.add("global_dense_b", 1, cfg_.global_embed_dim);
  id_we_ = params_.add("proj_w", d, e);
  init_glorot(params_.at(id_we_), rng);
  id_be_ = params_.add("proj_b", 1, e);

  for (int b = 0; b < blocks_; ++b) {
    const std::string prefix = "block" + std::to_string(b) + ".";
    BlockIds ids{};
    ids.wq = params_.add(prefix + "attn_wq", e, e);
    ids.wk = params_.add(prefix + "attn_wk", e, e);
    ids.wv = params_.add(prefix + "attn_wv", e, e);
    ids.wo = params_.add(prefix + "attn_wo", e, e);
    ids.bo = params_.add(prefix + "attn_bo", 1, e);
    ids.ln1_g = params_.add(prefix + "ln1_gamma", 1, e);
    ids.ln1_b = params_.add(prefix + "ln1_beta", 1, e);
    ids.ff_w1 = params_.add(prefix + "ff_w1", e, f);
    ids.ff_b1 = params_.add(prefix + "ff_b1", 1, f);
    ids.ff_w2 = params_.add(prefix + "ff_w2", f, e);
    ids.ff_b2 = params_.add(prefix + "ff_b2", 1, e);
    ids.ln2_g = params_.add(prefix + "ln2_gamma", 1, e);
    ids.ln2_b = params_.add(prefix + "ln2_beta", 1, e);
    for (int w : {ids.wq, ids.wk, ids.wv, ids.wo, ids.ff_w1, ids.ff_w2})
      init_glorot(params_.at(w), rng);
    for (int g : {ids.ln1_g, ids.ln2_g})
      std::fill(params_.at(g).data.begin(), params_.at(g).data.end(), 1.0);
    block_ids_.push_back(ids);
  }

  id_head_mu_w_ = params_.add("head_mu_w", e, 1);
  init_glorot(params_.at(id_head_mu_w_), rng);
  id_head_mu_b_ = params_.add("head_mu_b", 1, 1);
  id_head_r_w_ = params_.add("head_r_w", e, 1);
  init_glorot(params_.at(id_head_r_w_), rng);
  id_head_r_b_ = params_.add("head_r_b", 1, 1);

  pe_ = positional_encoding(static_cast<std::size_t>(cfg_.lookback), static_cast<std::size_t>(e));
}

Tape::Id TstModel::build_embed(Tape& tape, const Window& window,
                               std::vector<Tensor>* grads) const {
  const std::size_t v = static_cast<std::size_t>(cfg_.lookback);
  if (window.y_in.rows != v || window.globals.rows != v || window.locals.rows != v)
    throw ConfigError("window rows do not match the configured look-back length");
  if (window.globals.cols != static_cast<std::size_t>(cfg_.global_channels) ||
      window.locals.cols != static_cast<std::size_t>(cfg_.local_dim))
    throw ConfigError("window channel widths do not match the embed config");

  auto bind = [&](int idx) {
    return grads ? tape.param(params_.at(idx), &(*grads)[idx]) : tape.leaf(params_.at(idx));
  };

  // Station representation: table row, or the table mean for zero-shot ids.
  Tape::Id emb_row;
  if (window.station == kMeanEmbedding) {
    emb_row = tape.leaf(mean_embedding());
  } else if (window.station >= 0 && window.station < cfg_.station_count) {
    emb_row = tape.gather_row(bind(id_embed_), static_cast<std::size_t>(window.station));
  } else {
    throw ConfigError("unknown station id " + std::to_string(window.station) +
                      " (zero-shot substitution not engaged)");
  }

  const Tape::Id statics = tape.broadcast_row(emb_row, v);
  Tape::Id globals_emb = tape.add_rowvec(
      tape.matmul(tape.leaf(window.globals), bind(id_wg_)), bind(id_bg_));
  const Tape::Id x = tape.concat_cols(
      {statics, globals_emb, tape.leaf(window.locals), tape.leaf(window.y_in)});
  return tape.add_rowvec(tape.matmul(x, bind(id_we_)), bind(id_be_));
}

Tape::Id TstModel::build_encoder(Tape& tape, Tape::Id embedded, std::vector<Tensor>* grads,
                                 Rng* dropout_rng, double dropout, ForwardTrace* trace) const {
  const std::size_t v = static_cast<std::size_t>(cfg_.lookback);
  const int e = cfg_.model_dim;
  const int heads = cfg_.n_heads;
  const int hd = e / heads;

  auto bind = [&](int idx) {
    return grads ? tape.param(params_.at(idx), &(*grads)[idx]) : tape.leaf(params_.at(idx));
  };
  auto dropout_mask = [&](std::size_t rows, std::size_t cols) {
    Tensor mask(rows, cols);
    const double keep = 1.0 - dropout;
    for (double& m : mask.data) m = uniform01(*dropout_rng) < keep ? 1.0 / keep : 0.0;
    return mask;
  };

  Tape::Id z = tape.add_const(embedded, pe_);
  for (int b = 0; b < blocks_; ++b) {
    const BlockIds& ids = block_ids_[b];
    const Tape::Id q_all = tape.matmul(z, bind(ids.wq));
    const Tape::Id k_all = tape.matmul(z, bind(ids.wk));
    const Tape::Id v_all = tape.matmul(z, bind(ids.wv));
    std::vector<Tape::Id> contexts;
    contexts.reserve(heads);
    for (int h = 0; h < heads; ++h) {
      const std::size_t off = static_cast<std::size_t>(h) * hd;
      const Tape::Id qh = tape.slice_cols(q_all, off, hd);
      const Tape::Id kh = tape.slice_cols(k_all, off, hd);
      const Tape::Id vh = tape.slice_cols(v_all, off, hd);
      const Tape::Id scores = tape.affine(tape.matmul_nt(qh, kh), 1.0 / std::sqrt(hd), 0.0);
      const Tape::Id attn = tape.softmax_rows(scores);
      if (trace) trace->attention.push_back(tape.value(attn));
      contexts.push_back(tape.matmul(attn, vh));
    }
    Tape::Id attn_out =
        tape.add_rowvec(tape.matmul(tape.concat_cols(contexts), bind(ids.wo)), bind(ids.bo));
    if (dropout_rng && dropout > 0.0)
      attn_out = tape.hadamard_const(attn_out, dropout_mask(v, e));
    z = tape.layer_norm_rows(tape.add(z, attn_out), bind(ids.ln1_g), bind(ids.ln1_b));

    Tape::Id ff = tape.gelu(tape.add_rowvec(tape.matmul(z, bind(ids.ff_w1)), bind(ids.ff_b1)));
    if (dropout_rng && dropout > 0.0)
      ff = tape.hadamard_const(ff, dropout_mask(v, static_cast<std::size_t>(cfg_.ff())));
    const Tape::Id ff_out = tape.add_rowvec(tape.matmul(ff, bind(ids.ff_w2)), bind(ids.ff_b2));
    z = tape.layer_norm_rows(tape.add(z, ff_out), bind(ids.ln2_g), bind(ids.ln2_b));
  }
  return z;
}

TstModel::HeadEnds TstModel::build_forward(Tape& tape, const Window& window,
                                           std::vector<Tensor>* grads, Rng* dropout_rng,
                                           double dropout, ForwardTrace* trace) const {
  const std::size_t v = static_cast<std::size_t>(cfg_.lookback);
  auto bind = [&](int idx) {
    return grads ? tape.param(params_.at(idx), &(*grads)[idx]) : tape.leaf(params_.at(idx));
  };
  const Tape::Id z =
      build_encoder(tape, build_embed(tape, window, grads), grads, dropout_rng, dropout, trace);

  // Prediction reads the final hidden state at the last look-back position.
  const Tape::Id h_last = tape.slice_rows(z, v - 1, 1);
  HeadEnds ends;
  ends.mu = tape.affine(
      tape.softplus(tape.add(tape.matmul(h_last, bind(id_head_mu_w_)), bind(id_head_mu_b_))), 1.0,
      kHeadEps);
  ends.r = tape.affine(
      tape.softplus(tape.add(tape.matmul(h_last, bind(id_head_r_w_)), bind(id_head_r_b_))), 1.0,
      kHeadEps);
  return ends;
}

nb::NegBinParams TstModel::distribution_params(const Window& window, ForwardTrace* trace) const {
  Tape tape;
  const HeadEnds ends = build_forward(tape, window, nullptr, nullptr, 0.0, trace);
  nb::NegBinParams params{tape.value(ends.mu).at(0, 0), tape.value(ends.r).at(0, 0)};
  if (!std::isfinite(params.mu) || !std::isfinite(params.r))
    throw NumericsError("non-finite distribution parameters for target index " +
                        std::to_string(window.target_index));
  return params;
}

Tensor TstModel::embed_sequence(const Window& window) const {
  Tape tape;
  return tape.value(build_embed(tape, window, nullptr));
}

Tensor TstModel::encode(const Window& window, ForwardTrace* trace) const {
  Tape tape;
  const Tape::Id z =
      build_encoder(tape, build_embed(tape, window, nullptr), nullptr, nullptr, 0.0, trace);
  Tensor out = tape.value(z);
  if (!out.finite())
    throw NumericsError("non-finite encoder output for target index " +
                        std::to_string(window.target_index));
  return out;
}

double nearest_rank(std::span<const double> sorted, double percentile) {
  if (sorted.empty()) throw ConfigError("nearest_rank: empty sample set");
  const double n = static_cast<double>(sorted.size());
  std::size_t rank = static_cast<std::size_t>(std::ceil(percentile * n));
  if (rank == 0) rank = 1;
  if (rank > sorted.size()) rank = sorted.size();
  return sorted[rank - 1];
}

ForecastDistribution make_forecast(const nb::NegBinParams& params, std::size_t n_samples,
                                   std::uint64_t seed) {
  ForecastDistribution out;
  out.params = params;
  out.samples = nb::sample(params, n_samples, seed);
  std::vector<double> sorted(out.samples.begin(), out.samples.end());
  std::sort(sorted.begin(), sorted.end());
  out.point = nearest_rank(sorted, 0.50);
  out.lo = nearest_rank(sorted, 0.05);
  out.hi = nearest_rank(sorted, 0.95);
  double mean = 0.0;
  for (double s : sorted) mean += s;
  mean /= static_cast<double>(sorted.size());
  double var = 0.0;
  for (double s : sorted) var += (s - mean) * (s - mean);
  var /= static_cast<double>(sorted.size());
  out.sample_sigma = std::sqrt(var);
  out.analytic_sigma = std::sqrt(nb::moments(params).second);
  return out;
}

ForecastDistribution TstModel::predict(const Window& window, std::size_t n_samples,
                                       std::uint64_t seed) const {
  return make_forecast(distribution_params(window), n_samples, seed);
}

TrainResult TstModel::train(std::span<const Window> data, const TrainConfig& cfg,
                            std::int64_t max_target_index) {
  return train(SpanWindowSource(data), cfg, max_target_index);
}

TrainResult TstModel::train(const WindowSource& data, const TrainConfig& cfg,
                            std::int64_t max_target_index) {
  if (data.size() == 0) throw ConfigError("train: empty dataset");
  if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (max_target_index >= 0)
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data.target_index(i) > max_target_index)
        throw ConfigError("train: window target index " + std::to_string(data.target_index(i)) +
                          " leaks past the training boundary " +
                          std::to_string(max_target_index));

  std::vector<Tensor> grads = params_.zeros_like();
  std::vector<Tensor> adam_m = params_.zeros_like();
  std::vector<Tensor> adam_v = params_.zeros_like();
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kAdamEps = 1e-8;
  std::int64_t step = 0;

  const int shards = std::max(1, cfg.grad_shards);
  std::vector<std::vector<Tensor>> shard_grads;
  if (shards > 1)
    for (int s = 0; s < shards; ++s) shard_grads.push_back(params_.zeros_like());

  Rng order_rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    std::size_t epoch_windows = order.size();
    if (cfg.max_windows_per_epoch > 0)
      epoch_windows = std::min(epoch_windows, cfg.max_windows_per_epoch);

    double epoch_loss = 0.0;
    std::size_t epoch_count = 0;
    for (std::size_t begin = 0; begin < epoch_windows; begin += cfg.batch_size) {
      const std::size_t n_b = std::min<std::size_t>(cfg.batch_size, epoch_windows - begin);
      const double inv = 1.0 / static_cast<double>(n_b);
      for (auto& g : grads) g.zero();

      double batch_loss = 0.0;
      auto run_range = [&](std::size_t lo, std::size_t hi, std::vector<Tensor>& sink,
                           double& loss_acc) {
        for (std::size_t k = lo; k < hi; ++k) {
          const Window w = data.get(order[begin + k]);
          if (w.station < 0 || w.station >= cfg_.station_count)
            throw ConfigError("train: window station index out of range");
          Rng drop_rng(derive_seed(cfg.seed, 0x5eed, static_cast<std::uint64_t>(epoch),
                                   order[begin + k]));
          Tape tape;
          const HeadEnds ends =
              build_forward(tape, w, &sink, cfg.dropout > 0 ? &drop_rng : nullptr, cfg.dropout,
                            nullptr);
          const Tape::Id loss = tape.nb_nll(ends.mu, ends.r, w.target);
          loss_acc += tape.value(loss).at(0, 0);
          tape.backward(loss, inv);
        }
      };

      if (shards == 1 || n_b < static_cast<std::size_t>(shards)) {
        run_range(0, n_b, grads, batch_loss);
      } else {
        std::vector<double> shard_loss(shards, 0.0);
        std::vector<std::exception_ptr> errors(shards);
        std::vector<std::thread> workers;
        for (int s = 0; s < shards; ++s) {
          const std::size_t lo = n_b * s / shards;
          const std::size_t hi = n_b * (s + 1) / shards;
          for (auto& g : shard_grads[s]) g.zero();
          workers.emplace_back([&, s, lo, hi] {
            try {
              run_range(lo, hi, shard_grads[s], shard_loss[s]);
            } catch (...) {
              errors[s] = std::current_exception();
            }
          });
        }
        for (auto& t : workers) t.join();
        for (const auto& err : errors)
          if (err) std::rethrow_exception(err);
        for (int s = 0; s < shards; ++s) {  // fixed reduction order
          batch_loss += shard_loss[s];
          for (std::size_t p = 0; p < grads.size(); ++p)
            for (std::size_t i = 0; i < grads[p].size(); ++i)
              grads[p].data[i] += shard_grads[s][p].data[i];
        }
      }

      if (!std::isfinite(batch_loss))
        throw NumericsError("training NLL diverged at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(begin / cfg.batch_size));
      epoch_loss += batch_loss;
      epoch_count += n_b;

      if (!cfg.train_shape_head) {
        grads[id_head_r_w_].zero();
        grads[id_head_r_b_].zero();
      }

      ++step;
      const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      for (std::size_t p = 0; p < grads.size(); ++p) {
        Tensor& theta = params_.at(static_cast<int>(p));
        for (std::size_t i = 0; i < theta.size(); ++i) {
          const double g = grads[p].data[i];
          adam_m[p].data[i] = kBeta1 * adam_m[p].data[i] + (1.0 - kBeta1) * g;
          adam_v[p].data[i] = kBeta2 * adam_v[p].data[i] + (1.0 - kBeta2) * g * g;
          theta.data[i] -= cfg.learning_rate * (adam_m[p].data[i] / bc1) /
                           (std::sqrt(adam_v[p].data[i] / bc2) + kAdamEps);
        }
      }
    }
    result.epoch_nll.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(1, epoch_count)));
  }
  return result;
}

double TstModel::batch_nll(std::span<const Window> batch) const {
  double total = 0.0;
  for (const Window& w : batch) {
    const nb::NegBinParams p = distribution_params(w);
    total -= nb::log_likelihood(p, static_cast<std::int64_t>(std::llround(w.target)));
  }
  return total / static_cast<double>(batch.size());
}

GradCheckReport TstModel::gradient_check(
    std::span<const Window> batch, double tolerance, std::size_t n_params, std::uint64_t seed,
    const std::function<void(std::vector<Tensor>&)>& mutate_grads) {
  if (batch.empty()) throw ConfigError("gradient_check: empty batch");

  // Analytic gradients of the mean NLL, dropout off.
  std::vector<Tensor> grads = params_.zeros_like();
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const Window& w : batch) {
    Tape tape;
    const HeadEnds ends = build_forward(tape, w, &grads, nullptr, 0.0, nullptr);
    const Tape::Id loss = tape.nb_nll(ends.mu, ends.r, w.target);
    tape.backward(loss, inv);
  }
  if (mutate_grads) mutate_grads(grads);

  // Sample parameter coordinates across the whole flat space.
  const std::size_t total = params_.total_scalars();
  Rng rng(seed);
  GradCheckReport report;
  report.tolerance = tolerance;
  report.n_checked = std::min(n_params, total);
  for (std::size_t c = 0; c < report.n_checked; ++c) {
    std::size_t flat = static_cast<std::size_t>(rng() % total);
    std::size_t p = 0;
    while (flat >= params_.at(static_cast<int>(p)).size()) {
      flat -= params_.at(static_cast<int>(p)).size();
      ++p;
    }
    double& theta = params_.at(static_cast<int>(p)).data[flat];
    const double original = theta;
    const double h = 1e-4 * std::max(1.0, std::abs(original));
    theta = original + h;
    const double loss_plus = batch_nll(batch);
    theta = original - h;
    const double loss_minus = batch_nll(batch);
    theta = original;
    const double fd = (loss_plus - loss_minus) / (2.0 * h);
    const double analytic = grads[p].data[flat];
    const double rel =
        std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-3});
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_param = params_.name(static_cast<int>(p));
      report.worst_offset = flat;
    }
  }
  report.pass = report.max_rel_err < tolerance;
  return report;
}

Tensor TstModel::mean_embedding() const {
  const Tensor& table = params_.at(id_embed_);
  Tensor mean(1, table.cols);
  for (std::size_t i = 0; i < table.rows; ++i)
    for (std::size_t j = 0; j < table.cols; ++j) mean.at(0, j) += table.at(i, j);
  for (double& v : mean.data) v /= static_cast<double>(table.rows);
  return mean;
}

namespace {

std::string hex64(double v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, std::bit_cast<std::uint64_t>(v));
  return buf;
}

double from_hex64(const std::string& s) {
  return std::bit_cast<double>(static_cast<std::uint64_t>(std::strtoull(s.c_str(), nullptr, 16)));
}

}  // namespace

void save_checkpoint(const std::string& path, const TstModel& model, const TrainConfig& train,
                     const features::NormStats& stats) {
  std::ofstream out(path);
  if (!out.is_open()) throw DataError("cannot write checkpoint " + path);
  const EmbedConfig& e = model.config();
  out << "tstar-checkpoint 1\n";
  out << "embed " << e.station_count << ' ' << e.station_embed_dim << ' ' << e.global_channels
      << ' ' << e.global_embed_dim << ' ' << e.local_dim << ' ' << e.model_dim << ' ' << e.n_heads
      << ' ' << e.ff_dim << ' ' << e.lookback << ' ' << e.horizon << '\n';
  out << "train " << train.epochs << ' ' << train.batch_size << ' ' << hex64(train.learning_rate)
      << ' ' << hex64(train.dropout) << ' ' << train.encoder_blocks << ' ' << train.hidden_size
      << ' ' << train.seed << ' ' << train.grad_shards << ' ' << train.max_windows_per_epoch << ' '
      << (train.train_shape_head ? 1 : 0) << '\n';
  out << "blocks " << model.encoder_blocks() << '\n';
  out << "stats " << stats.channels.size() << '\n';
  for (const auto& c : stats.channels)
    out << "stat " << c.name << ' ' << hex64(c.mean) << ' ' << hex64(c.std) << ' '
        << (c.degenerate ? 1 : 0) << '\n';
  out << "params " << model.params().count() << '\n';
  for (std::size_t p = 0; p < model.params().count(); ++p) {
    const Tensor& t = model.params().at(static_cast<int>(p));
    out << "tensor " << model.params().name(static_cast<int>(p)) << ' ' << t.rows << ' ' << t.cols
        << '\n';
    for (std::size_t i = 0; i < t.rows; ++i) {
      for (std::size_t j = 0; j < t.cols; ++j) {
        if (j) out << ' ';
        out << hex64(t.at(i, j));
      }
      out << '\n';
    }
  }
  out << "end\n";
  if (!out.good()) throw DataError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in.is_open()) throw DataError("cannot open checkpoint " + path);
  Checkpoint ckpt;
  std::string tag;
  int version = 0;
  in >> tag >> version;
  if (tag != "tstar-checkpoint" || version != 1)
    throw DataError(path + ": not a recognized checkpoint file");

  std::string lr_hex, dr_hex;
  EmbedConfig& e = ckpt.embed;
  in >> tag >> e.station_count >> e.station_embed_dim >> e.global_channels >> e.global_embed_dim >>
      e.local_dim >> e.model_dim >> e.n_heads >> e.ff_dim >> e.lookback >> e.horizon;
  if (tag != "embed") throw DataError(path + ": malformed embed section");
  TrainConfig& tr = ckpt.train;
  int train_r = 1;
  in >> tag >> tr.epochs >> tr.batch_size >> lr_hex >> dr_hex >> tr.encoder_blocks >>
      tr.hidden_size >> tr.seed >> tr.grad_shards >> tr.max_windows_per_epoch >> train_r;
  if (tag != "train") throw DataError(path + ": malformed train section");
  tr.learning_rate = from_hex64(lr_hex);
  tr.dropout = from_hex64(dr_hex);
  tr.train_shape_head = train_r != 0;
  in >> tag >> ckpt.encoder_blocks;
  if (tag != "blocks") throw DataError(path + ": malformed blocks section");

  std::size_t n_stats = 0;
  in >> tag >> n_stats;
  if (tag != "stats") throw DataError(path + ": malformed stats section");
  for (std::size_t i = 0; i < n_stats; ++i) {
    features::ChannelStat stat;
    std::string mean_hex, std_hex;
    int degenerate = 0;
    in >> tag >> stat.name >> mean_hex >> std_hex >> degenerate;
    if (tag != "stat") throw DataError(path + ": malformed stat row");
    stat.mean = from_hex64(mean_hex);
    stat.std = from_hex64(std_hex);
    stat.degenerate = degenerate != 0;
    ckpt.stats.channels.push_back(std::move(stat));
  }

  std::size_t n_params = 0;
  in >> tag >> n_params;
  if (tag != "params") throw DataError(path + ": malformed params section");
  for (std::size_t p = 0; p < n_params; ++p) {
    std::string name;
    std::size_t rows = 0, cols = 0;
    in >> tag >> name >> rows >> cols;
    if (tag != "tensor") throw DataError(path + ": malformed tensor header");
    Tensor t(rows, cols);
    std::string word;
    for (std::size_t i = 0; i < t.size(); ++i) {
      in >> word;
      t.data[i] = from_hex64(word);
    }
    ckpt.names.push_back(std::move(name));
    ckpt.tensors.push_back(std::move(t));
  }
  in >> tag;
  if (tag != "end") throw DataError(path + ": truncated checkpoint");
  return ckpt;
}

TstModel model_from_checkpoint(const Checkpoint& ckpt) {
  TstModel model(ckpt.embed, ckpt.encoder_blocks, 0);
  if (model.params().count() != ckpt.tensors.size())
    throw DataError("checkpoint parameter count mismatch");
  for (std::size_t p = 0; p < ckpt.tensors.size(); ++p) {
    const int idx = model.params().find(ckpt.names[p]);
    if (idx < 0 || !model.params().at(idx).same_shape(ckpt.tensors[p]))
      throw DataError("checkpoint tensor '" + ckpt.names[p] + "' does not match the architecture");
    model.params().at(idx) = ckpt.tensors[p];
  }
  return model;
}

}  // namespace tstar::nn
