#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tstar/features.hpp"
#include "tstar/nbdist.hpp"
#include "tstar/tape.hpp"
#include "tstar/tensor.hpp"

namespace tstar::nn {

// Channel-group widths of the unified per-step feature vector
// [station_embed | dense(globals) | locals | y], concatenated width
// d = station_embed_dim + global_embed_dim + local_dim + 1.
struct EmbedConfig {
  int station_count = 1;
  int station_embed_dim = 8;   // i
  int global_channels = 0;     // raw one-hot/real width fed to the dense layer
  int global_embed_dim = 16;   // s
  int local_dim = 0;           // p
  int model_dim = 32;          // e
  int n_heads = 4;
  int ff_dim = 0;              // 0 -> 2 * model_dim
  int lookback = 24;           // V
  int horizon = 1;             // H

  int concat_dim() const { return station_embed_dim + global_embed_dim + local_dim + 1; }
  int ff() const { return ff_dim > 0 ? ff_dim : 2 * model_dim; }
  void validate() const;
};

struct TrainConfig {
  int epochs = 100;
  int batch_size = 256;
  double learning_rate = 1e-3;
  double dropout = 0.1;
  int encoder_blocks = 2;  // N_E
  int hidden_size = 32;    // model dim e
  std::uint64_t seed = 1;
  int grad_shards = 1;                    // > 1: fixed-order sharded reduction
  std::size_t max_windows_per_epoch = 0;  // 0 = full pass
  bool train_shape_head = true;

  // Soft validation against the documented tuning surface; returns warnings.
  std::vector<std::string> validate() const;
};

// One look-back window. Row j pairs the observed count y at interval u_j with
// the known-in-advance covariates of u_j + 1, so the final row carries the
// target interval's calendar/context. Observation-only local channels stay at
// their own interval.
struct Window {
  int station = -1;                // embedding row; kMeanEmbedding = zero-shot
  std::int64_t target_index = 0;   // grid index of the target interval
  double target = 0.0;
  Tensor y_in;                     // V x 1, normalized
  Tensor globals;                  // V x global_channels
  Tensor locals;                   // V x local_dim
};

inline constexpr int kMeanEmbedding = -1;

// Lazily built training set; implementations construct windows on demand so
// large datasets never materialize at once.
class WindowSource {
 public:
  virtual ~WindowSource() = default;
  virtual std::size_t size() const = 0;
  virtual std::int64_t target_index(std::size_t idx) const = 0;
  virtual Window get(std::size_t idx) const = 0;
};

class SpanWindowSource final : public WindowSource {
 public:
  explicit SpanWindowSource(std::span<const Window> windows) : windows_(windows) {}
  std::size_t size() const override { return windows_.size(); }
  std::int64_t target_index(std::size_t idx) const override { return windows_[idx].target_index; }
  Window get(std::size_t idx) const override { return windows_[idx]; }

 private:
  std::span<const Window> windows_;
};

struct ForecastDistribution {
  nb::NegBinParams params;
  std::vector<std::int64_t> samples;
  double point = 0.0;  // nearest-rank median of the samples
  double lo = 0.0;     // 5th percentile
  double hi = 0.0;     // 95th percentile
  double sample_sigma = 0.0;
  double analytic_sigma = 0.0;
};

ForecastDistribution make_forecast(const nb::NegBinParams& params, std::size_t n_samples,
                                   std::uint64_t seed);
double nearest_rank(std::span<const double> sorted, double percentile);

struct TrainResult {
  std::vector<double> epoch_nll;
};

struct GradCheckReport {
  std::size_t n_checked = 0;
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_offset = 0;
  double tolerance = 0.0;
  bool pass = false;
};

struct ForwardTrace {
  std::vector<Tensor> attention;  // one row-stochastic map per (block, head)
};

class ParamSet {
 public:
  int add(const std::string& name, std::size_t rows, std::size_t cols);
  int find(const std::string& name) const;
  Tensor& at(int idx) { return values_[idx]; }
  const Tensor& at(int idx) const { return values_[idx]; }
  const std::string& name(int idx) const { return names_[idx]; }
  std::size_t count() const { return values_.size(); }
  std::size_t total_scalars() const;
  std::vector<Tensor> zeros_like() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

// Encoder-only time-series transformer with a Negative Binomial head.
class TstModel {
 public:
  TstModel(const EmbedConfig& cfg, int encoder_blocks, std::uint64_t init_seed);

  const EmbedConfig& config() const { return cfg_; }
  int encoder_blocks() const { return blocks_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  nb::NegBinParams distribution_params(const Window& window, ForwardTrace* trace = nullptr) const;
  ForecastDistribution predict(const Window& window, std::size_t n_samples,
                               std::uint64_t seed) const;

  // Unified per-step embedding rows (pre positional encoding) and the
  // contextualized encoder output; exposed for verification.
  Tensor embed_sequence(const Window& window) const;
  Tensor encode(const Window& window, ForwardTrace* trace = nullptr) const;

  // max_target_index >= 0 asserts that no window's target lies past it.
  TrainResult train(const WindowSource& data, const TrainConfig& cfg,
                    std::int64_t max_target_index = -1);
  TrainResult train(std::span<const Window> data, const TrainConfig& cfg,
                    std::int64_t max_target_index = -1);

  GradCheckReport gradient_check(std::span<const Window> batch, double tolerance,
                                 std::size_t n_params = 64, std::uint64_t seed = 7,
                                 const std::function<void(std::vector<Tensor>&)>& mutate_grads =
                                     nullptr);

  Tensor mean_embedding() const;

  // Positional encoding row: PE[2j] = sin(pos / 10000^(2j/e)), PE[2j+1] = cos.
  static Tensor positional_encoding(std::size_t positions, std::size_t dim);

 private:
  struct BlockIds {
    int wq, wk, wv, wo, bo, ln1_g, ln1_b, ff_w1, ff_b1, ff_w2, ff_b2, ln2_g, ln2_b;
  };
  struct HeadEnds {
    Tape::Id mu;
    Tape::Id r;
  };

  Tape::Id build_embed(Tape& tape, const Window& window, std::vector<Tensor>* grads) const;
  Tape::Id build_encoder(Tape& tape, Tape::Id embedded, std::vector<Tensor>* grads,
                         Rng* dropout_rng, double dropout, ForwardTrace* trace) const;
  HeadEnds build_forward(Tape& tape, const Window& window, std::vector<Tensor>* grads,
                         Rng* dropout_rng, double dropout, ForwardTrace* trace) const;
  double batch_nll(std::span<const Window> batch) const;

  EmbedConfig cfg_;
  int blocks_ = 0;
  ParamSet params_;
  Tensor pe_;
  int id_embed_, id_wg_, id_bg_, id_we_, id_be_;
  std::vector<BlockIds> block_ids_;
  int id_head_mu_w_, id_head_mu_b_, id_head_r_w_, id_head_r_b_;
};

struct Checkpoint {
  EmbedConfig embed;
  TrainConfig train;
  int encoder_blocks = 0;
  features::NormStats stats;
  // Model parameters, bit-exact.
  std::vector<std::string> names;
  std::vector<Tensor> tensors;
};

void save_checkpoint(const std::string& path, const TstModel& model, const TrainConfig& train,
                     const features::NormStats& stats);
Checkpoint load_checkpoint(const std::string& path);
TstModel model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace tstar::nn
