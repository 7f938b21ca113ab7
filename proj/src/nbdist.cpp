#include "tstar/nbdist.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "tstar/errors.hpp"

namespace tstar::nb {

void validate(const NegBinParams& params) {
  if (!(params.mu > 0.0) || !std::isfinite(params.mu))
    throw NumericsError("negative binomial: mu must be positive, got " + std::to_string(params.mu));
  if (!(params.r > 0.0) || !std::isfinite(params.r))
    throw NumericsError("negative binomial: r must be positive, got " + std::to_string(params.r));
}

double log_pmf(const NegBinParams& params, std::int64_t k) {
  validate(params);
  if (k < 0) return -std::numeric_limits<double>::infinity();
  const double kd = static_cast<double>(k);
  const double r = params.r;
  const double mu = params.mu;
  // log C(k+r-1, k) = lgamma(k+r) - lgamma(r) - lgamma(k+1)
  const double log_coeff = std::lgamma(kd + r) - std::lgamma(r) - std::lgamma(kd + 1.0);
  // r*log(r/(r+mu)) + k*log(mu/(r+mu)) via log1p for small mu/r ratios
  const double log_p = std::log(mu) - std::log(r + mu);
  const double log_1mp = std::log(r) - std::log(r + mu);
  return log_coeff + r * log_1mp + kd * log_p;
}

double pmf(const NegBinParams& params, std::int64_t k) {
  if (k < 0) return 0.0;
  return std::exp(log_pmf(params, k));
}

double log_likelihood(const NegBinParams& params, std::int64_t k) { return log_pmf(params, k); }

std::pair<double, double> moments(const NegBinParams& params) {
  validate(params);
  return {params.mu, params.mu + params.mu * params.mu / params.r};
}

std::int64_t sample_one(const NegBinParams& params, Rng& rng) {
  const double lambda = gamma_draw(rng, params.r, params.mu / params.r);
  return poisson_draw(rng, lambda);
}

std::vector<std::int64_t> sample(const NegBinParams& params, std::size_t n, std::uint64_t seed) {
  validate(params);
  Rng rng(seed);
  std::vector<std::int64_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = sample_one(params, rng);
  return out;
}

std::int64_t support_bound(const NegBinParams& params, double tail_mass) {
  validate(params);
  double cdf = 0.0;
  // Recurrence P(k+1) = P(k) * (k+r)/(k+1) * p avoids re-evaluating lgamma.
  const double p = params.mu / (params.r + params.mu);
  double pk = std::exp(params.r * (std::log(params.r) - std::log(params.r + params.mu)));
  std::int64_t k = 0;
  for (;;) {
    cdf += pk;
    if (cdf >= 1.0 - tail_mass) return k;
    pk *= (static_cast<double>(k) + params.r) / (static_cast<double>(k) + 1.0) * p;
    ++k;
    if (k > (1 << 26)) return k;  // degenerate parameters; caller sees truncated sum
  }
}

double digamma(double x) {
  // Recurrence up to x >= 6, then the asymptotic expansion.
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)));
  return result;
}

NllGrad nll_with_grad(const NegBinParams& params, double k) {
  validate(params);
  const double mu = params.mu;
  const double r = params.r;
  NllGrad out;
  const double log_coeff = std::lgamma(k + r) - std::lgamma(r) - std::lgamma(k + 1.0);
  const double log_p = std::log(mu) - std::log(r + mu);
  const double log_1mp = std::log(r) - std::log(r + mu);
  out.nll = -(log_coeff + r * log_1mp + k * log_p);
  out.d_mu = -(k / mu - (k + r) / (r + mu));
  out.d_r = -(digamma(k + r) - digamma(r) + log_1mp + 1.0 - (r + k) / (r + mu));
  return out;
}

}  // namespace tstar::nb
