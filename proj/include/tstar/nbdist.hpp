#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tstar/random.hpp"

namespace tstar::nb {

// Mean/shape parameterization: p = mu / (r + mu), variance = mu + mu^2 / r.
struct NegBinParams {
  double mu = 1.0;
  double r = 1.0;
};

void validate(const NegBinParams& params);

// P(X = k) = C(k+r-1, k) (r/(r+mu))^r (mu/(r+mu))^k, evaluated in log space.
double log_pmf(const NegBinParams& params, std::int64_t k);
double pmf(const NegBinParams& params, std::int64_t k);
double log_likelihood(const NegBinParams& params, std::int64_t k);

// (mean, variance) = (mu, mu + mu^2/r).
std::pair<double, double> moments(const NegBinParams& params);

// Gamma-Poisson composition: lambda ~ Gamma(r, mu/r), k ~ Poisson(lambda).
std::int64_t sample_one(const NegBinParams& params, Rng& rng);
std::vector<std::int64_t> sample(const NegBinParams& params, std::size_t n, std::uint64_t seed);

// Smallest K whose CDF reaches 1 - tail_mass (support bound for pmf sums).
std::int64_t support_bound(const NegBinParams& params, double tail_mass);

// d(-log pmf)/dmu and d(-log pmf)/dr, used by the model head's backward pass.
struct NllGrad {
  double nll = 0.0;
  double d_mu = 0.0;
  double d_r = 0.0;
};
NllGrad nll_with_grad(const NegBinParams& params, double k);

double digamma(double x);

}  // namespace tstar::nb
