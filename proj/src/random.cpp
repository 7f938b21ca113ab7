#include "tstar/random.hpp"

#include <cmath>

namespace tstar {

double normal01(Rng& rng) {
  // Box-Muller, single value per call; discards the sibling to keep the
  // stream position independent of caller interleaving.
  double u1 = uniform01(rng);
  double u2 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

double gamma_draw(Rng& rng, double shape, double scale) {
  if (shape < 1.0) {
    // Boost to shape+1 and correct with u^(1/shape).
    double u = uniform01(rng);
    while (u <= 0.0) u = uniform01(rng);
    return gamma_draw(rng, shape + 1.0, scale) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal01(rng);
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = uniform01(rng);
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
  }
}

namespace {

std::int64_t poisson_inversion(Rng& rng, double lambda) {
  const double l = std::exp(-lambda);
  std::int64_t k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= uniform01(rng);
  } while (p > l);
  return k - 1;
}

}  // namespace

std::int64_t poisson_draw(Rng& rng, double lambda) {
  if (lambda <= 0.0) return 0;
  // Poisson(a+b) = Poisson(a) + Poisson(b): split large rates into chunks
  // that inversion handles without exp() underflow.
  std::int64_t total = 0;
  while (lambda > 30.0) {
    total += poisson_inversion(rng, 30.0);
    lambda -= 30.0;
  }
  return total + poisson_inversion(rng, lambda);
}

}  // namespace tstar
