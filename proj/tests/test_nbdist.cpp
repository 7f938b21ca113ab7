#include <doctest.h>

#include <cmath>

#include "tstar/errors.hpp"
#include "tstar/nbdist.hpp"

using namespace tstar;
using namespace tstar::nb;

TEST_SUITE_BEGIN("nbdist");

TEST_CASE("r = 1 reduces to the geometric distribution") {
  // p = mu/(r+mu) = 0.5, P(k) = (1-p) p^k.
  NegBinParams g{1.0, 1.0};
  CHECK(pmf(g, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(pmf(g, 1) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(pmf(g, 5) == doctest::Approx(0.5 * std::pow(0.5, 5)).epsilon(1e-12));
  CHECK(log_likelihood(g, 0) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("pmf normalizes over a CDF-inverted support") {
  for (auto [mu, r] : {std::pair{0.3, 0.5}, {1.0, 1.0}, {4.0, 2.0}, {25.0, 8.0}, {0.05, 10.0}}) {
    NegBinParams p{mu, r};
    const std::int64_t bound = support_bound(p, 1e-10);
    double total = 0.0;
    for (std::int64_t k = 0; k <= bound; ++k) total += pmf(p, k);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("log_likelihood equals log(pmf) and stays finite for large k") {
  NegBinParams p{3.0, 2.0};
  for (std::int64_t k : {0, 1, 7, 100}) {
    CHECK(log_likelihood(p, k) == doctest::Approx(std::log(pmf(p, k))).epsilon(1e-12));
  }
  CHECK(std::isfinite(log_likelihood(p, 1000000)));
}

TEST_CASE("NLL is stationary in mu at mu = k") {
  // Finite-difference gradient of the NLL in mu vanishes at the observed k.
  const double k = 7.0;
  const double r = 3.0;
  const double h = 1e-6;
  const double up = -log_likelihood({k + h, r}, 7);
  const double down = -log_likelihood({k - h, r}, 7);
  CHECK(std::abs((up - down) / (2 * h)) < 1e-6);
}

TEST_CASE("NLL of zero tends to zero as mu vanishes") {
  CHECK(-log_likelihood({1e-12, 2.0}, 0) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("invalid parameters are rejected") {
  CHECK_THROWS_AS(pmf({0.0, 1.0}, 0), NumericsError);
  CHECK_THROWS_AS(pmf({1.0, -2.0}, 0), NumericsError);
  CHECK(pmf({1.0, 1.0}, -3) == 0.0);
}

TEST_CASE("moments match the closed form") {
  auto [m1, v1] = moments({2.0, 4.0});
  CHECK(m1 == 2.0);
  CHECK(v1 == 3.0);
  auto [m2, v2] = moments({0.5, 0.5});
  CHECK(m2 == 0.5);
  CHECK(v2 == 1.0);
  // Large r approaches the Poisson limit variance = mean.
  auto [m3, v3] = moments({1.0, 1e9});
  CHECK(m3 == 1.0);
  CHECK(v3 == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("sampling is reproducible and matches the analytic moments") {
  NegBinParams p{2.0, 4.0};
  auto a = sample(p, 1000, 99);
  auto b = sample(p, 1000, 99);
  CHECK(a == b);
  CHECK(sample(p, 1, 5).size() == 1);
  CHECK(sample(p, 1, 5)[0] >= 0);

  const std::size_t n = 1000000;
  auto draws = sample(p, n, 2024);
  double mean = 0.0;
  for (auto d : draws) mean += static_cast<double>(d);
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (auto d : draws) var += (static_cast<double>(d) - mean) * (static_cast<double>(d) - mean);
  var /= static_cast<double>(n);
  CHECK(mean == doctest::Approx(2.0).epsilon(0.01));
  CHECK(var == doctest::Approx(3.0).epsilon(0.02));
}

TEST_CASE("sampler frequencies reproduce the pmf (Gamma-Poisson equivalence)") {
  NegBinParams p{1.5, 2.5};
  const std::size_t n = 200000;
  auto draws = sample(p, n, 7);
  std::vector<double> freq(64, 0.0);
  for (auto d : draws)
    if (d < 64) freq[d] += 1.0 / static_cast<double>(n);
  for (std::int64_t k = 0; k < 20; ++k) {
    const double expected = pmf(p, k);
    const double tol = 5.0 * std::sqrt(expected * (1 - expected) / n) + 1e-6;
    CHECK(std::abs(freq[k] - expected) < tol);
  }
}

TEST_CASE("overdispersion: variance >= mean for all valid parameters") {
  for (auto [mu, r] : {std::pair{0.2, 0.1}, {1.0, 100.0}, {8.0, 0.7}, {50.0, 3.0}}) {
    auto [mean, var] = moments({mu, r});
    CHECK(var >= mean);
  }
}

TEST_CASE("log-likelihood is unimodal in mu with its mode at the observation") {
  // The curvature changes sign away from the optimum (convex at k = 0 and in
  // the far right tail), so the sound invariant is quasi-concavity: the slope
  // carries the sign of (k - mu), and the curvature at mu = k is negative.
  const double r = 2.0;
  const double h = 1e-6;
  for (double mu : {0.2, 0.8, 2.0, 9.0}) {
    for (std::int64_t k : {0, 1, 4, 11}) {
      const double slope =
          (log_likelihood({mu + h, r}, k) - log_likelihood({mu - h, r}, k)) / (2 * h);
      if (static_cast<double>(k) > mu + 1e-9) CHECK(slope > 0.0);
      if (static_cast<double>(k) < mu - 1e-9) CHECK(slope < 0.0);
    }
  }
  for (std::int64_t k : {1, 4, 11}) {
    const double mu = static_cast<double>(k);
    const double step = 1e-4 * mu;
    const double f0 = log_likelihood({mu - step, r}, k);
    const double f1 = log_likelihood({mu, r}, k);
    const double f2 = log_likelihood({mu + step, r}, k);
    CHECK((f0 - 2 * f1 + f2) / (step * step) < 0.0);
  }
}

TEST_CASE("nll_with_grad matches finite differences") {
  NegBinParams p{2.3, 1.7};
  const double k = 4.0;
  auto res = nll_with_grad(p, k);
  const double h = 1e-6;
  const double fd_mu =
      (-log_likelihood({p.mu + h, p.r}, 4) + log_likelihood({p.mu - h, p.r}, 4)) / (2 * h);
  const double fd_r =
      (-log_likelihood({p.mu, p.r + h}, 4) + log_likelihood({p.mu, p.r - h}, 4)) / (2 * h);
  CHECK(res.d_mu == doctest::Approx(fd_mu).epsilon(1e-5));
  CHECK(res.d_r == doctest::Approx(fd_r).epsilon(1e-5));
  CHECK(res.nll == doctest::Approx(-log_likelihood(p, 4)).epsilon(1e-12));
}

TEST_SUITE_END();
