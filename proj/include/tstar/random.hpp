#pragma once

#include <cstdint>
#include <random>

namespace tstar {

// splitmix64 step; used to derive independent stream seeds from a base seed
// plus structural indices (station, interval, epoch, ...) so that parallel
// work shards stay deterministic regardless of scheduling.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
  return mix64(mix64(mix64(base ^ mix64(a)) ^ mix64(b)) ^ mix64(c));
}

// mt19937_64 is fully specified by the standard, so seeded streams are
// reproducible across toolchains. All distribution transforms below are
// hand-rolled for the same reason.
using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) {
  return (rng() >> 11) * (1.0 / 9007199254740992.0);  // 53-bit mantissa
}

double normal01(Rng& rng);
// Marsaglia-Tsang; shape > 0, scale > 0.
double gamma_draw(Rng& rng, double shape, double scale);
// Chunked CDF inversion, exact for moderate lambda.
std::int64_t poisson_draw(Rng& rng, double lambda);

}  // namespace tstar
