#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace tstar {

// Runs fn(0..n-1) on up to `jobs` workers. Callers write results into
// per-index slots, so the merged output is identical for any worker count.
inline void parallel_for(int jobs, std::size_t n, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace tstar
