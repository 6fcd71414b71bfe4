#pragma once

#include <cstddef>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace duc {

// Worker count: DUC_THREADS caps parallelism, default hardware concurrency.
inline unsigned thread_count() {
  if (const char* env = std::getenv("DUC_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Runs fn(i) for i in [0, n). Work items must be independent; callers
// pre-assign per-item seeds and reduce results in index order so output is
// identical to sequential execution.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const unsigned workers = thread_count();
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace duc
