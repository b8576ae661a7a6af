#pragma once

// Parallelism across independent runs. Each run stays single-threaded and
// deterministic; only whole (config, seed) jobs are farmed out.

#include <atomic>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace minimmit::sim {

// Calls fn(i) for i in [0, jobs) on up to `workers` threads (hardware
// concurrency by default). fn must not throw.
inline void parallel_for(std::size_t jobs, const std::function<void(std::size_t)>& fn,
                         unsigned workers = 0) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, jobs));
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= jobs) return;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace minimmit::sim
