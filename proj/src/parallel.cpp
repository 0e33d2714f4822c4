// SPDX-License-Identifier: Apache-2.0

#include "dreammap/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace dreammap {

int thread_budget() {
  static const int budget = [] {
    const char* env = std::getenv("DREAMMAP_THREADS");
    int value = 0;
    if (env) value = std::atoi(env);
    if (value <= 0) value = static_cast<int>(std::thread::hardware_concurrency());
    return value > 0 ? value : 1;
  }();
  return budget;
}

void parallel_for(int n, const std::function<void(int)>& fn, Exec mode) {
  if (n <= 0) return;
  int workers = mode == Exec::Serial ? 1 : thread_budget();
  if (mode == Exec::Parallel && workers < 2) workers = 2;
  workers = std::min(workers, n);

  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }

  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace dreammap
