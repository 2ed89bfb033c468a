#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace lvt {

// LVT_THREADS caps worker count; defaults to the hardware.
inline int thread_cap() {
  static const int cap = [] {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
    if (const char* env = std::getenv("LVT_THREADS")) {
      const int v = std::atoi(env);
      if (v >= 1) return std::min(v, 64);
    }
    return hw;
  }();
  return cap;
}

// Runs fn(i) for i in [0,n). Each index is handled by exactly one worker and
// does its own single-threaded work, so results do not depend on the worker
// count; callers combine per-index outputs in index order.
inline void parallel_for(int n, const std::function<void(int)>& fn, int worker_override = 0) {
  const int workers = std::min(worker_override > 0 ? worker_override : thread_cap(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  std::atomic<int> next{0};
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const int i = next.fetch_add(1);
        if (i >= n) break;
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace lvt
