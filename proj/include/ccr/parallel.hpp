#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace ccr {

// Fixed block partition of [0, n) over `threads` workers. Each worker owns a
// contiguous index range and must write only to its own slots; any reduction
// happens after the join, in index order. This keeps every result independent
// of the thread count.
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  std::size_t t = threads < 1 ? 1 : static_cast<std::size_t>(threads);
  if (t > n) t = n;
  if (t == 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (std::size_t k = 0; k < t; ++k) {
    std::size_t begin = n * k / t;
    std::size_t end = n * (k + 1) / t;
    pool.emplace_back([&body, begin, end] { body(begin, end); });
  }
  for (auto& th : pool) th.join();
}

inline int default_threads() {
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace ccr
