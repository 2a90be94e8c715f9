#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace vf {

// Static chunking: item i always lands in chunk i*T/n, so per-item outputs are
// identical for any thread count. Callers must only write to per-item slots or
// per-chunk buffers reduced afterwards in chunk order.
inline void parallel_for(int64_t n, int threads, const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  threads = std::max(1, threads);
  if (threads == 1 || n == 1) {
    fn(0, n);
    return;
  }
  const int64_t t = std::min<int64_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(t));
  for (int64_t c = 0; c < t; ++c) {
    const int64_t begin = n * c / t;
    const int64_t end = n * (c + 1) / t;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace vf
