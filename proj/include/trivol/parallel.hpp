// Copyright Contributors to the trivol Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace trivol {

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(begin, end) over a fixed contiguous partition of [0, n). The
// partition depends only on n and the thread count, and callers must write
// to disjoint output slots, so results do not depend on scheduling.
template <class F>
void parallel_for(std::size_t n, int threads, F&& fn) {
  threads = std::min<std::size_t>(std::max(1, threads), n == 0 ? 1 : n);
  if (threads <= 1 || n == 0) {
    fn(static_cast<std::size_t>(0), n);
    return;
  }
  const std::size_t chunk = (n + threads - 1) / threads;
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex err_mutex;
  pool.reserve(threads);
  for (int tid = 0; tid < threads; ++tid) {
    const std::size_t begin = std::min(n, static_cast<std::size_t>(tid) * chunk);
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (std::thread& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace trivol
