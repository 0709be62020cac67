#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace synf {

// Runs fn(chunk) for chunk in [0, n_chunks) on up to n_threads workers.
// Chunking is fixed by the caller and independent of the worker count, so any
// order-sensitive reduction done per chunk (and combined in chunk order
// afterwards) yields bit-identical results for every n_threads.
inline void parallel_chunks(int n_chunks, int n_threads,
                            const std::function<void(int)>& fn) {
  if (n_chunks <= 0) return;
  n_threads = std::max(1, std::min(n_threads, n_chunks));
  if (n_threads == 1) {
    for (int c = 0; c < n_chunks; ++c) fn(c);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      const int c = next.fetch_add(1);
      if (c >= n_chunks) return;
      try {
        fn(c);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(n_threads - 1);
  for (int i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// Row-parallel helper for image rendering: each index has exactly one writer,
// so output is scheduling-independent.
inline void parallel_rows(int n_rows, int n_threads,
                          const std::function<void(int)>& fn) {
  parallel_chunks(n_rows, n_threads, fn);
}

inline int default_threads() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace synf
