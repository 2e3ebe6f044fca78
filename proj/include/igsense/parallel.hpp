#pragma once

// Deterministic fork-join helper. Work items are indexed and results must be
// written to per-index slots; the thread count (capped by IGSENSE_THREADS)
// then has no effect on the produced bytes.

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace igsense {

inline int thread_cap() {
  int cap = static_cast<int>(std::thread::hardware_concurrency());
  if (cap <= 0) cap = 1;
  if (const char* env = std::getenv("IGSENSE_THREADS")) {
    const int requested = std::atoi(env);
    if (requested >= 1) cap = requested;
  }
  return cap;
}

template <class Fn>
void parallel_for(int n, Fn&& fn, int n_threads = 0) {
  if (n <= 0) return;
  if (n_threads <= 0) n_threads = thread_cap();
  n_threads = std::min(n_threads, n);
  if (n_threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }

  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_threads));
  std::mutex err_mu;
  std::exception_ptr first_error;
  for (int t = 0; t < n_threads; ++t) {
    pool.emplace_back([&, t]() {
      try {
        for (int i = t; i < n; i += n_threads) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace igsense
