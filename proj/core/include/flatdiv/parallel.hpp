#pragma once

#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace flatdiv {

/// Runs fn(0..n-1), chunked over n_workers threads. Callers are responsible
/// for making iterations independent (per-iteration RngStreams, per-index
/// output slots); results must not depend on execution order.
inline void parallel_for(int n, int n_workers, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  if (n_workers <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = std::min(n_workers, n);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace flatdiv
