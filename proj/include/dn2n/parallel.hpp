#pragma once

#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace dn2n {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// handled by exactly one call, so results written to per-index slots do not
/// depend on the worker count.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min(threads, n);
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// Worker count from DN2N_THREADS, or 1 when unset or invalid.
std::size_t threads_from_env();

}  // namespace dn2n
