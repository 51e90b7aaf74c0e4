// SPDX-License-Identifier: Apache-2.0
//
// Index-parallel loops whose results do not depend on the thread count.
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace protolens {

/// Worker count: PROTOLENS_THREADS if set to a positive integer, otherwise
/// the hardware concurrency (at least 1).
inline std::size_t thread_count() {
  if (const char* env = std::getenv("PROTOLENS_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls f(i) for i in [0, n). Each index writes only its own output slot,
/// so the result is the same for any number of workers. The exception from
/// the lowest failing chunk is rethrown.
template <typename F>
void parallel_for(std::size_t n, F&& f) {
  const std::size_t workers = std::min(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      const std::size_t begin = n * w / workers, end = n * (w + 1) / workers;
      try {
        for (std::size_t i = begin; i < end; ++i) f(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace protolens
