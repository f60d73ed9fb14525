#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace fieldev {

// Runs fn(k) for k in [0, count) on up to `workers` threads, assigning
// indices round-robin. Rethrows the exception of the lowest failing index.
template <class Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
  const std::size_t w =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), count);
  if (w <= 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  pool.reserve(w);
  for (std::size_t t = 0; t < w; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t k = t; k < count; k += w) {
        try {
          fn(k);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Worker count after applying the FIELDEV_THREADS cap.
int effective_workers(int requested);

}  // namespace fieldev
