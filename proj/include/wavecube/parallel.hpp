#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace wavecube {

namespace detail {
inline std::atomic<unsigned>& thread_budget() {
  static std::atomic<unsigned> n{std::max(1u, std::thread::hardware_concurrency())};
  return n;
}
inline thread_local bool in_parallel_region = false;
}  // namespace detail

/// Upper bound on threads used by `parallel_for` (>= 1).
inline void set_num_threads(unsigned n) { detail::thread_budget() = std::max(1u, n); }
inline unsigned num_threads() { return detail::thread_budget(); }

/// Runs fn(i) for i in [0, count) over contiguous chunks. Each index must write
/// disjoint memory; the result is then independent of the thread count.
/// Nested calls run serially.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const std::size_t workers =
      detail::in_parallel_region ? 1 : std::min<std::size_t>(num_threads(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      detail::in_parallel_region = true;
      try {
        const std::size_t end = std::min(count, (w + 1) * chunk);
        for (std::size_t i = w * chunk; i < end; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace wavecube
