#ifndef RECLINK_PARALLEL_HPP
#define RECLINK_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace reclink {

/// Worker count: RECLINK_WORKERS if set and positive, else the hardware
/// concurrency.
inline std::size_t default_workers() {
  if (const char *env = std::getenv("RECLINK_WORKERS")) {
    try {
      long v = std::stol(env);
      if (v > 0)
        return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs f(i) for i in [0, n) on up to `workers` threads. Results must be
/// written to per-index slots; the first exception thrown is rethrown.
template <class F>
void parallel_for(std::size_t n, std::size_t workers, F &&f) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i)
      f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto body = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n)
        return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure)
          failure = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back(body);
  }
  if (failure)
    std::rethrow_exception(failure);
}

} // namespace reclink

#endif
