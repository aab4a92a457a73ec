#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ecgid {

/// Resolves a requested thread count: 0 means "use hardware concurrency".
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Runs fn(i) for i in [begin, end) across worker threads. Work is split into
/// fixed contiguous chunks independent of the thread count, and every result
/// must be written to its own index-addressed slot by the caller, so outputs
/// are identical for any thread count. Exceptions are captured and the first
/// one rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::size_t begin, std::size_t end, int threads, Fn&& fn) {
  const std::size_t n = end > begin ? end - begin : 0;
  if (n == 0) return;
  const int workers = std::min<std::size_t>(resolve_threads(threads), n);
  if (workers <= 1) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
    return;
  }

  std::exception_ptr error;
  std::mutex error_mutex;
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    const std::size_t lo = begin + chunk * static_cast<std::size_t>(w);
    const std::size_t hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Runs fn(slot, lo, hi) over contiguous chunks covering [begin, end), one
/// chunk per worker, slots numbered from 0. Chunk boundaries depend on the
/// thread count, so per-chunk accumulators must be merged with an operation
/// that is a pure function of the combined multiset (merge order and
/// partitioning must not matter) for results to stay thread-count-invariant.
/// Returns the number of slots used.
template <typename Fn>
std::size_t parallel_chunks(std::size_t begin, std::size_t end, int threads,
                            std::size_t max_chunks, Fn&& fn) {
  const std::size_t n = end > begin ? end - begin : 0;
  if (n == 0) return 0;
  std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(resolve_threads(threads)), n);
  workers = std::min(workers, max_chunks);
  if (workers <= 1) {
    fn(std::size_t{0}, begin, end);
    return 1;
  }

  std::exception_ptr error;
  std::mutex error_mutex;
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::size_t slots = 0;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = begin + chunk * w;
    const std::size_t hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    ++slots;
    pool.emplace_back([&, w, lo, hi] {
      try {
        fn(w, lo, hi);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return slots;
}

}  // namespace ecgid
