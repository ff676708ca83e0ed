#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace quasigraph {

inline std::atomic<unsigned>& default_thread_count() {
  static std::atomic<unsigned> count{1};
  return count;
}

inline void set_default_threads(unsigned n) { default_thread_count().store(std::max(1u, n)); }

/// Runs f(i) for i in [0, n). Each index writes only its own output slot, so
/// results are identical for any thread count. If several indices throw, the
/// exception of the lowest index is rethrown.
template <class F>
void parallel_for(std::size_t n, F&& f, unsigned threads = default_thread_count().load()) {
  if (n == 0) return;
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::min<std::size_t>(n, 1024))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::size_t error_index = n;
  std::exception_ptr error;
  constexpr std::size_t kChunk = 16;
  auto worker = [&] {
    for (;;) {
      const std::size_t begin = next.fetch_add(kChunk);
      if (begin >= n) return;
      const std::size_t end = std::min(n, begin + kChunk);
      for (std::size_t i = begin; i < end; ++i) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (i < error_index) {
            error_index = i;
            error = std::current_exception();
          }
        }
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace quasigraph
