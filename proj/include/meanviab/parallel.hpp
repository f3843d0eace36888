#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace meanviab {

// Runs fn(begin, end) over [0, n) partitioned into fixed-size chunks.
// The partition does not depend on the thread count, so results written
// into per-index or per-chunk slots are identical for any degree of
// parallelism.
inline void run_chunked(std::size_t n, int threads,
                        const std::function<void(std::size_t, std::size_t)>& fn,
                        std::size_t chunk = 1024) {
  if (n == 0) return;
  if (threads < 1) threads = 1;
  const std::size_t n_chunks = (n + chunk - 1) / chunk;
  if (threads == 1 || n_chunks == 1) {
    for (std::size_t c = 0; c < n_chunks; ++c)
      fn(c * chunk, std::min(n, (c + 1) * chunk));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  auto worker = [&]() {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= n_chunks || failed.load()) return;
      try {
        fn(c * chunk, std::min(n, (c + 1) * chunk));
      } catch (...) {
        if (!failed.exchange(true)) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failed.load() && error) std::rethrow_exception(error);
}

}  // namespace meanviab
