#ifndef QWS_THREADING_HPP
#define QWS_THREADING_HPP

#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace qws {

/// Number of workers to use: explicit request, else hardware concurrency.
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

/// Process items [0, n) in fixed-size blocks handed out to a worker pool.
///
/// Block boundaries depend only on `block` (never on the thread count), so
/// per-block results are reproducible across --threads settings. `fn` is
/// called as fn(block_index, begin, end).
inline void parallel_blocks(std::size_t n, std::size_t block, int threads,
                            const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  if (block == 0) block = 1;
  std::size_t nblocks = (n + block - 1) / block;
  int nt = resolve_threads(threads);
  if (nt <= 1 || nblocks == 1) {
    for (std::size_t b = 0; b < nblocks; ++b) fn(b, b * block, std::min(n, (b + 1) * block));
    return;
  }
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (;;) {
      std::size_t b = next.fetch_add(1);
      if (b >= nblocks) break;
      fn(b, b * block, std::min(n, (b + 1) * block));
    }
  };
  std::vector<std::thread> pool;
  int spawn = std::min<std::size_t>(nt, nblocks);
  pool.reserve(spawn);
  for (int t = 0; t < spawn - 1; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
}

/// Convenience: parallel loop over items when per-item results are written
/// to disjoint slots (no reduction involved).
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t)>& fn) {
  std::size_t block = 256;
  parallel_blocks(n, block, threads, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) fn(i);
  });
}

}  // namespace qws

#endif
