#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace dscpmd {

// Runs fn(begin, end) over static contiguous chunks of [0, n). With
// threads <= 1 the call runs inline on the calling thread. Chunk boundaries
// depend only on n and the thread count, so reductions that concatenate
// per-chunk results in chunk order are deterministic.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  if (n == 0) return;
  if (threads <= 1 || n == 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::size_t nthreads = static_cast<std::size_t>(threads);
  if (nthreads > n) nthreads = n;
  std::size_t chunk = n / nthreads;
  std::size_t rem = n % nthreads;
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  std::size_t begin = 0;
  for (std::size_t i = 0; i < nthreads; ++i) {
    std::size_t len = chunk + (i < rem ? 1 : 0);
    std::size_t end = begin + len;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    begin = end;
  }
  for (auto& t : pool) t.join();
}

}  // namespace dscpmd
