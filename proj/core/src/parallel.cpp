#include "parity/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace parity {

int hardware_threads() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

void for_each_chunk(std::size_t n_items, std::size_t chunk_size, int threads,
                    const std::function<void(const ChunkRange&)>& fn) {
  if (n_items == 0) return;
  if (chunk_size == 0) chunk_size = 1;
  const std::size_t n_chunks = (n_items + chunk_size - 1) / chunk_size;

  auto run_chunk = [&](std::size_t c) {
    ChunkRange r{c, c * chunk_size, std::min(n_items, (c + 1) * chunk_size)};
    fn(r);
  };

  if (threads <= 1 || n_chunks == 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) run_chunk(c);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    while (true) {
      const std::size_t c = next.fetch_add(1);
      if (c >= n_chunks) return;
      try {
        run_chunk(c);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };

  const int n_workers = static_cast<int>(std::min<std::size_t>(threads, n_chunks));
  std::vector<std::thread> pool;
  pool.reserve(n_workers - 1);
  for (int i = 1; i < n_workers; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace parity
