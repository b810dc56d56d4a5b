// Deterministic fork-join helper. Work is cut into fixed-size chunks keyed by
// chunk index; callers merge per-chunk results in ascending index order, so
// floating point reductions do not depend on the worker count.
#pragma once

#include <cstddef>
#include <functional>

namespace parity {

struct ChunkRange {
  std::size_t index;  // chunk index, 0-based
  std::size_t begin;  // first item
  std::size_t end;    // one past last item
};

// Runs fn over ceil(n_items/chunk_size) chunks using up to `threads` workers
// (threads <= 1 runs inline). fn must only touch per-chunk state.
void for_each_chunk(std::size_t n_items, std::size_t chunk_size, int threads,
                    const std::function<void(const ChunkRange&)>& fn);

int hardware_threads();

}  // namespace parity
