#pragma once

#include <cstddef>
#include <functional>

namespace headsplat {

/// Thread count from AVATAR_THREADS, falling back to hardware concurrency.
int default_threads();

/// Runs body(begin, end) over [0, n) split into contiguous chunks. The chunk
/// boundaries depend only on n and `threads`; bodies must write disjoint
/// outputs.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t begin, std::size_t end)>& body);

}  // namespace headsplat
