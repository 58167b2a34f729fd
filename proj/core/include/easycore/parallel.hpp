#pragma once

#include <cstddef>
#include <functional>

namespace easycore {

/// Worker cap: EASYCORE_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

/// Splits [0, n) into contiguous shards and runs fn(begin, end) on each,
/// using up to worker_count() threads. Shard boundaries depend only on n and
/// `grain`, never on the thread count, so callers that write results by index
/// get identical output for any worker cap.
void parallel_for_shards(std::size_t n, std::size_t grain,
                         const std::function<void(std::size_t begin, std::size_t end)>& fn);

/// Keeps large tensor buffers on the heap instead of fresh mmap'd pages,
/// which otherwise dominates run time through page faults. Call once at
/// startup; no-op outside glibc.
void tune_allocator();

}  // namespace easycore
