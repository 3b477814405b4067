#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace nbode {

// Worker cap used by parallel_for. Defaults to the NBODE_THREADS environment
// variable if set, else 1.
int thread_count();
void set_thread_count(int n);

// Runs fn(i) for i in [0, n) on up to thread_count() threads. Each index is
// handled exactly once; callers write results into per-index slots so the
// outcome does not depend on scheduling. The first exception thrown is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// Keeps large tape buffers on the heap instead of fresh mmap pages; idempotent.
void tune_allocator();

// SplitMix64 finalizer; used to derive independent stream seeds from a master seed.
std::uint64_t mix_seed(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace nbode
