#pragma once

#include <cstddef>
#include <functional>

namespace avs {

// Process-wide worker count. 1 disables the pool entirely.
void set_thread_count(int n);
int thread_count();

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks, one per
// worker, and each index is evaluated exactly once, so any fn that writes
// only to position-i outputs produces bitwise identical results for every
// thread count.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

// Runs a and b concurrently (two independent stream halves), then joins.
void parallel_pair(const std::function<void()>& a, const std::function<void()>& b);

}  // namespace avs
