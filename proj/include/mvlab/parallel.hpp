#pragma once

#include <cstddef>
#include <functional>

namespace mvlab {

/// Caps the worker pool used by parallel_for (1 = run inline). Results never
/// depend on this value: work items write to disjoint, index-addressed slots.
void set_worker_count(std::size_t n);
[[nodiscard]] std::size_t worker_count();

/// Calls fn(i) for every i in [begin, end), statically chunked over workers.
void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& fn);

}  // namespace mvlab
