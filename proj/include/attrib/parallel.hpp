#pragma once

#include <cstddef>
#include <functional>

namespace attrib {

/// Process-wide worker count for parallel_for. Defaults to the
/// ATTRIB_LAB_WORKERS environment variable, else 1.
std::size_t worker_count();
void set_worker_count(std::size_t workers);

/// Runs body(i) for i in [0, count) on up to worker_count() threads.
///
/// Callers write results into per-index slots and reduce afterwards in index
/// order, which keeps results independent of the worker count. Nested calls
/// from inside a worker run inline. If any body throws, the exception from the
/// lowest failing index is rethrown after all workers finish.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace attrib
