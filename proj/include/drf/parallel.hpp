#pragma once

#include <omp.h>

#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <vector>

namespace drf {

/// Serial is the reference path; Parallel must produce bit-identical output.
enum class Execution { serial, parallel };

/// Worker count: DRF_NUM_THREADS if set and positive, else the OpenMP default.
inline int worker_count() {
  if (const char* env = std::getenv("DRF_NUM_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  return omp_get_max_threads();
}

/// Runs body(i) for i in [0, n). Each index writes only its own output slot,
/// so the schedule cannot affect results. The first exception (lowest index)
/// is rethrown after the loop.
template <class Body>
void for_each_index(std::size_t n, Execution ex, Body&& body) {
  if (ex == Execution::serial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  const long long count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic) num_threads(worker_count())
  for (long long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace drf
