#pragma once

// Index-parallel loops over independent work items. Every kernel in the
// library takes an ExecPolicy; the serial path is the reference the
// parallel path must reproduce bit-for-bit.

#include <cstddef>
#include <exception>
#include <limits>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace esotune {

enum class Execution { serial, parallel };

struct ExecPolicy {
  Execution mode = Execution::parallel;
  int jobs = 0;  // 0: OpenMP default

  static ExecPolicy serial() { return {Execution::serial, 1}; }
  static ExecPolicy parallel(int jobs = 0) { return {Execution::parallel, jobs}; }
};

int effective_jobs(const ExecPolicy& policy);

/// Calls body(i) for i in [0, n). Results must be written to slots owned by i.
/// If several items throw, the exception from the smallest index is rethrown,
/// so error reporting does not depend on scheduling.
template <class Body>
void for_each_index(std::size_t n, const ExecPolicy& policy, Body&& body) {
  if (policy.mode == Execution::serial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr first_error;
  std::size_t first_index = std::numeric_limits<std::size_t>::max();
  std::mutex error_mutex;
  const auto count = static_cast<long long>(n);
#ifdef _OPENMP
  const int threads = effective_jobs(policy);
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
#endif
  for (long long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (static_cast<std::size_t>(i) < first_index) {
        first_index = static_cast<std::size_t>(i);
        first_error = std::current_exception();
      }
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace esotune
