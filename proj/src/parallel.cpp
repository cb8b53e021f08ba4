#include "esotune/parallel.hpp"

namespace esotune {

int effective_jobs(const ExecPolicy& policy) {
  if (policy.mode == Execution::serial) return 1;
  if (policy.jobs > 0) return policy.jobs;
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace esotune
