#pragma once

#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fedsim {

enum class ExecPolicy { Serial, Parallel };

// Runs body(k) for k in [0, count). Tasks must not share mutable state;
// any cross-task reduction happens after the join, in fixed index order,
// so Serial and Parallel produce bitwise identical results.
template <typename F>
void for_each_task(int count, ExecPolicy exec, F&& body) {
#ifdef _OPENMP
  if (exec == ExecPolicy::Parallel && count > 1) {
    std::exception_ptr first_error = nullptr;
#pragma omp parallel for schedule(dynamic)
    for (int k = 0; k < count; ++k) {
      try {
        body(k);
      } catch (...) {
#pragma omp critical(fedsim_task_error)
        if (!first_error) first_error = std::current_exception();
      }
    }
    if (first_error) std::rethrow_exception(first_error);
    return;
  }
#endif
  (void)exec;
  for (int k = 0; k < count; ++k) body(k);
}

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace fedsim
