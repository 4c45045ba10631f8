#pragma once

#ifdef _OPENMP
#include <omp.h>
#else
inline int omp_get_thread_num() { return 0; }
inline int omp_get_max_threads() { return 1; }
inline void omp_set_num_threads(int) {}
inline int omp_get_num_procs() { return 1; }
inline double omp_get_wtime() { return 0.0; }
#endif

namespace connseg {

// Applies CONNSEG_THREADS if set, otherwise leaves the OpenMP default
// (all available cores). Returns the effective worker count.
int configure_threads_from_env();

}  // namespace connseg
