#include "connseg/parallel.hpp"

#include <cstdlib>
#include <string>

namespace connseg {

int configure_threads_from_env() {
  if (const char* env = std::getenv("CONNSEG_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
  return omp_get_max_threads();
}

}  // namespace connseg
