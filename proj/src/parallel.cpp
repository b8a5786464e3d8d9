#include "amrt/parallel.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

namespace amrt {

int configure_threads_from_env() {
  if (const char* env = std::getenv("AMRTOK_THREADS")) {
    try {
      const int requested = std::stoi(env);
      if (requested > 0) omp_set_num_threads(requested);
    } catch (const std::exception&) {
      // ignore malformed values, keep the runtime default
    }
  }
  return omp_get_max_threads();
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace amrt
