#pragma once

namespace amrt {

// Applies the AMRTOK_THREADS cap (0 or unset = OpenMP default).
// Returns the resulting maximum worker count.
int configure_threads_from_env();

int max_threads();

}  // namespace amrt
