#pragma once

namespace emos {

// Caps the number of worker threads used by the OpenMP kernels (0 = runtime
// default).  Thread count never affects results: every kernel writes
// per-item values into an indexed buffer and reductions run serially in
// index order.
void set_max_threads(int n);
int max_threads();

// True when the library was built with OpenMP support.
bool openmp_enabled();

}  // namespace emos
