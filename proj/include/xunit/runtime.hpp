#pragma once

namespace xunit {

// Call first thing in main(). Applies the XUNIT_THREADS cap, pins BLAS to
// one thread (outer loops are already parallel), and works around
// OpenBLAS falling back to a slow generic kernel on CPUs whose model
// string it does not recognize (may re-exec the process once to get
// OPENBLAS_CORETYPE in place before the library constructor runs).
void init_runtime(char** argv);

}  // namespace xunit
