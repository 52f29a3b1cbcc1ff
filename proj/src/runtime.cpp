#include "xunit/runtime.hpp"

#include <cctype>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#ifdef __linux__
#include <malloc.h>
#include <unistd.h>
#endif

extern "C" {
char* openblas_get_corename(void);
void openblas_set_num_threads(int);
}

namespace xunit {

namespace {

std::string cpu_flags() {
  std::ifstream f("/proc/cpuinfo");
  std::string line;
  while (std::getline(f, line))
    if (line.rfind("flags", 0) == 0) return line;
  return {};
}

bool iequals(const char* a, const char* b) {
  for (; *a && *b; ++a, ++b)
    if (std::tolower(*a) != std::tolower(*b)) return false;
  return *a == *b;
}

}  // namespace

void init_runtime(char** argv) {
#ifdef _OPENMP
  if (const char* t = std::getenv("XUNIT_THREADS")) {
    const int cap = std::atoi(t);
    if (cap >= 1 && cap < omp_get_max_threads()) omp_set_num_threads(cap);
  }
#endif
  openblas_set_num_threads(1);
#ifdef __linux__
  // keep the large tape tensors on the heap instead of mmap/munmap cycles;
  // training allocates and frees ~100MB blocks every step
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  if (!std::getenv("OPENBLAS_CORETYPE") && argv) {
    const std::string flags = cpu_flags();
    const char* want = nullptr;
    if (flags.find(" avx512_bf16") != std::string::npos)
      want = "COOPERLAKE";
    else if (flags.find(" avx512f") != std::string::npos)
      want = "SKYLAKEX";
    if (want && !iequals(openblas_get_corename(), want)) {
      setenv("OPENBLAS_CORETYPE", want, 1);
      execv("/proc/self/exe", argv);
      // exec failed; continue with the slow kernel
    }
  }
#endif
}

}  // namespace xunit
