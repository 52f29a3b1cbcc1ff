#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "xunit/runtime.hpp"

int main(int argc, char** argv) {
  xunit::init_runtime(argv);
  return doctest::Context(argc, argv).run();
}
