#include <malloc.h>

#include "sigmasr_tools/cli.hpp"

int main(int argc, char** argv) {
  // Training allocates and frees the same large buffers every iteration;
  // keeping them in the heap instead of fresh mmaps avoids page-fault churn.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  return sigmasr::tools::run(argc, argv);
}
