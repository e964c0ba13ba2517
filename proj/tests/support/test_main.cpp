#include <malloc.h>

#include <gtest/gtest.h>

int main(int argc, char** argv) {
  // Same allocator tuning as the tool: training tests free and reallocate
  // the same large buffers every iteration.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  ::testing::InitGoogleTest(&argc, argv);
  return RUN_ALL_TESTS();
}
