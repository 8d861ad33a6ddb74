#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace jepa3d {

// Training allocates and frees the same multi-megabyte buffers every step.
// By default glibc serves those with mmap and hands them back, so each step
// pays page faults on first touch. Keeping them on the heap avoids that.
inline void tune_allocator() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 64 << 20);
    return true;
  }();
  (void)done;
#endif
}

}  // namespace jepa3d
