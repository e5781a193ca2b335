#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace audeeg {

/// Keeps freed activation buffers in the heap instead of returning them to
/// the kernel. Large per-layer tensors otherwise go through mmap/munmap on
/// every batch and the page faults cost about a third of a training step.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_MAX, 0);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace audeeg
