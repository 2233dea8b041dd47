#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace dn2n {

/// Keeps large activation buffers on the heap between passes instead of
/// returning them to the OS after every layer. No effect outside glibc.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace dn2n
