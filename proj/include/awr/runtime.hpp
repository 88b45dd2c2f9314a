#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif
#if defined(__SSE2__)
#include <pmmintrin.h>
#include <xmmintrin.h>
#endif

namespace awr {

/// Keeps minibatch-sized temporaries on the heap instead of fresh mmap
/// regions. Training allocates and frees matrices of a few hundred kilobytes
/// thousands of times per iteration; with glibc defaults each of those is a
/// pair of system calls.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 128 << 20);
#endif
}

/// Treats subnormal doubles as zero on the calling thread. Advantage weights
/// floored at the smallest normal double produce subnormal gradient terms,
/// which x86 cores process through a slow microcode path.
inline void flush_subnormals() {
#if defined(__SSE2__)
  _MM_SET_FLUSH_ZERO_MODE(_MM_FLUSH_ZERO_ON);
  _MM_SET_DENORMALS_ZERO_MODE(_MM_DENORMALS_ZERO_ON);
#endif
}

}  // namespace awr
