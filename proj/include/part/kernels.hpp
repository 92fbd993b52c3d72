#pragma once

#include <cstddef>
#include <span>

// Dense matrix kernels. Each product has a serial reference (plain triple loop,
// kept for testing and benchmarking) and a production variant whose row loop is
// OpenMP-parallel. The production variants compute every output row with the same
// instruction sequence regardless of thread count, so results do not depend on
// OMP_NUM_THREADS. When called from inside a parallel region they run serially.
//
// All matrices are row-major. "accumulate" adds into c instead of overwriting it; each
// output element is summed as c + a0*b0 + a1*b1 + ... in that order.

namespace part::kernels {

struct MatShape {
  std::size_t m;  // rows of the output
  std::size_t k;  // contraction length
  std::size_t n;  // cols of the output
};

// c[m,n] (+)= a[m,k] * b[k,n]
void matmul_ref(std::span<const double> a, std::span<const double> b, std::span<double> c, MatShape s,
                bool accumulate);
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, MatShape s,
            bool accumulate);

// c[m,n] (+)= a[m,k] * b[n,k]^T
void matmul_nt_ref(std::span<const double> a, std::span<const double> b, std::span<double> c, MatShape s,
                   bool accumulate);
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, MatShape s,
               bool accumulate);

// c[m,n] (+)= a[k,m]^T * b[k,n]
void matmul_tn_ref(std::span<const double> a, std::span<const double> b, std::span<double> c, MatShape s,
                   bool accumulate);
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, MatShape s,
               bool accumulate);

/// Work (m*k*n) above which the row loop is split across threads.
inline constexpr std::size_t kParallelThreshold = 1u << 16;

}  // namespace part::kernels
