#include "part/kernels.hpp"

#include <omp.h>

#include <algorithm>

namespace part::kernels {

namespace {

bool go_parallel(MatShape s) {
  return s.m > 1 && s.m * s.k * s.n >= kParallelThreshold && !omp_in_parallel() && omp_get_max_threads() > 1;
}

}  // namespace

void matmul_ref(std::span<const double> a, std::span<const double> b, std::span<double> c, MatShape s,
                bool accumulate) {
  for (std::size_t i = 0; i < s.m; ++i) {
    for (std::size_t j = 0; j < s.n; ++j) {
      double acc = accumulate ? c[i * s.n + j] : 0.0;
      for (std::size_t p = 0; p < s.k; ++p) acc += a[i * s.k + p] * b[p * s.n + j];
      c[i * s.n + j] = acc;
    }
  }
}

void matmul_nt_ref(std::span<const double> a, std::span<const double> b, std::span<double> c, MatShape s,
                   bool accumulate) {
  for (std::size_t i = 0; i < s.m; ++i) {
    for (std::size_t j = 0; j < s.n; ++j) {
      double acc = accumulate ? c[i * s.n + j] : 0.0;
      for (std::size_t p = 0; p < s.k; ++p) acc += a[i * s.k + p] * b[j * s.k + p];
      c[i * s.n + j] = acc;
    }
  }
}

void matmul_tn_ref(std::span<const double> a, std::span<const double> b, std::span<double> c, MatShape s,
                   bool accumulate) {
  for (std::size_t i = 0; i < s.m; ++i) {
    for (std::size_t j = 0; j < s.n; ++j) {
      double acc = accumulate ? c[i * s.n + j] : 0.0;
      for (std::size_t p = 0; p < s.k; ++p) acc += a[p * s.m + i] * b[p * s.n + j];
      c[i * s.n + j] = acc;
    }
  }
}

// Row i of c = sum_p a[i,p] * b[p,:], streamed over contiguous rows of b.
static inline void matmul_row(const double* a, const double* b, double* c, MatShape s, std::size_t i,
                              bool accumulate) {
  double* ci = c + i * s.n;
  if (!accumulate) std::fill(ci, ci + s.n, 0.0);
  const double* ai = a + i * s.k;
  for (std::size_t p = 0; p < s.k; ++p) {
    const double av = ai[p];
    const double* bp = b + p * s.n;
    for (std::size_t j = 0; j < s.n; ++j) ci[j] += av * bp[j];
  }
}

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, MatShape s,
            bool accumulate) {
  const auto m = static_cast<std::ptrdiff_t>(s.m);
  if (go_parallel(s)) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < m; ++i) matmul_row(a.data(), b.data(), c.data(), s, i, accumulate);
  } else {
    for (std::ptrdiff_t i = 0; i < m; ++i) matmul_row(a.data(), b.data(), c.data(), s, i, accumulate);
  }
}

static inline void matmul_nt_row(const double* a, const double* b, double* c, MatShape s, std::size_t i,
                                 bool accumulate) {
  const double* ai = a + i * s.k;
  double* ci = c + i * s.n;
  for (std::size_t j = 0; j < s.n; ++j) {
    const double* bj = b + j * s.k;
    double acc = accumulate ? ci[j] : 0.0;
    for (std::size_t p = 0; p < s.k; ++p) acc += ai[p] * bj[p];
    ci[j] = acc;
  }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, MatShape s,
               bool accumulate) {
  const auto m = static_cast<std::ptrdiff_t>(s.m);
  if (go_parallel(s)) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < m; ++i) matmul_nt_row(a.data(), b.data(), c.data(), s, i, accumulate);
  } else {
    for (std::ptrdiff_t i = 0; i < m; ++i) matmul_nt_row(a.data(), b.data(), c.data(), s, i, accumulate);
  }
}

// Row i of c = sum_p a[p,i] * b[p,:].
static inline void matmul_tn_row(const double* a, const double* b, double* c, MatShape s, std::size_t i,
                                 bool accumulate) {
  double* ci = c + i * s.n;
  if (!accumulate) std::fill(ci, ci + s.n, 0.0);
  for (std::size_t p = 0; p < s.k; ++p) {
    const double av = a[p * s.m + i];
    const double* bp = b + p * s.n;
    for (std::size_t j = 0; j < s.n; ++j) ci[j] += av * bp[j];
  }
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, MatShape s,
               bool accumulate) {
  const auto m = static_cast<std::ptrdiff_t>(s.m);
  if (go_parallel(s)) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < m; ++i) matmul_tn_row(a.data(), b.data(), c.data(), s, i, accumulate);
  } else {
    for (std::ptrdiff_t i = 0; i < m; ++i) matmul_tn_row(a.data(), b.data(), c.data(), s, i, accumulate);
  }
}

}  // namespace part::kernels
