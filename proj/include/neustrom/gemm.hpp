#pragma once

#include <cstddef>
#include <vector>

namespace neustrom::detail {

/// C(m,n) += A(m,k) * B(k,n), all row-major. Four rows of A are processed at
/// a time so the j-loop keeps four independent accumulator streams; this is
/// the only matmul kernel in the library and the training hot path.
inline void gemm_nn(const double* A, const double* B, double* C, int m, int k, int n) {
  int i = 0;
  for (; i + 4 <= m; i += 4) {
    const double* a0 = A + static_cast<size_t>(i + 0) * k;
    const double* a1 = A + static_cast<size_t>(i + 1) * k;
    const double* a2 = A + static_cast<size_t>(i + 2) * k;
    const double* a3 = A + static_cast<size_t>(i + 3) * k;
    double* c0 = C + static_cast<size_t>(i + 0) * n;
    double* c1 = C + static_cast<size_t>(i + 1) * n;
    double* c2 = C + static_cast<size_t>(i + 2) * n;
    double* c3 = C + static_cast<size_t>(i + 3) * n;
    for (int p = 0; p < k; ++p) {
      const double* b = B + static_cast<size_t>(p) * n;
      const double v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
      for (int j = 0; j < n; ++j) {
        const double bj = b[j];
        c0[j] += v0 * bj;
        c1[j] += v1 * bj;
        c2[j] += v2 * bj;
        c3[j] += v3 * bj;
      }
    }
  }
  for (; i < m; ++i) {
    const double* a = A + static_cast<size_t>(i) * k;
    double* c = C + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = a[p];
      const double* b = B + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

/// out(c,r) = in(r,c). `out` must not alias `in`.
inline void transpose(const double* in, double* out, int rows, int cols) {
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out[static_cast<size_t>(c) * rows + r] = in[static_cast<size_t>(r) * cols + c];
}

}  // namespace neustrom::detail
