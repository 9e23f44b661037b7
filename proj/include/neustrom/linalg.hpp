#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "neustrom/tensor.hpp"

namespace neustrom {

struct EigResult {
  Tensor eigenvalues;   // (r), ascending
  Tensor eigenvectors;  // (r x r), column k pairs with eigenvalue k
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Rotations are
/// applied until the off-diagonal Frobenius mass falls below 1e-14 of the
/// total, which at the r <= a-few-hundred sizes used here converges in a
/// handful of sweeps.
inline EigResult jacobi_eigh(const Tensor& mat) {
  if (mat.rank() != 2 || mat.dim(0) != mat.dim(1))
    throw std::invalid_argument("jacobi_eigh: matrix must be square, got " + shape_str(mat.shape()));
  const int n = mat.dim(0);
  std::vector<double> a(mat.values());
  std::vector<double> v(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<size_t>(i) * n + i] = 1.0;

  auto A = [&](int r, int c) -> double& { return a[static_cast<size_t>(r) * n + c]; };
  auto V = [&](int r, int c) -> double& { return v[static_cast<size_t>(r) * n + c]; };

  double total = 0.0;
  for (double x : a) {
    if (!std::isfinite(x)) throw std::runtime_error("jacobi_eigh: non-finite input");
    total += x * x;
  }
  const double tol = 1e-14 * std::sqrt(std::max(total, 1e-300));

  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
    if (std::sqrt(2.0 * off) <= tol) break;

    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = A(p, q);
        if (std::abs(apq) <= tol / (n * n)) continue;
        const double tau = (A(q, q) - A(p, p)) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = V(k, p), vkq = V(k, q);
          V(k, p) = c * vkp - s * vkq;
          V(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  // sort ascending by eigenvalue, permuting eigenvector columns alongside
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return A(x, x) < A(y, y); });

  Tensor evals = Tensor::zeros({n});
  Tensor evecs = Tensor::zeros({n, n});
  for (int k = 0; k < n; ++k) {
    const int src = order[static_cast<size_t>(k)];
    evals[k] = A(src, src);
    for (int r = 0; r < n; ++r) evecs.at(r, k) = V(r, src);
  }
  return {std::move(evals), std::move(evecs)};
}

/// (M + eps I)^(-1/2) for a symmetric positive semidefinite M, via the
/// eigendecomposition. A shifted eigenvalue at or below zero is reported with
/// a condition-number diagnostic instead of silently producing NaNs.
inline Tensor inverse_sqrt_psd(const Tensor& mat, double eps) {
  EigResult eig = jacobi_eigh(mat);
  const int n = mat.dim(0);
  const double lo = eig.eigenvalues[0] + eps;
  const double hi = eig.eigenvalues[n - 1] + eps;
  if (!(lo > 0.0))
    throw std::runtime_error(
        "inverse_sqrt_psd: matrix not positive definite after regularization (shifted spectrum [" +
        std::to_string(lo) + ", " + std::to_string(hi) +
        "], condition " + std::to_string(hi / std::max(lo, 1e-300)) + ")");
  // B = V diag((lambda+eps)^(-1/2)) V^T
  Tensor out = Tensor::zeros({n, n});
  std::vector<double> scaled(static_cast<size_t>(n));
  for (int r = 0; r < n; ++r) {
    for (int k = 0; k < n; ++k)
      scaled[static_cast<size_t>(k)] =
          eig.eigenvectors.at(r, k) / std::sqrt(eig.eigenvalues[k] + eps);
    for (int c = 0; c < n; ++c) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += scaled[static_cast<size_t>(k)] * eig.eigenvectors.at(c, k);
      out.at(r, c) = acc;
    }
  }
  return out;
}

/// Singular values of A (descending), computed from the eigenvalues of the
/// smaller Gram matrix.
inline std::vector<double> singular_values(const Tensor& mat) {
  if (mat.rank() != 2) throw std::invalid_argument("singular_values: need a matrix");
  const int m = mat.dim(0), n = mat.dim(1);
  const bool rows_smaller = m <= n;
  const int k = rows_smaller ? m : n;
  Tensor gram = Tensor::zeros({k, k});
  for (int i = 0; i < k; ++i)
    for (int j = i; j < k; ++j) {
      double acc = 0.0;
      if (rows_smaller) {
        for (int t = 0; t < n; ++t) acc += mat.at(i, t) * mat.at(j, t);
      } else {
        for (int t = 0; t < m; ++t) acc += mat.at(t, i) * mat.at(t, j);
      }
      gram.at(i, j) = acc;
      gram.at(j, i) = acc;
    }
  EigResult eig = jacobi_eigh(gram);
  std::vector<double> sv(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) sv[static_cast<size_t>(i)] = std::sqrt(std::max(eig.eigenvalues[k - 1 - i], 0.0));
  return sv;
}

}  // namespace neustrom
