// Copyright 2026 The are-bci Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Symmetric eigendecomposition (cyclic Jacobi) and the inverse matrix
// square root used for covariance whitening. Channel counts here are
// small (<= 64), where Jacobi is simple, deterministic and accurate.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "are/tensor.hpp"

namespace are {

struct EigResult {
  Tensor eigenvalues;   // [c], ascending
  Tensor eigenvectors;  // [c,c], columns match eigenvalues
};

namespace detail {

inline void check_symmetric(const Tensor& m, double rel_tol) {
  if (m.ndim() != 2 || m.shape[0] != m.shape[1])
    throw ValidationError("sym_eig expects a square matrix, got " +
                          m.shape_str());
  double scale = 0.0;
  for (float v : m.data) scale = std::max(scale, std::fabs(double(v)));
  if (scale == 0.0) return;
  const int n = m.shape[0];
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (std::fabs(double(m.at(i, j)) - double(m.at(j, i))) > rel_tol * scale)
        throw ValidationError("sym_eig input is not symmetric");
}

}  // namespace detail

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Iteration cap: 100 sweeps; convergence when the off-diagonal norm falls
/// below 1e-10 relative to the matrix norm. All arithmetic in double.
inline EigResult sym_eig(const Tensor& m) {
  detail::check_symmetric(m, 1e-6);
  const int n = m.shape[0];
  std::vector<double> a(static_cast<size_t>(n) * n);
  for (int i = 0; i < n * n; ++i) a[static_cast<size_t>(i)] = m.data[static_cast<size_t>(i)];
  std::vector<double> v(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<size_t>(i) * n + i] = 1.0;

  auto A = [&](int i, int j) -> double& { return a[static_cast<size_t>(i) * n + j]; };
  auto V = [&](int i, int j) -> double& { return v[static_cast<size_t>(i) * n + j]; };

  double norm = 0.0;
  for (double x : a) norm += x * x;
  norm = std::sqrt(norm);
  const double threshold = 1e-10 * std::max(norm, 1e-300);

  bool converged = (n == 1);
  for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += 2.0 * A(i, j) * A(i, j);
    if (std::sqrt(off) < threshold) {
      converged = true;
      break;
    }
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = A(p, q);
        if (apq == 0.0) continue;
        const double app = A(p, p), aqq = A(q, q);
        const double tau = (aqq - app) / (2.0 * apq);
        // smaller-magnitude root for a stable rotation angle
        double t = (tau >= 0.0) ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                : 1.0 / (tau - std::sqrt(1.0 + tau * tau));
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
  if (!converged) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += 2.0 * A(i, j) * A(i, j);
    if (std::sqrt(off) >= threshold)
      throw NumericError("Jacobi eigendecomposition did not converge in 100 sweeps");
  }

  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  std::sort(order.begin(), order.end(),
            [&](int x, int y) { return A(x, x) < A(y, y); });

  EigResult r{Tensor({n}), Tensor({n, n})};
  for (int k = 0; k < n; ++k) {
    const int src = order[static_cast<size_t>(k)];
    r.eigenvalues.at(k) = static_cast<float>(A(src, src));
    for (int i = 0; i < n; ++i)
      r.eigenvectors.at(i, k) = static_cast<float>(V(i, src));
  }
  return r;
}

/// m^{-1/2} for symmetric PSD m. Eigenvalues below 1e-10 * lambda_max are
/// clamped to that floor so rank-deficient covariances (few calibration
/// trials) never produce Inf; each clamp is counted in *clamped if given.
inline Tensor inv_sqrt_psd(const Tensor& m, int* clamped = nullptr) {
  EigResult eig = sym_eig(m);
  const int n = m.shape[0];
  double lmax = 0.0;
  for (int i = 0; i < n; ++i)
    lmax = std::max(lmax, static_cast<double>(eig.eigenvalues.at(i)));
  const double floor_val = (lmax > 0.0) ? 1e-10 * lmax : 1e-30;
  std::vector<double> inv_sqrt(static_cast<size_t>(n));
  int n_clamped = 0;
  for (int i = 0; i < n; ++i) {
    double lam = eig.eigenvalues.at(i);
    if (lam < floor_val) {
      lam = floor_val;
      ++n_clamped;
    }
    inv_sqrt[static_cast<size_t>(i)] = 1.0 / std::sqrt(lam);
  }
  if (clamped) *clamped = n_clamped;

  // W = V diag(1/sqrt(lambda)) V^T, accumulated in double
  Tensor w({n, n});
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < n; ++k)
        s += double(eig.eigenvectors.at(i, k)) * inv_sqrt[static_cast<size_t>(k)] *
             double(eig.eigenvectors.at(j, k));
      w.at(i, j) = static_cast<float>(s);
      w.at(j, i) = static_cast<float>(s);
    }
  }
  return w;
}

}  // namespace are
