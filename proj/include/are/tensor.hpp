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

#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "are/errors.hpp"

namespace are {

/// Dense row-major f32 tensor. Values are treated as immutable once a
/// tensor leaves the function that built it; mutation helpers exist for
/// construction only.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;

  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), 0.0f);
  }

  Tensor(std::vector<int> s, std::vector<float> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (numel_of(shape) != static_cast<int64_t>(data.size()))
      throw DimensionError("tensor data length does not match shape");
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      if (d <= 0) throw DimensionError("non-positive dimension in shape");
      n *= d;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  float& at(int i) { return data[static_cast<size_t>(i)]; }
  float at(int i) const { return data[static_cast<size_t>(i)]; }
  float& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
  float at(int i, int j) const {
    return data[static_cast<size_t>(i) * shape[1] + j];
  }
  float& at(int i, int j, int k) {
    return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  float at(int i, int j, int k) const {
    return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (float v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  /// Constructor for externally sourced values; rejects NaN/Inf.
  static Tensor from_external(std::vector<int> s, std::vector<float> d) {
    Tensor t(std::move(s), std::move(d));
    if (!t.all_finite())
      throw ValidationError("non-finite value in external tensor payload");
    return t;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<int> s, float v) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
  }

  static Tensor identity(int n) {
    Tensor t({n, n});
    for (int i = 0; i < n; ++i) t.at(i, i) = 1.0f;
    return t;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i)
      os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
  }
};

inline bool operator==(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape && a.data == b.data;
}

/// a[m,k] * b[k,n], plain triple loop with the k-loop innermost hoisted.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw DimensionError("matmul expects 2-D tensors, got " + a.shape_str() +
                         " and " + b.shape_str());
  if (a.shape[1] != b.shape[0])
    throw DimensionError("matmul inner dimensions disagree: " + a.shape_str() +
                         " vs " + b.shape_str());
  const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor out({m, n});
  for (int i = 0; i < m; ++i) {
    float* orow = &out.data[static_cast<size_t>(i) * n];
    for (int p = 0; p < k; ++p) {
      const float av = a.at(i, p);
      const float* brow = &b.data[static_cast<size_t>(p) * n];
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

inline double frob_norm(const Tensor& t) {
  double s = 0.0;
  for (float v : t.data) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

inline double frob_dist(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    double d = static_cast<double>(a.data[i]) - b.data[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace are
