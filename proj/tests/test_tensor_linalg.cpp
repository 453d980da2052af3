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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "are/linalg.hpp"
#include "are/rng.hpp"
#include "are/tensor.hpp"

using namespace are;

namespace {

Tensor random_matrix(int r, int c, uint64_t seed) {
  Tensor m({r, c});
  Rng rng(seed);
  for (auto& v : m.data) v = static_cast<float>(rng.normal());
  return m;
}

// Independent oracle: plain ijk triple loop with double accumulation.
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
  const int n = a.shape[0], k = a.shape[1], m = b.shape[1];
  Tensor out({n, m});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += double(a.at(i, p)) * b.at(p, j);
      out.at(i, j) = static_cast<float>(acc);
    }
  return out;
}

Tensor random_spd(int n, uint64_t seed) {
  Tensor m = random_matrix(n, n, seed);
  Tensor spd = matmul_oracle(m, Tensor({n, n}, [&] {
                               // transpose
                               std::vector<float> t(m.data.size());
                               for (int i = 0; i < n; ++i)
                                 for (int j = 0; j < n; ++j)
                                   t[size_t(j) * n + i] = m.at(i, j);
                               return t;
                             }()));
  for (int i = 0; i < n; ++i) spd.at(i, i) += 0.5f;  // well away from singular
  return spd;
}

}  // namespace

TEST_CASE("tensor indexing and construction") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  t.at(1, 2) = 5.0f;
  CHECK(t.data[5] == 5.0f);
  CHECK_THROWS_AS(Tensor({2, 0}), ValidationError);
  CHECK_THROWS_AS(Tensor::from_external({1, 2}, {1.0f, NAN}), ValidationError);
  CHECK(Tensor::identity(3).at(1, 1) == 1.0f);
  CHECK(Tensor::identity(3).at(0, 1) == 0.0f);
}

TEST_CASE("matmul matches a triple-loop oracle") {
  const Tensor a = random_matrix(7, 5, 1);
  const Tensor b = random_matrix(5, 9, 2);
  const Tensor got = matmul(a, b);
  const Tensor want = matmul_oracle(a, b);
  REQUIRE(got.shape == want.shape);
  for (size_t i = 0; i < got.data.size(); ++i)
    CHECK(std::fabs(got.data[i] - want.data[i]) < 1e-4f);
  CHECK_THROWS_AS(matmul(a, random_matrix(4, 2, 3)), DimensionError);
}

TEST_CASE("sym_eig reconstructs the matrix") {
  for (uint64_t seed : {10ull, 11ull, 12ull}) {
    Tensor m = random_matrix(6, 6, seed);
    // symmetrize
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < i; ++j) {
        const float s = 0.5f * (m.at(i, j) + m.at(j, i));
        m.at(i, j) = s;
        m.at(j, i) = s;
      }
    const EigResult e = sym_eig(m);
    // ascending eigenvalues
    for (size_t i = 1; i < e.eigenvalues.data.size(); ++i)
      CHECK(e.eigenvalues.data[i - 1] <= e.eigenvalues.data[i]);
    // V diag(l) V^T == m
    const int n = 6;
    Tensor rec({n, n});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int k = 0; k < n; ++k)
          acc += double(e.eigenvectors.at(i, k)) * e.eigenvalues.at(k) * e.eigenvectors.at(j, k);
        rec.at(i, j) = static_cast<float>(acc);
      }
    CHECK(frob_dist(rec, m) < 1e-4f);
    // orthonormal columns
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int k = 0; k < n; ++k)
          acc += double(e.eigenvectors.at(k, i)) * e.eigenvectors.at(k, j);
        CHECK(std::fabs(acc - (i == j ? 1.0 : 0.0)) < 1e-5);
      }
  }
}

TEST_CASE("sym_eig analytic 2x2") {
  // [[2,1],[1,2]] has eigenvalues 1 and 3.
  const Tensor m({2, 2}, {2.0f, 1.0f, 1.0f, 2.0f});
  const EigResult e = sym_eig(m);
  CHECK(e.eigenvalues.at(0) == Catch::Approx(1.0).margin(1e-6));
  CHECK(e.eigenvalues.at(1) == Catch::Approx(3.0).margin(1e-6));
}

TEST_CASE("sym_eig rejects non-symmetric input") {
  const Tensor m({2, 2}, {1.0f, 2.0f, 0.0f, 1.0f});
  CHECK_THROWS_AS(sym_eig(m), ValidationError);
}

TEST_CASE("inv_sqrt_psd whitens") {
  for (uint64_t seed : {20ull, 21ull}) {
    const int n = 5;
    const Tensor a = random_spd(n, seed);
    const Tensor w = inv_sqrt_psd(a);
    // w * a * w == I
    const Tensor waw = matmul(matmul(w, a), w);
    CHECK(frob_dist(waw, Tensor::identity(n)) < 1e-4f);
  }
  CHECK(frob_dist(inv_sqrt_psd(Tensor::identity(4)), Tensor::identity(4)) < 1e-6f);
}

TEST_CASE("inv_sqrt_psd reports eigenvalue clamping") {
  // rank-1 matrix: one positive eigenvalue, rest clamped
  Tensor m({3, 3});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m.at(i, j) = 1.0f;
  int clamped = 0;
  (void)inv_sqrt_psd(m, &clamped);
  CHECK(clamped == 2);
}
