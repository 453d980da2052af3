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
// Euclidean alignment: whiten trials with the inverse square root of the
// mean spatial covariance. The covariance is raw X X^T -- no mean
// centering, no trace normalization. Test trials must be aligned with a
// state fitted on calibration data only; the evaluation layer enforces
// that structurally.

#pragma once

#include "are/data.hpp"
#include "are/linalg.hpp"
#include "are/tensor.hpp"

namespace are {

struct AlignmentState {
  Tensor r_bar;          // [c,c] mean spatial covariance
  Tensor w;              // [c,c] r_bar^{-1/2}
  int n_trials_used = 0;
};

/// r_bar = (1/N) sum_i X_i X_i^T, accumulated in 64-bit.
inline AlignmentState fit_alignment(const TrialSet& ts) {
  if (ts.trials.empty())
    throw ValidationError("fit_alignment: empty trial set");
  const int c = ts.c, t = ts.t;
  std::vector<double> acc(static_cast<size_t>(c) * c, 0.0);
  for (const auto& tr : ts.trials) {
    const Tensor& x = tr.signal;
    for (int i = 0; i < c; ++i) {
      const float* xi = &x.data[static_cast<size_t>(i) * t];
      for (int j = i; j < c; ++j) {
        const float* xj = &x.data[static_cast<size_t>(j) * t];
        double s = 0.0;
        for (int k = 0; k < t; ++k) s += double(xi[k]) * xj[k];
        acc[static_cast<size_t>(i) * c + j] += s;
      }
    }
  }
  AlignmentState st;
  st.n_trials_used = static_cast<int>(ts.trials.size());
  st.r_bar = Tensor({c, c});
  const double inv_n = 1.0 / static_cast<double>(ts.trials.size());
  for (int i = 0; i < c; ++i)
    for (int j = i; j < c; ++j) {
      const float v = static_cast<float>(acc[static_cast<size_t>(i) * c + j] * inv_n);
      st.r_bar.at(i, j) = v;
      st.r_bar.at(j, i) = v;
    }
  st.w = inv_sqrt_psd(st.r_bar);
  return st;
}

/// Whitens a single trial: returns w * X.
inline Tensor apply_alignment(const AlignmentState& state, const Tensor& x) {
  if (state.w.ndim() != 2 || x.ndim() != 2 || state.w.shape[0] != x.shape[0])
    throw ValidationError("apply_alignment: channel count mismatch");
  return matmul(state.w, x);
}

/// Replaces every trial X with w * X; labels and users untouched.
inline TrialSet apply_alignment(const AlignmentState& state, const TrialSet& ts) {
  if (state.w.ndim() != 2 || state.w.shape[0] != ts.c)
    throw ValidationError("apply_alignment: channel count mismatch");
  TrialSet out = ts;
  for (auto& tr : out.trials) tr.signal = matmul(state.w, tr.signal);
  return out;
}

/// Per-user EA: each user is whitened with their own state before any
/// pooling.
inline TrialSet align_per_user(const TrialSet& ts) {
  TrialSet out = ts;
  std::map<int, std::vector<size_t>> by_user;
  for (size_t i = 0; i < ts.trials.size(); ++i)
    by_user[ts.trials[i].user].push_back(i);
  for (const auto& [user, idx] : by_user) {
    TrialSet sub = ts;
    sub.trials.clear();
    for (size_t i : idx) sub.trials.push_back(ts.trials[i]);
    AlignmentState st = fit_alignment(sub);
    for (size_t i : idx)
      out.trials[i].signal = matmul(st.w, ts.trials[i].signal);
  }
  return out;
}

}  // namespace are
