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
// PGD adversarial samples and uniform-noise evaluation samples. Both
// perturbation magnitudes are expressed per channel in units of the
// benign trial's channel standard deviation, which is computed once and
// frozen for the entire attack.

#pragma once

#include <cmath>
#include <vector>

#include "are/autodiff.hpp"
#include "are/model.hpp"
#include "are/rng.hpp"
#include "are/tensor.hpp"

namespace are {

struct AttackConfig {
  float epsilon = 0.03f;  // per-channel radius, in channel-std units
  float alpha = 0.0075f;  // step size, same units; must satisfy alpha <= epsilon
  int steps = 10;
  bool random_start = true;
  uint64_t seed = 0;

  void validate() const {
    if (epsilon < 0.0f) throw ValidationError("attack: epsilon must be >= 0");
    if (alpha > epsilon) throw ValidationError("attack: alpha must be <= epsilon");
    if (steps < 1) throw ValidationError("attack: steps must be >= 1");
  }

  static AttackConfig with_epsilon(float eps, int n_steps = 10,
                                   bool rand_start = true, uint64_t sd = 0) {
    AttackConfig a;
    a.epsilon = eps;
    a.alpha = eps / 4.0f;
    a.steps = n_steps;
    a.random_start = rand_start;
    a.seed = sd;
    return a;
  }
};

struct NoiseConfig {
  float eta = 1.0f;  // multiples of per-channel std
  uint64_t seed = 0;

  void validate() const {
    if (eta < 0.0f) throw ValidationError("noise: eta must be >= 0");
  }
};

/// Population standard deviation per channel (divide by t), two-pass in
/// 64-bit.
inline Tensor channel_std(const Tensor& x) {
  if (x.ndim() != 2) throw ValidationError("channel_std: expects [c,t]");
  const int c = x.shape[0], t = x.shape[1];
  if (t < 2) throw ValidationError("channel_std: need at least 2 samples");
  Tensor out({c});
  for (int i = 0; i < c; ++i) {
    const float* row = &x.data[static_cast<size_t>(i) * t];
    double mean = 0.0;
    for (int j = 0; j < t; ++j) mean += row[j];
    mean /= t;
    double var = 0.0;
    for (int j = 0; j < t; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    out.at(i) = static_cast<float>(std::sqrt(var / t));
  }
  return out;
}

inline float sign0(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

namespace detail {

/// Per-channel radii for a whole batch: radii[b][i] = eps * sigma(X_b(i)).
inline std::vector<Tensor> batch_radii(const Tensor& batch, float eps) {
  const int b = batch.shape[0], c = batch.shape[1], t = batch.shape[2];
  std::vector<Tensor> radii;
  radii.reserve(static_cast<size_t>(b));
  for (int ib = 0; ib < b; ++ib) {
    Tensor x({c, t},
             std::vector<float>(batch.data.begin() + static_cast<long>(ib) * c * t,
                                batch.data.begin() + static_cast<long>(ib + 1) * c * t));
    Tensor sig = channel_std(x);
    for (auto& v : sig.data) v *= eps;
    radii.push_back(std::move(sig));
  }
  return radii;
}

}  // namespace detail

/// PGD on a batch [b,c,t] against the model's eval-time behavior (BN per
/// cfg.bn_mode, no dropout). Initialization adds uniform noise in
/// (-eps_i, +eps_i) per channel when random_start; each step adds
/// alpha_i * sign(grad) and re-projects into the per-channel l-inf ball.
/// Zero-std channels get radius 0 and are never modified. Per-trial
/// randomness derives from (atk.seed, trial index within the batch).
inline Tensor pgd_attack_batch(const ModelParams& params, const ModelConfig& cfg,
                               const Tensor& batch, const std::vector<int>& labels,
                               const AttackConfig& atk) {
  atk.validate();
  if (atk.epsilon == 0.0f) return batch;
  const int b = batch.shape[0], c = batch.shape[1], t = batch.shape[2];
  const auto radii = detail::batch_radii(batch, atk.epsilon);
  const auto alpha = detail::batch_radii(batch, atk.alpha);

  Tensor adv = batch;
  if (atk.random_start) {
    for (int ib = 0; ib < b; ++ib) {
      Rng rng(seed_mix(seed_mix(atk.seed, "pgd-init"), static_cast<uint64_t>(ib)));
      for (int ic = 0; ic < c; ++ic) {
        const float r = radii[static_cast<size_t>(ib)].at(ic);
        float* row = &adv.data[(static_cast<size_t>(ib) * c + ic) * t];
        for (int it = 0; it < t; ++it) row[it] += rng.uniform_f(-r, r);
      }
    }
  }

  ModelParams& p = const_cast<ModelParams&>(params);  // eval pass, no mutation
  for (int step = 0; step < atk.steps; ++step) {
    Tape tape;
    auto fw = forward(tape, cfg, p, adv, ForwardMode::eval);
    int loss = tape.cross_entropy(fw.logits, labels);
    tape.backward(loss);
    const Tensor& g = tape.grad(fw.input);
    for (int ib = 0; ib < b; ++ib)
      for (int ic = 0; ic < c; ++ic) {
        const float r = radii[static_cast<size_t>(ib)].at(ic);
        const float a = alpha[static_cast<size_t>(ib)].at(ic);
        const size_t base = (static_cast<size_t>(ib) * c + ic) * t;
        for (int it = 0; it < t; ++it) {
          float v = adv.data[base + it] + a * sign0(g.data[base + it]);
          const float lo = batch.data[base + it] - r;
          const float hi = batch.data[base + it] + r;
          adv.data[base + it] = std::min(hi, std::max(lo, v));
        }
      }
  }
  return adv;
}

/// Single-trial convenience wrapper.
inline Tensor pgd_attack(const ModelParams& params, const ModelConfig& cfg,
                         const Tensor& x, int label, const AttackConfig& atk) {
  if (x.ndim() != 2) throw ValidationError("pgd_attack: expects [c,t]");
  Tensor batch({1, x.shape[0], x.shape[1]}, x.data);
  Tensor adv = pgd_attack_batch(params, cfg, batch, {label}, atk);
  return Tensor({x.shape[0], x.shape[1]}, std::move(adv.data));
}

/// X' = X + eta * sigma(X(i)) * U(-1,1), rowwise; deterministic per seed.
inline Tensor noisy_sample(const Tensor& x, const NoiseConfig& nz) {
  nz.validate();
  if (x.ndim() != 2) throw ValidationError("noisy_sample: expects [c,t]");
  if (nz.eta == 0.0f) return x;
  const int c = x.shape[0], t = x.shape[1];
  const Tensor sig = channel_std(x);
  Tensor out = x;
  Rng rng(seed_mix(nz.seed, "noise"));
  for (int i = 0; i < c; ++i) {
    const float scale = nz.eta * sig.at(i);
    float* row = &out.data[static_cast<size_t>(i) * t];
    for (int j = 0; j < t; ++j) row[j] += scale * rng.uniform_f(-1.0f, 1.0f);
  }
  return out;
}

}  // namespace are
