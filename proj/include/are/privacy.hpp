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
// User-wise unlearnable perturbations for the perturbed-source scenario,
// plus the user-identification probe used to measure how much identity
// information survives in a trial set.

#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "are/data.hpp"
#include "are/training.hpp"

namespace are {

struct UserPerturbation {
  int user = 0;
  Tensor delta;  // [c, t], added to every trial of this user
};

struct PerturbConfig {
  float rho = 0.3f;  // max|delta| = rho * median per-channel std of that user
  uint64_t seed = 0;

  void validate() const {
    if (!(rho > 0.0f)) throw ValidationError("perturb: rho must be > 0");
  }
};

namespace detail {

/// Median of the per-channel standard deviations pooled over a user's
/// trials (each channel of each trial contributes one value).
inline float median_channel_std(const std::vector<const Trial*>& trials) {
  std::vector<float> stds;
  for (const Trial* tr : trials) {
    Tensor s = channel_std(tr->signal);
    stds.insert(stds.end(), s.data.begin(), s.data.end());
  }
  std::sort(stds.begin(), stds.end());
  const size_t n = stds.size();
  return n % 2 ? stds[n / 2] : 0.5f * (stds[n / 2 - 1] + stds[n / 2]);
}

}  // namespace detail

/// Builds one deterministic perturbation template per user present in the
/// set: a sum of three sinusoids (random frequency within [1, fs/4] Hz,
/// phase, amplitude) mixed through a random unit spatial vector, then
/// scaled so the largest absolute sample equals rho times the user's
/// median channel std. Identical (seed, user) pairs give identical deltas.
inline std::vector<UserPerturbation> generate_user_perturbations(
    const TrialSet& ts, const PerturbConfig& cfg) {
  cfg.validate();
  ts.validate();
  std::map<int, std::vector<const Trial*>> by_user;
  for (const auto& tr : ts.trials) by_user[tr.user].push_back(&tr);

  const float fs = ts.trials.front().sample_rate_hz;
  std::vector<UserPerturbation> out;
  for (const auto& [uid, trials] : by_user) {
    Rng rng(seed_mix(seed_mix(cfg.seed, "user-delta"),
                     static_cast<uint64_t>(uid)));
    // temporal pattern: three sinusoids
    std::vector<float> temporal(static_cast<size_t>(ts.t), 0.0f);
    for (int h = 0; h < 3; ++h) {
      const float f = 1.0f + rng.uniform_f(0.0f, 1.0f) * (fs / 4.0f - 1.0f);
      const float phase = rng.uniform_f(0.0f, 1.0f) * 2.0f * 3.14159265358979f;
      const float amp = 0.5f + rng.uniform_f(0.0f, 1.0f);
      for (int i = 0; i < ts.t; ++i)
        temporal[static_cast<size_t>(i)] +=
            amp * std::sin(2.0f * 3.14159265358979f * f *
                               (static_cast<float>(i) / fs) +
                           phase);
    }
    // spatial mixing: random unit vector over channels
    std::vector<float> spatial(static_cast<size_t>(ts.c));
    double norm = 0.0;
    for (auto& v : spatial) {
      v = static_cast<float>(rng.normal());
      norm += double(v) * v;
    }
    norm = std::sqrt(std::max(norm, 1e-30));
    for (auto& v : spatial) v = static_cast<float>(v / norm);

    Tensor delta({ts.c, ts.t});
    float peak = 0.0f;
    for (int i = 0; i < ts.c; ++i)
      for (int j = 0; j < ts.t; ++j) {
        const float v =
            spatial[static_cast<size_t>(i)] * temporal[static_cast<size_t>(j)];
        delta.at(i, j) = v;
        peak = std::max(peak, std::fabs(v));
      }
    const float target = cfg.rho * detail::median_channel_std(trials);
    const float scale = peak > 0.0f ? target / peak : 0.0f;
    for (auto& v : delta.data) v *= scale;
    out.push_back(UserPerturbation{uid, std::move(delta)});
  }
  return out;
}

/// Adds each user's delta to all of that user's trials. Users without a
/// matching perturbation are an error.
inline TrialSet apply_perturbations(const TrialSet& ts,
                                    const std::vector<UserPerturbation>& deltas) {
  std::map<int, const Tensor*> lookup;
  for (const auto& d : deltas) lookup[d.user] = &d.delta;
  TrialSet out = ts;
  for (auto& tr : out.trials) {
    auto it = lookup.find(tr.user);
    if (it == lookup.end())
      throw ValidationError("apply_perturbations: no delta for user " +
                            std::to_string(tr.user));
    const Tensor& d = *it->second;
    if (d.shape != tr.signal.shape)
      throw DimensionError("apply_perturbations: delta shape mismatch");
    for (size_t i = 0; i < d.data.size(); ++i)
      tr.signal.data[i] += d.data[i];
  }
  return out;
}

struct ProbeResult {
  double train_accuracy = 0.0;  // % on probe_train
  double test_accuracy = 0.0;   // % on probe_test
};

/// Privacy metric: trains a fresh classifier to identify *users* (labels
/// replaced by user ids) on probe_train and reports accuracy on
/// probe_test. High test accuracy means identity leaks.
inline ProbeResult user_id_probe(const TrialSet& probe_train,
                                 const TrialSet& probe_test,
                                 const ModelConfig& cfg_model_in,
                                 const TrainConfig& cfg) {
  std::map<int, int> users;  // user id -> contiguous 1-based class
  for (const auto& tr : probe_train.trials) users.emplace(tr.user, 0);
  if (users.size() < 2)
    throw ValidationError("user_id_probe: need at least 2 users");
  int next = 1;
  for (auto& [uid, cls] : users) cls = next++;

  auto relabel = [&](const TrialSet& ts) {
    TrialSet out = ts;
    out.K = static_cast<int>(users.size());
    for (auto& tr : out.trials) {
      auto it = users.find(tr.user);
      if (it == users.end())
        throw ValidationError("user_id_probe: test user absent from train");
      tr.label = it->second;
    }
    return out;
  };
  const TrialSet train_set = relabel(probe_train);
  const TrialSet test_set = relabel(probe_test);

  ModelConfig cfg_model = cfg_model_in;
  cfg_model.K = static_cast<int>(users.size());
  cfg_model.validate();
  ModelParams params = init_params(cfg_model, seed_mix(cfg.seed, "probe-init"));
  params = train(params, cfg_model, train_set, cfg);

  auto accuracy = [&](const TrialSet& ts) {
    int64_t correct = 0;
    const int c = ts.c, t = ts.t;
    for (const auto& tr : ts.trials) {
      Tensor batch({1, c, t});
      batch.data = tr.signal.data;
      Tensor probs = predict_softmax(cfg_model, params, batch);
      int best = 0;
      for (int j = 1; j < probs.shape[1]; ++j)
        if (probs.at(0, j) > probs.at(0, best)) best = j;
      if (best + 1 == tr.label) ++correct;
    }
    return 100.0 * static_cast<double>(correct) /
           static_cast<double>(ts.trials.size());
  };
  return ProbeResult{accuracy(train_set), accuracy(test_set)};
}

}  // namespace are
