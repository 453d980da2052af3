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
#include <map>

#include "are/data.hpp"
#include "are/privacy.hpp"

using namespace are;

namespace {

TrialSet source_set(int users, uint64_t seed) {
  SynthSpec s;
  s.c = 8;
  s.t = 256;
  s.K = 2;
  s.U = users;
  s.trials_per_class_per_user = 4;
  s.seed = seed;
  return generate_synthetic(s);
}

float median_channel_std_oracle(const TrialSet& ts, int user) {
  std::vector<float> stds;
  for (const auto& tr : ts.trials) {
    if (tr.user != user) continue;
    const Tensor s = channel_std(tr.signal);
    stds.insert(stds.end(), s.data.begin(), s.data.end());
  }
  std::sort(stds.begin(), stds.end());
  const size_t n = stds.size();
  return n % 2 ? stds[n / 2] : 0.5f * (stds[n / 2 - 1] + stds[n / 2]);
}

}  // namespace

TEST_CASE("perturbations respect the rho amplitude bound elementwise") {
  const TrialSet ts = source_set(4, 1);
  PerturbConfig pc;
  pc.rho = 0.3f;
  pc.seed = 2;
  const auto deltas = generate_user_perturbations(ts, pc);
  REQUIRE(deltas.size() == 4);
  for (const auto& d : deltas) {
    const float bound = pc.rho * median_channel_std_oracle(ts, d.user);
    float peak = 0.0f;
    for (float v : d.delta.data) {
      CHECK(std::fabs(v) <= bound * (1.0f + 1e-5f));
      peak = std::max(peak, std::fabs(v));
    }
    // normalized so the peak hits the bound
    CHECK(peak == Catch::Approx(bound).epsilon(1e-4));
  }
}

TEST_CASE("perturbations are deterministic per (seed, user) and user-distinct") {
  const TrialSet ts = source_set(3, 3);
  PerturbConfig pc;
  pc.seed = 4;
  const auto a = generate_user_perturbations(ts, pc);
  const auto b = generate_user_perturbations(ts, pc);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].user == b[i].user);
    CHECK(a[i].delta.data == b[i].delta.data);
  }
  CHECK(a[0].delta.data != a[1].delta.data);
  pc.seed = 5;
  const auto c = generate_user_perturbations(ts, pc);
  CHECK(a[0].delta.data != c[0].delta.data);
}

TEST_CASE("pairwise delta correlation is low across 20 users") {
  const TrialSet ts = source_set(20, 6);
  PerturbConfig pc;
  pc.seed = 7;
  const auto deltas = generate_user_perturbations(ts, pc);
  REQUIRE(deltas.size() == 20);
  auto corr = [](const Tensor& a, const Tensor& b) {
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    const size_t n = a.data.size();
    for (size_t i = 0; i < n; ++i) {
      sa += a.data[i];
      sb += b.data[i];
      saa += double(a.data[i]) * a.data[i];
      sbb += double(b.data[i]) * b.data[i];
      sab += double(a.data[i]) * b.data[i];
    }
    const double cov = sab / n - (sa / n) * (sb / n);
    const double va = saa / n - (sa / n) * (sa / n);
    const double vb = sbb / n - (sb / n) * (sb / n);
    return cov / std::sqrt(va * vb);
  };
  double worst = 0.0;
  for (size_t i = 0; i < deltas.size(); ++i)
    for (size_t j = i + 1; j < deltas.size(); ++j)
      worst = std::max(worst, std::fabs(corr(deltas[i].delta, deltas[j].delta)));
  CHECK(worst < 0.3);
}

TEST_CASE("apply_perturbations adds exactly delta and is invertible") {
  const TrialSet ts = source_set(2, 8);
  PerturbConfig pc;
  pc.seed = 9;
  const auto deltas = generate_user_perturbations(ts, pc);
  const TrialSet perturbed = apply_perturbations(ts, deltas);
  std::map<int, const Tensor*> lookup;
  for (const auto& d : deltas) lookup[d.user] = &d.delta;
  for (size_t i = 0; i < ts.trials.size(); ++i) {
    const Tensor& d = *lookup.at(ts.trials[i].user);
    CHECK(perturbed.trials[i].label == ts.trials[i].label);
    CHECK(perturbed.trials[i].user == ts.trials[i].user);
    // output == input + delta, bitwise (same single float addition)
    for (size_t j = 0; j < d.data.size(); ++j)
      CHECK(perturbed.trials[i].signal.data[j] ==
            ts.trials[i].signal.data[j] + d.data[j]);
  }
}

TEST_CASE("apply_perturbations validates user coverage") {
  const TrialSet ts = source_set(3, 10);
  PerturbConfig pc;
  pc.seed = 11;
  auto deltas = generate_user_perturbations(ts, pc);
  deltas.pop_back();  // drop one user's delta
  CHECK_THROWS_AS(apply_perturbations(ts, deltas), ValidationError);
}

TEST_CASE("perturbation config validation") {
  const TrialSet ts = source_set(2, 12);
  PerturbConfig pc;
  pc.rho = 0.0f;
  CHECK_THROWS_AS(generate_user_perturbations(ts, pc), ValidationError);
  pc.rho = -0.1f;
  CHECK_THROWS_AS(generate_user_perturbations(ts, pc), ValidationError);
}

TEST_CASE("user_id_probe rejects fewer than two users") {
  const TrialSet ts = source_set(1, 13);
  TrainConfig tc;
  tc.epochs = 1;
  CHECK_THROWS_AS(user_id_probe(ts, ts, ModelConfig::tiny(), tc), ValidationError);
}
