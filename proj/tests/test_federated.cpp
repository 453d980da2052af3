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

#include <algorithm>

#include "are/data.hpp"
#include "are/federated.hpp"

using namespace are;

namespace {

TrialSet multi_user_set(int users, uint64_t seed) {
  SynthSpec s;
  s.c = ModelConfig::tiny().c;
  s.t = ModelConfig::tiny().t;
  s.K = ModelConfig::tiny().K;
  s.U = users;
  s.trials_per_class_per_user = 6;
  s.seed = seed;
  return generate_synthetic(s);
}

ModelParams params_filled(const ModelConfig& cfg, float value) {
  ModelParams p = init_params(cfg, 0);
  p.for_each_tensor([&](const std::string&, Tensor& t, bool) {
    for (auto& v : t.data) v = value;
  });
  return p;
}

bool all_equal(const ModelParams& a, const ModelParams& b) {
  bool equal = true;
  const_cast<ModelParams&>(a).for_each_tensor(
      [&](const std::string& name, Tensor& ta, bool) {
        const_cast<ModelParams&>(b).for_each_tensor(
            [&](const std::string& name2, Tensor& tb, bool) {
              if (name == name2 && ta.data != tb.data) equal = false;
            });
      });
  return equal;
}

}  // namespace

TEST_CASE("partition_by_user groups and preserves order") {
  const TrialSet ts = multi_user_set(3, 1);
  const auto parts = partition_by_user(ts);
  REQUIRE(parts.size() == 3);
  size_t total = 0;
  for (const auto& [uid, sub] : parts) {
    total += sub.trials.size();
    for (const auto& tr : sub.trials) CHECK(tr.user == uid);
  }
  CHECK(total == ts.trials.size());
  // order within a user matches a filtering loop (oracle)
  for (const auto& [uid, sub] : parts) {
    size_t j = 0;
    for (const auto& tr : ts.trials)
      if (tr.user == uid) {
        CHECK(sub.trials[j].signal.data == tr.signal.data);
        ++j;
      }
    CHECK(j == sub.trials.size());
  }
}

TEST_CASE("aggregate equals the scalar weighted-mean oracle") {
  const ModelConfig cfg = ModelConfig::tiny();
  ClientUpdate u1{1, 1, params_filled(cfg, 1.0f)};
  ClientUpdate u2{2, 3, params_filled(cfg, 5.0f)};
  const ModelParams global = params_filled(cfg, 0.0f);
  ModelParams agg = aggregate(global, {u1, u2}, false);
  // weights 1:3 -> 0.25*1 + 0.75*5 = 4
  agg.for_each_tensor([&](const std::string&, Tensor& t, bool) {
    for (float v : t.data) CHECK(v == Catch::Approx(4.0f).margin(1e-6));
  });
}

TEST_CASE("aggregate: equal weights give the elementwise mean") {
  const ModelConfig cfg = ModelConfig::tiny();
  ClientUpdate u1{1, 4, init_params(cfg, 1)};
  ClientUpdate u2{2, 4, init_params(cfg, 2)};
  ModelParams agg = aggregate(init_params(cfg, 3), {u1, u2}, false);
  bool checked = false;
  agg.for_each_tensor([&](const std::string& name, Tensor& t, bool) {
    if (name != "dense_w") return;
    checked = true;
    for (size_t i = 0; i < t.data.size(); ++i)
      CHECK(t.data[i] ==
            Catch::Approx(0.5f * (u1.params.dense_w.data[i] +
                                  u2.params.dense_w.data[i])).margin(1e-6));
  });
  CHECK(checked);
}

TEST_CASE("aggregate is permutation-invariant bitwise") {
  const ModelConfig cfg = ModelConfig::tiny();
  ClientUpdate u1{1, 2, init_params(cfg, 4)};
  ClientUpdate u2{2, 5, init_params(cfg, 5)};
  ClientUpdate u3{3, 3, init_params(cfg, 6)};
  const ModelParams global = init_params(cfg, 7);
  const ModelParams a = aggregate(global, {u1, u2, u3}, true);
  const ModelParams b = aggregate(global, {u3, u1, u2}, true);
  CHECK(all_equal(a, b));
}

TEST_CASE("aggregate: identical updates reproduce them exactly") {
  const ModelConfig cfg = ModelConfig::tiny();
  const ModelParams ref = init_params(cfg, 8);
  ClientUpdate u1{1, 2, ref}, u2{2, 9, ref};
  const ModelParams agg = aggregate(ref, {u1, u2}, true);
  CHECK(all_equal(agg, ref));
}

TEST_CASE("aggregate is a convex combination elementwise") {
  const ModelConfig cfg = ModelConfig::tiny();
  ClientUpdate u1{1, 2, init_params(cfg, 9)};
  ClientUpdate u2{2, 7, init_params(cfg, 10)};
  ModelParams agg = aggregate(init_params(cfg, 11), {u1, u2}, false);
  bool ok = true;
  agg.for_each_tensor([&](const std::string& name, Tensor& t, bool) {
    Tensor *t1 = nullptr, *t2 = nullptr;
    u1.params.for_each_tensor([&](const std::string& n, Tensor& tt, bool) {
      if (n == name) t1 = &tt;
    });
    u2.params.for_each_tensor([&](const std::string& n, Tensor& tt, bool) {
      if (n == name) t2 = &tt;
    });
    for (size_t i = 0; i < t.data.size(); ++i) {
      const float lo = std::min(t1->data[i], t2->data[i]);
      const float hi = std::max(t1->data[i], t2->data[i]);
      if (t.data[i] < lo - 1e-6f || t.data[i] > hi + 1e-6f) ok = false;
    }
  });
  CHECK(ok);
}

TEST_CASE("exclude_bn_stats leaves global BN statistics bitwise untouched") {
  const ModelConfig cfg = ModelConfig::tiny();
  ModelParams global = init_params(cfg, 12);
  global.bn1.running_mean.data[0] = 0.123456f;
  ClientUpdate u1{1, 2, params_filled(cfg, 3.0f)};
  ClientUpdate u2{2, 2, params_filled(cfg, 7.0f)};
  const ModelParams agg = aggregate(global, {u1, u2}, true);
  CHECK(agg.bn1.running_mean.data == global.bn1.running_mean.data);
  CHECK(agg.bn1.running_var.data == global.bn1.running_var.data);
  CHECK(agg.bn2.running_mean.data == global.bn2.running_mean.data);
  CHECK(agg.bn3.running_var.data == global.bn3.running_var.data);
  // while trainables were averaged
  CHECK(agg.dense_w.data[0] == Catch::Approx(5.0f).margin(1e-6));
}

TEST_CASE("aggregate input validation") {
  const ModelConfig cfg = ModelConfig::tiny();
  const ModelParams global = init_params(cfg, 13);
  CHECK_THROWS_AS(aggregate(global, {}, true), ValidationError);
  ClientUpdate dup1{1, 2, init_params(cfg, 14)};
  ClientUpdate dup2{1, 2, init_params(cfg, 15)};
  CHECK_THROWS_AS(aggregate(global, {dup1, dup2}, true), ValidationError);
  ClientUpdate zero{2, 0, init_params(cfg, 16)};
  CHECK_THROWS_AS(aggregate(global, {dup1, zero}, true), ValidationError);
}

TEST_CASE("client_round with zero local epochs returns the global model") {
  const ModelConfig cfg = ModelConfig::tiny();
  const ModelParams global = init_params(cfg, 17);
  const TrialSet ts = multi_user_set(1, 18);
  FedConfig fc;
  fc.local_epochs = 0;
  const ClientUpdate up = client_round(global, cfg, ts, fc, 0, 1);
  CHECK(all_equal(up.params, global));
  CHECK(up.n_samples == static_cast<int64_t>(ts.trials.size()));
}

TEST_CASE("client_round is deterministic per (seed, round, client)") {
  const ModelConfig cfg = ModelConfig::tiny();
  const ModelParams global = init_params(cfg, 19);
  const TrialSet ts = align_per_user(multi_user_set(1, 20));
  FedConfig fc;
  fc.local_epochs = 1;
  fc.seed = 21;
  const ClientUpdate a = client_round(global, cfg, ts, fc, 2, 1);
  const ClientUpdate b = client_round(global, cfg, ts, fc, 2, 1);
  const ClientUpdate c = client_round(global, cfg, ts, fc, 3, 1);
  CHECK(all_equal(a.params, b.params));
  CHECK(!all_equal(a.params, c.params));
}

TEST_CASE("single-client round equals centralized training (equivalence oracle)") {
  const ModelConfig cfg = ModelConfig::tiny();
  const ModelParams global = init_params(cfg, 22);
  const TrialSet ts = align_per_user(multi_user_set(1, 23));
  FedConfig fc;
  fc.local_epochs = 1;
  fc.seed = 24;
  const ClientUpdate up = client_round(global, cfg, ts, fc, 0, 1);
  TrainConfig direct = fc.local;
  direct.epochs = 1;
  direct.seed = seed_mix(seed_mix(seed_mix(fc.seed, "client"), uint64_t{0}),
                         uint64_t{1});
  CHECK(all_equal(up.params, train(global, cfg, ts, direct)));
}

TEST_CASE("identical clients and seeds: aggregate equals any single update") {
  const ModelConfig cfg = ModelConfig::tiny();
  const ModelParams global = init_params(cfg, 25);
  const TrialSet ts = align_per_user(multi_user_set(1, 26));
  FedConfig fc;
  fc.local_epochs = 1;
  fc.seed = 27;
  // two clients, same data, same per-client stream by construction
  ClientUpdate u1 = client_round(global, cfg, ts, fc, 0, 1);
  ClientUpdate u2 = u1;
  u2.client_id = 2;
  const ModelParams agg = aggregate(global, {u1, u2}, false);
  CHECK(all_equal(agg, u1.params));
}

TEST_CASE("federated_pretrain runs and flags batch BN evaluation") {
  const TrialSet ts = multi_user_set(3, 28);
  ModelConfig cfg = ModelConfig::tiny();
  FedConfig fc;
  fc.rounds = 2;
  fc.local_epochs = 1;
  fc.seed = 29;
  std::vector<RoundStat> log;
  const Checkpoint ck = federated_pretrain(ts, cfg, fc, &log);
  CHECK(ck.config.bn_mode == BnMode::batch);
  REQUIRE(log.size() == 2);
  CHECK(log[0].clients.size() == 3);  // full participation default
  CHECK(std::is_sorted(log[0].clients.begin(), log[0].clients.end()));
  // deterministic
  const Checkpoint again = federated_pretrain(ts, cfg, fc);
  CHECK(all_equal(ck.params, again.params));
}

TEST_CASE("client selection honors the fraction") {
  const TrialSet ts = multi_user_set(4, 30);
  FedConfig fc;
  fc.rounds = 3;
  fc.local_epochs = 0;  // selection bookkeeping only, no training cost
  fc.client_fraction = 0.5f;
  fc.seed = 31;
  std::vector<RoundStat> log;
  (void)federated_pretrain(ts, ModelConfig::tiny(), fc, &log);
  for (const auto& r : log) CHECK(r.clients.size() == 2);  // ceil(0.5*4)
}
