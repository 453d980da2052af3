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
// Simulated cross-silo federated pretraining: one client per source user,
// sample-weighted FedAvg aggregation, BN statistics held out of the
// average so no per-client activation statistics leave a silo.

#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <vector>

#include <json.hpp>

#include "are/alignment.hpp"
#include "are/training.hpp"

namespace are {

struct FedConfig {
  int rounds = 10;
  int local_epochs = 1;
  float client_fraction = 1.0f;  // clients sampled per round, ceil(f*U)
  bool exclude_bn_stats = true;
  TrainConfig local;  // local optimizer settings; seed is derived per client
  uint64_t seed = 0;

  void validate() const {
    if (rounds < 1) throw ValidationError("federated: rounds must be >= 1");
    if (local_epochs < 0)
      throw ValidationError("federated: local_epochs must be >= 0");
    if (client_fraction <= 0.0f || client_fraction > 1.0f)
      throw ValidationError("federated: client_fraction must be in (0,1]");
    local.validate();
  }
};

struct ClientUpdate {
  int client_id = 0;  // source user id
  int64_t n_samples = 0;
  ModelParams params;
};

struct RoundStat {
  int round = 0;
  std::vector<int> clients;
  double mean_local_loss = 0.0;
};

/// Splits a multi-user set into one per-user set, keyed by user id.
/// Trial order within each client is preserved.
inline std::map<int, TrialSet> partition_by_user(const TrialSet& ts) {
  std::map<int, TrialSet> out;
  for (const auto& tr : ts.trials) {
    auto it = out.find(tr.user);
    if (it == out.end()) {
      TrialSet client = ts;
      client.trials.clear();
      client.U = 1;
      client.name = ts.name + "/user" + std::to_string(tr.user);
      it = out.emplace(tr.user, std::move(client)).first;
    }
    it->second.trials.push_back(tr);
  }
  return out;
}

/// One client's local pass: starts from the broadcast global model and
/// runs local_epochs of the local objective on that client's (pre-aligned)
/// data. The per-client RNG stream is derived from (seed, round, client).
inline ClientUpdate client_round(const ModelParams& global_params,
                                 const ModelConfig& cfg_model,
                                 const TrialSet& client_data,
                                 const FedConfig& cfg, int round, int client_id,
                                 std::vector<EpochStat>* stats = nullptr) {
  TrainConfig local = cfg.local;
  local.epochs = cfg.local_epochs;
  local.seed = seed_mix(seed_mix(seed_mix(cfg.seed, "client"),
                                 static_cast<uint64_t>(round)),
                        static_cast<uint64_t>(client_id));
  ClientUpdate up;
  up.client_id = client_id;
  up.n_samples = static_cast<int64_t>(client_data.trials.size());
  up.params = train(global_params, cfg_model, client_data, local, nullptr, stats);
  return up;
}

/// Sample-weighted FedAvg. Updates are reduced in ascending client id so
/// the floating-point result is bitwise deterministic regardless of the
/// order updates arrived in. With exclude_bn_stats the global BN
/// running_mean/running_var are carried over bitwise from `global`.
inline ModelParams aggregate(const ModelParams& global,
                             std::vector<ClientUpdate> updates,
                             bool exclude_bn_stats = true) {
  if (updates.empty()) throw ValidationError("aggregate: no client updates");
  std::sort(updates.begin(), updates.end(),
            [](const ClientUpdate& a, const ClientUpdate& b) {
              return a.client_id < b.client_id;
            });
  for (size_t i = 1; i < updates.size(); ++i)
    if (updates[i].client_id == updates[i - 1].client_id)
      throw ValidationError("aggregate: duplicate client id");
  double total = 0.0;
  for (const auto& u : updates) {
    if (u.n_samples <= 0)
      throw ValidationError("aggregate: client with no samples");
    total += static_cast<double>(u.n_samples);
  }

  ModelParams out = global;
  // Collect flat views per tensor name, then accumulate in double.
  std::map<std::string, std::vector<const Tensor*>> views;
  std::map<std::string, const Tensor*> mine;
  for (auto& u : updates)
    u.params.for_each_tensor([&](const std::string& name, Tensor& t, bool) {
      views[name].push_back(&t);
    });
  out.for_each_tensor([&](const std::string& name, Tensor& t, bool is_stat) {
    if (is_stat && exclude_bn_stats) return;
    const auto& vs = views.at(name);
    for (const Tensor* v : vs)
      if (v->shape != t.shape)
        throw DimensionError("aggregate: client tensor shape mismatch for " + name);
    for (size_t i = 0; i < t.data.size(); ++i) {
      double acc = 0.0;
      for (size_t u = 0; u < vs.size(); ++u)
        acc += (static_cast<double>(updates[u].n_samples) / total) *
               static_cast<double>(vs[u]->data[i]);
      t.data[i] = static_cast<float>(acc);
    }
  });
  return out;
}

/// Full federated source pretraining. Each client aligns its own data
/// locally (per-user EA); raw trials never cross silo boundaries in this
/// simulation's data flow. The returned checkpoint is flagged
/// bn_mode=batch because the global model never sees honest running
/// statistics.
inline Checkpoint federated_pretrain(const TrialSet& source,
                                     const ModelConfig& cfg_model_in,
                                     const FedConfig& cfg,
                                     std::vector<RoundStat>* log = nullptr) {
  cfg.validate();
  cfg_model_in.validate();
  auto clients = partition_by_user(source);
  if (clients.empty()) throw ValidationError("federated: empty source set");

  // Local Euclidean Alignment inside each silo.
  std::map<int, TrialSet> aligned;
  for (auto& [uid, ts] : clients) {
    AlignmentState st = fit_alignment(ts);
    TrialSet a = ts;
    for (auto& tr : a.trials) tr.signal = apply_alignment(st, tr.signal);
    aligned.emplace(uid, std::move(a));
  }

  std::vector<int> all_ids;
  for (const auto& [uid, _] : aligned) all_ids.push_back(uid);

  ModelConfig cfg_model = cfg_model_in;
  cfg_model.bn_mode = BnMode::batch;
  ModelParams global = init_params(cfg_model, seed_mix(cfg.seed, "init"));

  const int per_round = std::max(
      1, static_cast<int>(std::ceil(cfg.client_fraction *
                                    static_cast<float>(all_ids.size()))));
  for (int r = 0; r < cfg.rounds; ++r) {
    std::vector<int> pool = all_ids;
    Rng pick(seed_mix(seed_mix(cfg.seed, "select"), static_cast<uint64_t>(r)));
    pick.shuffle(pool);
    std::vector<int> chosen(pool.begin(),
                            pool.begin() + std::min<size_t>(pool.size(),
                                                            static_cast<size_t>(per_round)));
    std::sort(chosen.begin(), chosen.end());

    std::vector<ClientUpdate> updates;
    double loss_sum = 0.0;
    int64_t loss_n = 0;
    for (int uid : chosen) {
      std::vector<EpochStat> stats;
      updates.push_back(
          client_round(global, cfg_model, aligned.at(uid), cfg, r, uid, &stats));
      for (const auto& s : stats) {
        loss_sum += s.loss;
        ++loss_n;
      }
    }
    global = aggregate(global, std::move(updates), cfg.exclude_bn_stats);
    if (log)
      log->push_back(RoundStat{r, chosen, loss_n ? loss_sum / loss_n : 0.0});
  }

  Checkpoint ck;
  ck.config = cfg_model;
  ck.params = std::move(global);
  return ck;
}

inline nlohmann::json round_log_json(const std::vector<RoundStat>& log) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : log)
    arr.push_back({{"round", r.round},
                   {"clients", r.clients},
                   {"mean_local_loss", r.mean_local_loss}});
  return arr;
}

}  // namespace are
