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
// Training loops for the method ladder: plain cross-entropy, adversarial
// min-max training, the combined objective that adds clean source batches,
// scale augmentation, and seed ensembles. Every entry point is
// bit-reproducible for a fixed seed in single-worker mode.

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "are/adversarial.hpp"
#include "are/autodiff.hpp"
#include "are/data.hpp"
#include "are/model.hpp"
#include "are/rng.hpp"

namespace are {

enum class Objective { ce, adv, adv_plus_source };
enum class Augmentation { none, scale };

struct TrainConfig {
  int epochs = 50;
  int batch_size = 32;
  float learning_rate = 1e-3f;
  float beta1 = 0.9f, beta2 = 0.999f, adam_eps = 1e-8f;
  Objective objective = Objective::ce;
  Augmentation augmentation = Augmentation::none;
  float scale_beta = 0.05f;
  AttackConfig attack = AttackConfig::with_epsilon(0.03f);  // train-time PGD
  uint64_t seed = 0;

  void validate() const {
    if (epochs < 0) throw ValidationError("train: epochs must be >= 0");
    if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
    if (scale_beta < 0.0f || scale_beta >= 1.0f)
      throw ValidationError("train: scale beta must be in [0,1)");
    attack.validate();
  }
};

struct EpochStat {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;  // on the (possibly adversarial) training batches
};

/// Scale augmentation: emits, per input trial, the original and one copy
/// X*(1 + s*beta) with s in {-1,+1} drawn per trial. Output size 2N,
/// labels duplicated.
inline TrialSet augment_scale(const TrialSet& ts, float beta, uint64_t seed) {
  if (beta < 0.0f) throw ValidationError("augment_scale: beta must be >= 0");
  TrialSet out = ts;
  out.trials.clear();
  out.trials.reserve(2 * ts.trials.size());
  Rng rng(seed_mix(seed, "augment"));
  for (const auto& tr : ts.trials) {
    out.trials.push_back(tr);
    Trial scaled = tr;
    const float s = rng.uniform() < 0.5 ? -1.0f : 1.0f;
    const float factor = 1.0f + s * beta;
    for (auto& v : scaled.signal.data) v *= factor;
    out.trials.push_back(std::move(scaled));
  }
  return out;
}

class AdamOptimizer {
 public:
  explicit AdamOptimizer(const TrainConfig& cfg)
      : lr_(cfg.learning_rate), b1_(cfg.beta1), b2_(cfg.beta2),
        eps_(cfg.adam_eps) {}

  void step(ModelParams& params, const std::map<std::string, int>& param_ids,
            Tape& tape) {
    ++t_;
    const double bc1 = 1.0 - std::pow(double(b1_), double(t_));
    const double bc2 = 1.0 - std::pow(double(b2_), double(t_));
    params.for_each_tensor([&](const std::string& name, Tensor& p, bool is_stat) {
      if (is_stat) return;
      const Tensor& g = tape.grad(param_ids.at(name));
      auto& [m, v] = state_[name];
      if (m.data.empty()) {
        m = Tensor::zeros(p.shape);
        v = Tensor::zeros(p.shape);
      }
      for (size_t i = 0; i < p.data.size(); ++i) {
        const float gi = g.data[i];
        m.data[i] = b1_ * m.data[i] + (1.0f - b1_) * gi;
        v.data[i] = b2_ * v.data[i] + (1.0f - b2_) * gi * gi;
        const double mhat = m.data[i] / bc1;
        const double vhat = v.data[i] / bc2;
        p.data[i] -= static_cast<float>(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    });
  }

 private:
  float lr_, b1_, b2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, std::pair<Tensor, Tensor>> state_;
};

namespace detail {

inline Tensor gather_batch(const TrialSet& ts, const std::vector<size_t>& order,
                           size_t begin, size_t end, std::vector<int>* labels) {
  const int c = ts.c, t = ts.t;
  const int b = static_cast<int>(end - begin);
  Tensor batch({b, c, t});
  labels->clear();
  for (size_t i = begin; i < end; ++i) {
    const Trial& tr = ts.trials[order[i]];
    std::copy(tr.signal.data.begin(), tr.signal.data.end(),
              batch.data.begin() + static_cast<long>(i - begin) * c * t);
    labels->push_back(tr.label);
  }
  return batch;
}

}  // namespace detail

/// One full training run. train_set must be pre-aligned. For adversarial
/// objectives each mini-batch is replaced by its PGD counterpart before
/// the gradient step; adv_plus_source additionally draws one clean source
/// batch per step and minimizes the sum of both CE terms (equal weight,
/// epoch length defined by the target set). Scale augmentation, when
/// enabled, doubles the train set before batching using the config seed.
inline ModelParams train(const ModelParams& initial, const ModelConfig& cfg_model,
                         const TrialSet& train_set_in, const TrainConfig& cfg,
                         const TrialSet* perturbed_source = nullptr,
                         std::vector<EpochStat>* stats = nullptr) {
  cfg.validate();
  cfg_model.validate();
  if ((cfg.objective == Objective::adv_plus_source) != (perturbed_source != nullptr))
    throw ValidationError(
        "train: adv_plus_source requires a source set (and only then)");
  if (train_set_in.trials.empty())
    throw ValidationError("train: empty training set");

  const TrialSet train_set =
      cfg.augmentation == Augmentation::scale
          ? augment_scale(train_set_in, cfg.scale_beta, cfg.seed)
          : train_set_in;

  ModelParams params = initial;
  AdamOptimizer opt(cfg);
  Rng shuffle_rng(seed_mix(cfg.seed, "shuffle"));
  Rng source_rng(seed_mix(cfg.seed, "source-shuffle"));

  std::vector<size_t> order(train_set.trials.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<size_t> src_order;
  size_t src_pos = 0;
  if (perturbed_source) {
    src_order.resize(perturbed_source->trials.size());
    for (size_t i = 0; i < src_order.size(); ++i) src_order[i] = i;
    source_rng.shuffle(src_order);
  }

  int64_t step_counter = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    int64_t n_correct = 0, n_seen = 0, n_batches = 0;
    for (size_t begin = 0; begin < order.size();
         begin += static_cast<size_t>(cfg.batch_size)) {
      const size_t end =
          std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
      std::vector<int> labels;
      Tensor xb = detail::gather_batch(train_set, order, begin, end, &labels);

      if (cfg.objective != Objective::ce && cfg.attack.epsilon > 0.0f) {
        AttackConfig atk = cfg.attack;
        atk.seed = seed_mix(seed_mix(cfg.seed, "train-attack"),
                            static_cast<uint64_t>(step_counter));
        xb = pgd_attack_batch(params, cfg_model, xb, labels, atk);
      }

      Tape tape;
      const uint64_t drop_seed = seed_mix(seed_mix(cfg.seed, "dropout"),
                                          static_cast<uint64_t>(step_counter));
      auto fw = forward(tape, cfg_model, params, xb, ForwardMode::train, drop_seed);
      int loss = tape.cross_entropy(fw.logits, labels);

      if (perturbed_source) {
        std::vector<int> src_labels;
        const size_t bsz = static_cast<size_t>(cfg.batch_size);
        std::vector<size_t> pick(bsz);
        for (size_t i = 0; i < bsz; ++i) {
          if (src_pos == src_order.size()) {
            source_rng.shuffle(src_order);
            src_pos = 0;
          }
          pick[i] = src_order[src_pos++];
        }
        std::vector<size_t> identity(bsz);
        for (size_t i = 0; i < bsz; ++i) identity[i] = i;
        TrialSet view = *perturbed_source;
        view.trials.clear();
        for (size_t i : pick) view.trials.push_back(perturbed_source->trials[i]);
        std::vector<int> lbl;
        Tensor sb = detail::gather_batch(view, identity, 0, bsz, &lbl);
        auto fw_src = forward(tape, cfg_model, params, sb, ForwardMode::train,
                              seed_mix(drop_seed, "src"), &fw.param_ids);
        int loss_src = tape.cross_entropy(fw_src.logits, lbl);
        loss = tape.add(loss, loss_src);
      }

      tape.backward(loss);
      epoch_loss += tape.val(loss).at(0);
      // training accuracy from the already-computed logits
      const Tensor& z = tape.val(fw.logits);
      for (int i = 0; i < z.shape[0]; ++i) {
        int best = 0;
        for (int j = 1; j < z.shape[1]; ++j)
          if (z.at(i, j) > z.at(i, best)) best = j;
        if (best + 1 == labels[static_cast<size_t>(i)]) ++n_correct;
        ++n_seen;
      }
      opt.step(params, fw.param_ids, tape);
      ++step_counter;
      ++n_batches;
    }
    if (stats)
      stats->push_back(EpochStat{epoch, epoch_loss / std::max<int64_t>(1, n_batches),
                                 n_seen ? 100.0 * n_correct / n_seen : 0.0});
  }
  return params;
}

/// Identical loop to train(), initialized from a source checkpoint; all
/// layers trainable.
inline ModelParams fine_tune(const Checkpoint& ck, const TrialSet& calibration,
                             const TrainConfig& cfg,
                             std::vector<EpochStat>* stats = nullptr) {
  if (calibration.c != ck.config.c || calibration.t != ck.config.t)
    throw ValidationError("fine_tune: calibration shape does not match checkpoint");
  return train(ck.params, ck.config, calibration, cfg, nullptr, stats);
}

struct EnsembleModel {
  std::vector<std::pair<ModelParams, ModelConfig>> members;
  // aggregation: mean of member softmax probabilities

  void validate() const {
    if (members.empty()) throw ValidationError("ensemble: no members");
    for (const auto& [p, cfg] : members)
      if (cfg.c != members[0].second.c || cfg.t != members[0].second.t ||
          cfg.K != members[0].second.K)
        throw ValidationError("ensemble: members disagree on (c,t,K)");
  }
};

/// Member i trains with seed base_seed + i. When `initial` is given every
/// member starts from it (fine-tuning); otherwise each member gets its own
/// seed-derived initialization. Augmentation re-draws per member through
/// the member seed.
///
/// With a shared starting point and more than one member, each member
/// re-initializes the classifier head from its own seed before training.
/// Fine-tuning alone leaves members nearly identical (the shared feature
/// extractor dominates), which defeats the purpose of a seed ensemble;
/// seed-fresh heads restore genuine member diversity while keeping the
/// transferred features. A 1-member "ensemble" keeps the head so it stays
/// exactly the single fine-tuned model.
inline EnsembleModel train_ensemble(int n_members, uint64_t base_seed,
                                    const ModelConfig& cfg_model,
                                    const std::optional<ModelParams>& initial,
                                    const TrialSet& train_set,
                                    TrainConfig cfg,
                                    const TrialSet* perturbed_source = nullptr) {
  if (n_members < 1) throw ValidationError("ensemble: n_members must be >= 1");
  EnsembleModel ens;
  for (int i = 0; i < n_members; ++i) {
    const uint64_t member_seed = base_seed + static_cast<uint64_t>(i);
    cfg.seed = member_seed;
    ModelParams start =
        initial ? *initial : init_params(cfg_model, member_seed);
    if (initial && n_members > 1) {
      const ModelParams fresh =
          init_params(cfg_model, seed_mix(member_seed, "head"));
      start.dense_w = fresh.dense_w;
      start.dense_b = fresh.dense_b;
    }
    ens.members.emplace_back(
        train(start, cfg_model, train_set, cfg, perturbed_source), cfg_model);
  }
  return ens;
}

/// Mean of member softmax outputs.
inline Tensor ensemble_softmax(const EnsembleModel& ens, const Tensor& batch) {
  ens.validate();
  Tensor acc;
  for (const auto& [params, cfg] : ens.members) {
    Tensor probs = predict_softmax(cfg, params, batch);
    if (acc.data.empty())
      acc = std::move(probs);
    else
      for (size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += probs.data[i];
  }
  const float inv = 1.0f / static_cast<float>(ens.members.size());
  for (auto& v : acc.data) v *= inv;
  return acc;
}

/// Argmax of the averaged softmax; ties break toward the lowest class
/// index. Returns 1-based labels.
inline std::vector<int> ensemble_predict(const EnsembleModel& ens,
                                         const Tensor& batch) {
  Tensor probs = ensemble_softmax(ens, batch);
  std::vector<int> labels(static_cast<size_t>(probs.shape[0]));
  for (int i = 0; i < probs.shape[0]; ++i) {
    int best = 0;
    for (int j = 1; j < probs.shape[1]; ++j)
      if (probs.at(i, j) > probs.at(i, best)) best = j;
    labels[static_cast<size_t>(i)] = best + 1;
  }
  return labels;
}

}  // namespace are
