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
// Compact convolutional EEG classifier (EEGNet-family miniature):
// temporal conv -> BN -> depthwise spatial conv -> BN -> ELU -> pool ->
// dropout -> separable temporal conv -> BN -> ELU -> pool -> dropout ->
// dense. Evaluation can normalize with running statistics or with the
// current batch (the policy federated-pretrained models use).

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "are/alignment.hpp"
#include "are/autodiff.hpp"
#include "are/errors.hpp"
#include "are/rng.hpp"
#include "are/tensor.hpp"

namespace are {

enum class BnMode { running, batch };
enum class ForwardMode { train, eval };

struct ModelConfig {
  int c = 8, t = 512, K = 4;
  int temporal_filters = 4;    // F1
  int depth_multiplier = 2;    // D
  int temporal_kernel_len = 32;
  int sep_kernel_len = 16;
  int pool1 = 4, pool2 = 8;
  float dropout_rate = 0.25f;
  BnMode bn_mode = BnMode::running;

  int f2() const { return temporal_filters * depth_multiplier; }
  int t_out() const { return t / pool1 / pool2; }
  int features_out() const { return f2() * t_out(); }

  void validate() const {
    if (c < 1 || t < 1 || K < 2) throw ValidationError("model config: bad c/t/K");
    if (temporal_filters < 1 || depth_multiplier < 1)
      throw ValidationError("model config: F1 and D must be >= 1");
    if (temporal_kernel_len < 1 || sep_kernel_len < 1)
      throw ValidationError("model config: kernel lengths must be >= 1");
    if (pool1 < 1 || pool2 < 1 || t % pool1 != 0 || (t / pool1) % pool2 != 0)
      throw ValidationError("model config: pool sizes must divide the time axis");
    if (dropout_rate < 0.0f || dropout_rate >= 1.0f)
      throw ValidationError("model config: dropout rate in [0,1)");
  }

  static ModelConfig tiny() {
    ModelConfig cfg;
    cfg.c = 4;
    cfg.t = 32;
    cfg.K = 2;
    cfg.temporal_filters = 2;
    cfg.depth_multiplier = 1;
    cfg.temporal_kernel_len = 8;
    cfg.sep_kernel_len = 4;
    cfg.pool1 = 4;
    cfg.pool2 = 8;
    return cfg;
  }
};

struct ModelParams {
  Tensor conv_temporal;  // [F1, kern_t]
  Tensor conv_spatial;   // [F1, D, c]
  Tensor sep_depth;      // [F2, kern_sep]
  Tensor sep_point;      // [F2, F2]
  Tensor dense_w;        // [features_out, K]
  Tensor dense_b;        // [K]
  BnLayer bn1, bn2, bn3;

  /// Visits every named tensor; is_bn_stat marks running mean/var, which
  /// are state rather than trainable parameters.
  template <typename F>
  void for_each_tensor(F&& fn) {
    fn("conv_temporal", conv_temporal, false);
    fn("conv_spatial", conv_spatial, false);
    fn("sep_depth", sep_depth, false);
    fn("sep_point", sep_point, false);
    fn("dense_w", dense_w, false);
    fn("dense_b", dense_b, false);
    BnLayer* layers[3] = {&bn1, &bn2, &bn3};
    const char* names[3] = {"bn1", "bn2", "bn3"};
    for (int i = 0; i < 3; ++i) {
      fn(std::string(names[i]) + ".gamma", layers[i]->gamma, false);
      fn(std::string(names[i]) + ".beta", layers[i]->beta, false);
      fn(std::string(names[i]) + ".running_mean", layers[i]->running_mean, true);
      fn(std::string(names[i]) + ".running_var", layers[i]->running_var, true);
    }
  }

  template <typename F>
  void for_each_tensor(F&& fn) const {
    const_cast<ModelParams*>(this)->for_each_tensor(
        [&](const std::string& n, Tensor& t, bool s) {
          fn(n, static_cast<const Tensor&>(t), s);
        });
  }

  void check_shapes(const ModelConfig& cfg) const {
    const int f1 = cfg.temporal_filters, f2 = cfg.f2();
    auto expect = [](const Tensor& t, std::vector<int> s, const char* name) {
      if (t.shape != s)
        throw ValidationError(std::string("params: bad shape for ") + name);
    };
    expect(conv_temporal, {f1, cfg.temporal_kernel_len}, "conv_temporal");
    expect(conv_spatial, {f1, cfg.depth_multiplier, cfg.c}, "conv_spatial");
    expect(sep_depth, {f2, cfg.sep_kernel_len}, "sep_depth");
    expect(sep_point, {f2, f2}, "sep_point");
    expect(dense_w, {cfg.features_out(), cfg.K}, "dense_w");
    expect(dense_b, {cfg.K}, "dense_b");
    expect(bn1.gamma, {f1}, "bn1.gamma");
    expect(bn2.gamma, {f2}, "bn2.gamma");
    expect(bn3.gamma, {f2}, "bn3.gamma");
    for (const BnLayer* l : {&bn1, &bn2, &bn3})
      for (float v : l->running_var.data)
        if (!(v > 0.0f))
          throw ValidationError("params: running_var must be positive");
  }
};

/// Fan-in scaled uniform init, deterministic per seed. BN starts at
/// gamma=1, beta=0, running stats (0,1).
inline ModelParams init_params(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  ModelParams p;
  Rng rng(seed_mix(seed, "init"));
  auto fill = [&](Tensor& t, int fan_in) {
    const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
    for (auto& v : t.data) v = rng.uniform_f(-bound, bound);
  };
  const int f1 = cfg.temporal_filters, f2 = cfg.f2();
  p.conv_temporal = Tensor({f1, cfg.temporal_kernel_len});
  fill(p.conv_temporal, cfg.temporal_kernel_len);
  p.conv_spatial = Tensor({f1, cfg.depth_multiplier, cfg.c});
  fill(p.conv_spatial, cfg.c);
  p.sep_depth = Tensor({f2, cfg.sep_kernel_len});
  fill(p.sep_depth, cfg.sep_kernel_len);
  p.sep_point = Tensor({f2, f2});
  fill(p.sep_point, f2);
  p.dense_w = Tensor({cfg.features_out(), cfg.K});
  fill(p.dense_w, cfg.features_out());
  p.dense_b = Tensor({cfg.K});
  p.bn1 = BnLayer::make(f1);
  p.bn2 = BnLayer::make(f2);
  p.bn3 = BnLayer::make(f2);
  return p;
}

/// Tape handles produced by a forward pass; param_ids lets callers reuse
/// the same parameter leaves across several passes on one tape (so
/// gradients accumulate once per tensor).
struct ForwardResult {
  int input = -1;
  int logits = -1;
  std::map<std::string, int> param_ids;
};

inline ForwardResult forward(Tape& tape, const ModelConfig& cfg,
                             ModelParams& params, const Tensor& batch,
                             ForwardMode mode, uint64_t dropout_seed = 0,
                             const std::map<std::string, int>* reuse = nullptr) {
  cfg.validate();
  params.check_shapes(cfg);
  if (batch.ndim() != 3 || batch.shape[1] != cfg.c || batch.shape[2] != cfg.t)
    throw ValidationError("forward: batch shape must be [b," +
                          std::to_string(cfg.c) + "," + std::to_string(cfg.t) +
                          "], got " + batch.shape_str());

  ForwardResult r;
  if (reuse) {
    r.param_ids = *reuse;
  } else {
    params.for_each_tensor([&](const std::string& name, Tensor& t, bool is_stat) {
      if (!is_stat) r.param_ids[name] = tape.leaf(t);
    });
  }
  auto pid = [&](const char* name) { return r.param_ids.at(name); };

  const bool train = mode == ForwardMode::train;
  const bool batch_stats = train || cfg.bn_mode == BnMode::batch;
  const bool update_running = train;

  r.input = tape.leaf(batch);
  int h = tape.conv_temporal(r.input, pid("conv_temporal"));  // [b,F1,c,t]
  h = tape.batchnorm(h, pid("bn1.gamma"), pid("bn1.beta"), params.bn1,
                     batch_stats, update_running);
  h = tape.conv_spatial(h, pid("conv_spatial"));  // [b,F2,t]
  h = tape.batchnorm(h, pid("bn2.gamma"), pid("bn2.beta"), params.bn2,
                     batch_stats, update_running);
  h = tape.elu(h);
  h = tape.avgpool_time(h, cfg.pool1);
  if (train && cfg.dropout_rate > 0.0f)
    h = tape.dropout(h, cfg.dropout_rate, seed_mix(dropout_seed, "drop1"));
  h = tape.conv_depthwise_time(h, pid("sep_depth"));
  h = tape.pointwise(h, pid("sep_point"));
  h = tape.batchnorm(h, pid("bn3.gamma"), pid("bn3.beta"), params.bn3,
                     batch_stats, update_running);
  h = tape.elu(h);
  h = tape.avgpool_time(h, cfg.pool2);
  if (train && cfg.dropout_rate > 0.0f)
    h = tape.dropout(h, cfg.dropout_rate, seed_mix(dropout_seed, "drop2"));
  h = tape.reshape(h, {batch.shape[0], cfg.features_out()});
  r.logits = tape.affine(h, pid("dense_w"), pid("dense_b"));
  return r;
}

/// Eval-mode softmax probabilities (no state mutation).
inline Tensor predict_softmax(const ModelConfig& cfg, const ModelParams& params,
                              const Tensor& batch) {
  Tape tape;
  ModelParams& p = const_cast<ModelParams&>(params);  // eval does not mutate
  auto fw = forward(tape, cfg, p, batch, ForwardMode::eval);
  int probs = tape.softmax(fw.logits);
  return tape.val(probs);
}

/// Plain-value cross entropy (mean -log softmax[label]) for reporting;
/// labels are 1-based. Computed in double.
inline double cross_entropy_value(const Tensor& logits,
                                  const std::vector<int>& labels) {
  const int b = logits.shape[0], k = logits.shape[1];
  if (static_cast<int>(labels.size()) != b)
    throw ValidationError("cross_entropy: label count mismatch");
  double loss = 0.0;
  for (int i = 0; i < b; ++i) {
    const int y = labels[static_cast<size_t>(i)];
    if (y < 1 || y > k)
      throw ValidationError("cross_entropy: label out of range {1..K}");
    double m = logits.at(i, 0);
    for (int j = 1; j < k; ++j) m = std::max(m, double(logits.at(i, j)));
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(double(logits.at(i, j)) - m);
    loss += std::log(z) - (double(logits.at(i, y - 1)) - m);
  }
  return loss / b;
}

// ---- checkpoint format ------------------------------------------------
// magic "EEGM", u16 version=1, u32 header_len, JSON header {config,
// tensor directory with {name, shape, offset}, optional alignment block},
// then raw little-endian f32 payloads.

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::optional<AlignmentState> alignment;
};

namespace detail {

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
  return nlohmann::json{
      {"c", cfg.c},
      {"t", cfg.t},
      {"K", cfg.K},
      {"temporal_filters", cfg.temporal_filters},
      {"depth_multiplier", cfg.depth_multiplier},
      {"temporal_kernel_len", cfg.temporal_kernel_len},
      {"sep_kernel_len", cfg.sep_kernel_len},
      {"pool1", cfg.pool1},
      {"pool2", cfg.pool2},
      {"dropout_rate", cfg.dropout_rate},
      {"bn_mode", cfg.bn_mode == BnMode::batch ? "batch" : "running"},
  };
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.c = j.at("c").get<int>();
  cfg.t = j.at("t").get<int>();
  cfg.K = j.at("K").get<int>();
  cfg.temporal_filters = j.at("temporal_filters").get<int>();
  cfg.depth_multiplier = j.at("depth_multiplier").get<int>();
  cfg.temporal_kernel_len = j.at("temporal_kernel_len").get<int>();
  cfg.sep_kernel_len = j.at("sep_kernel_len").get<int>();
  cfg.pool1 = j.at("pool1").get<int>();
  cfg.pool2 = j.at("pool2").get<int>();
  cfg.dropout_rate = j.at("dropout_rate").get<float>();
  cfg.bn_mode =
      j.at("bn_mode").get<std::string>() == "batch" ? BnMode::batch : BnMode::running;
  return cfg;
}

}  // namespace detail

inline void save_checkpoint(const ModelParams& params, const ModelConfig& cfg,
                            const std::optional<AlignmentState>& alignment,
                            const std::string& path) {
  const_cast<ModelParams&>(params).check_shapes(cfg);
  nlohmann::json header;
  header["config"] = detail::config_to_json(cfg);
  header["bn_momentum"] = {params.bn1.momentum, params.bn2.momentum,
                           params.bn3.momentum};
  nlohmann::json dir = nlohmann::json::array();
  std::vector<const Tensor*> payload;
  uint64_t offset = 0;
  auto add_tensor = [&](const std::string& name, const Tensor& t) {
    dir.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}});
    payload.push_back(&t);
    offset += t.data.size() * sizeof(float);
  };
  params.for_each_tensor(
      [&](const std::string& name, const Tensor& t, bool) { add_tensor(name, t); });
  if (alignment) {
    add_tensor("alignment.r_bar", alignment->r_bar);
    add_tensor("alignment.w", alignment->w);
    header["alignment"] = {{"n_trials_used", alignment->n_trials_used}};
  }
  header["tensors"] = dir;

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write("EEGM", 4);
  const std::string hs = header.dump();
  detail::write_pod<uint16_t>(os, 1);
  detail::write_pod<uint32_t>(os, static_cast<uint32_t>(hs.size()));
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const Tensor* t : payload)
    os.write(reinterpret_cast<const char*>(t->data.data()),
             static_cast<std::streamsize>(t->data.size() * sizeof(float)));
  if (!os) throw IoError("write failed: " + path);
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  save_checkpoint(ck.params, ck.config, ck.alignment, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "EEGM", 4) != 0)
    throw FormatError("bad magic: expected \"EEGM\"");
  const auto version = detail::read_pod<uint16_t>(is, "version");
  if (version != 1)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = detail::read_pod<uint32_t>(is, "header length");
  std::string hs(header_len, '\0');
  is.read(hs.data(), header_len);
  if (!is) throw FormatError("truncated checkpoint header");
  nlohmann::json header = nlohmann::json::parse(hs, nullptr, false);
  if (header.is_discarded()) throw FormatError("checkpoint header is not valid JSON");

  Checkpoint ck;
  ck.config = detail::config_from_json(header.at("config"));
  ck.config.validate();

  const std::vector<char> rest((std::istreambuf_iterator<char>(is)),
                               std::istreambuf_iterator<char>());
  std::map<std::string, Tensor> tensors;
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    const uint64_t offset = entry.at("offset").get<uint64_t>();
    const uint64_t bytes = static_cast<uint64_t>(Tensor::numel_of(shape)) * sizeof(float);
    if (offset + bytes > rest.size())
      throw FormatError("checkpoint payload truncated at tensor " + name);
    std::vector<float> dat(static_cast<size_t>(Tensor::numel_of(shape)));
    std::memcpy(dat.data(), rest.data() + offset, bytes);
    for (float v : dat)
      if (!std::isfinite(v))
        throw FormatError("non-finite value in checkpoint tensor " + name);
    tensors.emplace(name, Tensor(shape, std::move(dat)));
  }

  // assemble params; shapes validated against the config afterwards
  ck.params = init_params(ck.config, 0);
  ck.params.for_each_tensor([&](const std::string& name, Tensor& t, bool) {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw FormatError("checkpoint is missing tensor " + name);
    if (it->second.shape != t.shape)
      throw FormatError("checkpoint tensor " + name + " has shape " +
                        it->second.shape_str() + ", expected " + t.shape_str());
    t = it->second;
  });
  if (header.contains("bn_momentum")) {
    auto mom = header["bn_momentum"].get<std::vector<float>>();
    if (mom.size() == 3) {
      ck.params.bn1.momentum = mom[0];
      ck.params.bn2.momentum = mom[1];
      ck.params.bn3.momentum = mom[2];
    }
  }
  ck.params.check_shapes(ck.config);

  if (header.contains("alignment")) {
    AlignmentState st;
    auto rit = tensors.find("alignment.r_bar");
    auto wit = tensors.find("alignment.w");
    if (rit == tensors.end() || wit == tensors.end())
      throw FormatError("checkpoint alignment block is incomplete");
    st.r_bar = rit->second;
    st.w = wit->second;
    st.n_trials_used = header["alignment"].at("n_trials_used").get<int>();
    ck.alignment = std::move(st);
  }
  return ck;
}

}  // namespace are
