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
#include <filesystem>
#include <fstream>

#include "are/model.hpp"
#include "are/rng.hpp"

using namespace are;

namespace {

Tensor random_batch(const ModelConfig& cfg, int n, uint64_t seed) {
  Tensor b({n, cfg.c, cfg.t});
  Rng rng(seed);
  for (auto& v : b.data) v = static_cast<float>(rng.normal());
  return b;
}

std::filesystem::path temp_file(const std::string& stem) {
  return std::filesystem::temp_directory_path() / stem;
}

}  // namespace

TEST_CASE("config validation and derived sizes") {
  ModelConfig cfg = ModelConfig::tiny();
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.f2() == cfg.temporal_filters * cfg.depth_multiplier);
  CHECK(cfg.t_out() == cfg.t / cfg.pool1 / cfg.pool2);
  ModelConfig bad = cfg;
  bad.t = cfg.pool1 * cfg.pool2 - 1;  // not divisible by the pooling chain
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("init is deterministic and seed-sensitive") {
  const ModelConfig cfg = ModelConfig::tiny();
  const ModelParams a = init_params(cfg, 9);
  const ModelParams b = init_params(cfg, 9);
  const ModelParams c = init_params(cfg, 10);
  CHECK(a.dense_w.data == b.dense_w.data);
  CHECK(a.conv_temporal.data == b.conv_temporal.data);
  CHECK(a.dense_w.data != c.dense_w.data);
}

TEST_CASE("forward produces logits of shape [n, K]") {
  const ModelConfig cfg = ModelConfig::tiny();
  ModelParams params = init_params(cfg, 1);
  const Tensor batch = random_batch(cfg, 5, 2);
  Tape tape;
  auto fw = forward(tape, cfg, params, batch, ForwardMode::eval);
  CHECK(tape.val(fw.logits).shape == std::vector<int>{5, cfg.K});
  CHECK(tape.val(fw.logits).all_finite());
}

TEST_CASE("predict_softmax rows are probability vectors") {
  const ModelConfig cfg = ModelConfig::tiny();
  const ModelParams params = init_params(cfg, 3);
  const Tensor probs = predict_softmax(cfg, params, random_batch(cfg, 4, 4));
  for (int i = 0; i < 4; ++i) {
    double row = 0.0;
    for (int j = 0; j < cfg.K; ++j) {
      CHECK(probs.at(i, j) >= 0.0f);
      row += probs.at(i, j);
    }
    CHECK(row == Catch::Approx(1.0).margin(1e-5));
  }
}

TEST_CASE("train-mode forward updates BN running stats, eval does not") {
  const ModelConfig cfg = ModelConfig::tiny();
  ModelParams params = init_params(cfg, 5);
  const Tensor before = params.bn1.running_mean;
  {
    Tape tape;
    (void)forward(tape, cfg, params, random_batch(cfg, 6, 6), ForwardMode::eval);
  }
  CHECK(params.bn1.running_mean.data == before.data);
  {
    Tape tape;
    (void)forward(tape, cfg, params, random_batch(cfg, 6, 6), ForwardMode::train, 1);
  }
  CHECK(params.bn1.running_mean.data != before.data);
}

TEST_CASE("bn_mode batch vs running differ once stats diverge") {
  ModelConfig cfg = ModelConfig::tiny();
  ModelParams params = init_params(cfg, 7);
  // push the running stats away from the batch statistics
  for (int i = 0; i < 3; ++i) {
    Tape tape;
    (void)forward(tape, cfg, params, random_batch(cfg, 8, 100 + uint64_t(i)),
                  ForwardMode::train, uint64_t(i));
  }
  const Tensor batch = random_batch(cfg, 4, 8);
  const Tensor running = predict_softmax(cfg, params, batch);
  ModelConfig batch_cfg = cfg;
  batch_cfg.bn_mode = BnMode::batch;
  const Tensor batched = predict_softmax(batch_cfg, params, batch);
  CHECK(running.data != batched.data);
}

TEST_CASE("checkpoint round-trip is bit-exact, with alignment state") {
  const ModelConfig cfg = ModelConfig::tiny();
  ModelParams params = init_params(cfg, 11);
  AlignmentState st;
  st.r_bar = Tensor::identity(cfg.c);
  st.w = Tensor::identity(cfg.c);
  st.n_trials_used = 12;

  const auto path = temp_file("ck_roundtrip.eegm");
  save_checkpoint(params, cfg, st, path.string());
  const Checkpoint back = load_checkpoint(path.string());
  CHECK(back.config.c == cfg.c);
  CHECK(back.config.K == cfg.K);
  bool all_equal = true;
  back.params.for_each_tensor([&](const std::string& name, const Tensor& t, bool) {
    params.for_each_tensor(
        [&](const std::string& name2, const Tensor& t2, bool) {
          if (name == name2 && t.data != t2.data) all_equal = false;
        });
  });
  CHECK(all_equal);
  REQUIRE(back.alignment.has_value());
  CHECK(back.alignment->w.data == st.w.data);
  CHECK(back.alignment->n_trials_used == 12);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint corruption fixtures give distinct errors") {
  const ModelConfig cfg = ModelConfig::tiny();
  const ModelParams params = init_params(cfg, 13);
  const auto path = temp_file("ck_corrupt.eegm");
  save_checkpoint(params, cfg, std::nullopt, path.string());
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  in.close();
  auto write_bytes = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(b.data(), static_cast<long>(b.size()));
  };

  SECTION("bad magic") {
    std::string bad = bytes;
    bad[0] = '?';
    write_bytes(bad);
    try {
      load_checkpoint(path.string());
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("magic") != std::string::npos);
    }
  }
  SECTION("truncated payload") {
    write_bytes(bytes.substr(0, bytes.size() - 64));
    try {
      load_checkpoint(path.string());
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("truncat") != std::string::npos);
    }
  }
  std::filesystem::remove(path);
}
