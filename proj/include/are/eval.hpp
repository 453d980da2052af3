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
// Scenario orchestration: the three privacy-preserving transfer pipelines
// plus the no-privacy baseline, the benign/adversarial/noisy evaluation
// protocol, and report rendering (JSON / CSV / markdown).

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "are/adversarial.hpp"
#include "are/alignment.hpp"
#include "are/data.hpp"
#include "are/federated.hpp"
#include "are/model.hpp"
#include "are/privacy.hpp"
#include "are/training.hpp"

namespace are {

enum class Scenario {
  centralized_source_free,
  federated_source_free,
  source_perturbation,
  no_privacy,
};

enum class Method { ce, abat, abat_e, ar, are };

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::centralized_source_free: return "centralized_source_free";
    case Scenario::federated_source_free: return "federated_source_free";
    case Scenario::source_perturbation: return "source_perturbation";
    case Scenario::no_privacy: return "no_privacy";
  }
  throw UsageError("unknown scenario");
}

inline std::string to_string(Method m) {
  switch (m) {
    case Method::ce: return "ce";
    case Method::abat: return "abat";
    case Method::abat_e: return "abat_e";
    case Method::ar: return "ar";
    case Method::are: return "are";
  }
  throw UsageError("unknown method");
}

inline Scenario parse_scenario(const std::string& s) {
  if (s == "centralized_source_free") return Scenario::centralized_source_free;
  if (s == "federated_source_free") return Scenario::federated_source_free;
  if (s == "source_perturbation") return Scenario::source_perturbation;
  if (s == "no_privacy") return Scenario::no_privacy;
  throw ValidationError("unknown scenario: " + s);
}

inline Method parse_method(const std::string& s) {
  if (s == "ce") return Method::ce;
  if (s == "abat") return Method::abat;
  if (s == "abat_e") return Method::abat_e;
  if (s == "ar") return Method::ar;
  if (s == "are") return Method::are;
  throw ValidationError("unknown method: " + s);
}

struct EvalGrid {
  std::vector<float> epsilons{0.01f, 0.03f, 0.05f};
  std::vector<float> etas{1.0f, 2.0f, 3.0f};
  int attack_steps = 10;
  int noise_draws = 3;

  void validate() const {
    for (float e : epsilons)
      if (e < 0.0f) throw ValidationError("grid: epsilon must be >= 0");
    for (float e : etas)
      if (e < 0.0f) throw ValidationError("grid: eta must be >= 0");
    if (attack_steps < 1) throw ValidationError("grid: attack_steps must be >= 1");
    if (noise_draws < 1) throw ValidationError("grid: noise_draws must be >= 1");
  }
};

struct ScenarioConfig {
  Scenario scenario = Scenario::centralized_source_free;
  Method method = Method::are;
  std::vector<float> calibration_fractions{0.2f, 0.3f, 0.4f, 0.5f, 0.6f};
  int repeats = 5;
  // Data: either a synthetic spec (default) or explicit trial files.
  SynthSpec synth;
  std::string source_path;  // when set, file input replaces the generator
  std::string target_path;
  int target_user = -1;  // -1: highest user id becomes the target
  TrainConfig pretrain;
  TrainConfig finetune;
  FedConfig fed;
  PerturbConfig perturb;
  EvalGrid grid;
  int n_ensemble = 5;
  uint64_t master_seed = 0;

  void validate() const {
    if (repeats < 1) throw ValidationError("scenario: repeats must be >= 1");
    if (calibration_fractions.empty())
      throw ValidationError("scenario: empty fraction list");
    for (float f : calibration_fractions)
      if (!(f > 0.0f && f < 1.0f))
        throw ValidationError("scenario: fractions must be in (0,1)");
    if (n_ensemble < 1) throw ValidationError("scenario: n_ensemble must be >= 1");
    if (!target_path.empty() && source_path.empty())
      throw ValidationError("scenario: a source set is required");
    if (target_path.empty() != source_path.empty())
      throw ValidationError("scenario: source/target paths must come together");
    grid.validate();
    pretrain.validate();
    finetune.validate();
    perturb.validate();
  }
};

struct CellResult {
  float fraction = 0.0f;
  int repeat = 0;
  uint64_t seed = 0;
  bool ok = false;
  std::string error;  // set when !ok; cell excluded from summary means
  double benign = 0.0;
  std::vector<double> adversarial;  // one per epsilon, same order as grid
  std::vector<double> noisy;        // one per eta

  double adversarial_mean() const {
    if (adversarial.empty()) return 0.0;
    double s = 0.0;
    for (double v : adversarial) s += v;
    return s / static_cast<double>(adversarial.size());
  }
  double noisy_mean() const {
    if (noisy.empty()) return 0.0;
    double s = 0.0;
    for (double v : noisy) s += v;
    return s / static_cast<double>(noisy.size());
  }
  double avg() const { return (benign + adversarial_mean() + noisy_mean()) / 3.0; }
};

struct EvalReport {
  std::string scenario;
  std::string method;
  std::vector<float> epsilons;
  std::vector<float> etas;
  uint64_t master_seed = 0;
  std::vector<CellResult> cells;

  // Column means over successful cells only; failed cells stay flagged in
  // `cells` but never contribute to a mean.
  struct Summary {
    double benign = 0.0, adversarial = 0.0, noisy = 0.0, avg = 0.0;
    int n_cells = 0, n_failed = 0;
  };

  Summary summary() const {
    Summary s;
    for (const auto& c : cells) {
      if (!c.ok) {
        ++s.n_failed;
        continue;
      }
      s.benign += c.benign;
      s.adversarial += c.adversarial_mean();
      s.noisy += c.noisy_mean();
      ++s.n_cells;
    }
    if (s.n_cells) {
      s.benign /= s.n_cells;
      s.adversarial /= s.n_cells;
      s.noisy /= s.n_cells;
      s.avg = (s.benign + s.adversarial + s.noisy) / 3.0;
    }
    return s;
  }
};

/// Read-only handle over the held-out target trials, already aligned with
/// the calibration-fit AlignmentState. It deliberately exposes no TrialSet
/// and no fitting API: nothing downstream can refit alignment or train on
/// test data through this type.
class TestSet {
 public:
  TestSet(const TrialSet& raw_test, const AlignmentState& calibration_state) {
    raw_test.validate();
    c_ = raw_test.c;
    t_ = raw_test.t;
    k_ = raw_test.K;
    const int n = static_cast<int>(raw_test.trials.size());
    batch_ = Tensor({n, c_, t_});
    labels_.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      Tensor aligned =
          apply_alignment(calibration_state, raw_test.trials[static_cast<size_t>(i)].signal);
      std::copy(aligned.data.begin(), aligned.data.end(),
                batch_.data.begin() + static_cast<long>(i) * c_ * t_);
      labels_.push_back(raw_test.trials[static_cast<size_t>(i)].label);
    }
  }

  int size() const { return batch_.shape[0]; }
  int channels() const { return c_; }
  int samples() const { return t_; }
  int classes() const { return k_; }
  const Tensor& batch() const { return batch_; }
  const std::vector<int>& labels() const { return labels_; }

 private:
  int c_ = 0, t_ = 0, k_ = 0;
  Tensor batch_;
  std::vector<int> labels_;
};

/// White-box PGD against the ensemble's aggregated softmax: the loss is
/// the negative log of the mean member probability of the true class.
/// Mirrors pgd_attack_batch's ball, start, and step rules exactly; for a
/// single-member ensemble the attack surface equals the plain model's.
inline Tensor pgd_attack_ensemble(const EnsembleModel& ens, const Tensor& batch,
                                  const std::vector<int>& labels,
                                  const AttackConfig& atk) {
  ens.validate();
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

  const float inv_m = 1.0f / static_cast<float>(ens.members.size());
  for (int step = 0; step < atk.steps; ++step) {
    Tape tape;
    std::vector<int> inputs;
    int mean_probs = -1;
    for (const auto& [params, cfg] : ens.members) {
      auto fw = forward(tape, cfg, const_cast<ModelParams&>(params), adv,
                        ForwardMode::eval);
      inputs.push_back(fw.input);
      const int probs = tape.softmax(fw.logits);
      mean_probs = mean_probs < 0 ? probs : tape.add(mean_probs, probs);
    }
    mean_probs = tape.scale(mean_probs, inv_m);
    const int loss = tape.nll_probs(mean_probs, labels);
    tape.backward(loss);
    // Each member owns its input leaf; the inputs are equal, so the total
    // gradient is the sum over leaves.
    Tensor g = tape.grad(inputs[0]);
    for (size_t m = 1; m < inputs.size(); ++m) {
      const Tensor& gm = tape.grad(inputs[m]);
      for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += gm.data[i];
    }
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

namespace detail {

inline double accuracy_pct(const EnsembleModel& ens, const Tensor& batch,
                           const std::vector<int>& labels) {
  const std::vector<int> pred = ensemble_predict(ens, batch);
  int64_t correct = 0;
  for (size_t i = 0; i < labels.size(); ++i)
    if (pred[i] == labels[i]) ++correct;
  return labels.empty() ? 0.0
                        : 100.0 * static_cast<double>(correct) /
                              static_cast<double>(labels.size());
}

}  // namespace detail

/// One evaluation row: benign accuracy, PGD accuracy at each epsilon in
/// the grid (white-box against the aggregated ensemble output), and noisy
/// accuracy at each eta as the mean over grid.noise_draws fresh draws.
inline CellResult evaluate_model(const EnsembleModel& ens, const TestSet& test,
                                 const EvalGrid& grid, uint64_t seed) {
  grid.validate();
  if (test.size() == 0) throw ValidationError("evaluate_model: empty test set");
  CellResult row;
  row.seed = seed;
  row.benign = detail::accuracy_pct(ens, test.batch(), test.labels());

  for (size_t ie = 0; ie < grid.epsilons.size(); ++ie) {
    AttackConfig atk = AttackConfig::with_epsilon(
        grid.epsilons[ie], grid.attack_steps, true,
        seed_mix(seed_mix(seed, "eval-attack"), static_cast<uint64_t>(ie)));
    Tensor adv = pgd_attack_ensemble(ens, test.batch(), test.labels(), atk);
    row.adversarial.push_back(detail::accuracy_pct(ens, adv, test.labels()));
  }

  const int c = test.channels(), t = test.samples();
  for (size_t in = 0; in < grid.etas.size(); ++in) {
    double acc = 0.0;
    for (int draw = 0; draw < grid.noise_draws; ++draw) {
      Tensor noisy = test.batch();
      for (int i = 0; i < test.size(); ++i) {
        Tensor x({c, t},
                 std::vector<float>(noisy.data.begin() + static_cast<long>(i) * c * t,
                                    noisy.data.begin() + static_cast<long>(i + 1) * c * t));
        NoiseConfig nz;
        nz.eta = grid.etas[in];
        nz.seed = seed_mix(seed_mix(seed_mix(seed_mix(seed, "eval-noise"),
                                             static_cast<uint64_t>(in)),
                                    static_cast<uint64_t>(draw)),
                           static_cast<uint64_t>(i));
        Tensor xn = noisy_sample(x, nz);
        std::copy(xn.data.begin(), xn.data.end(),
                  noisy.data.begin() + static_cast<long>(i) * c * t);
      }
      acc += detail::accuracy_pct(ens, noisy, test.labels());
    }
    row.noisy.push_back(acc / grid.noise_draws);
  }
  row.ok = true;
  return row;
}

namespace detail {

/// Per-cell seed: hash of (master, scenario, method, fraction, repeat).
inline uint64_t cell_seed(uint64_t master, Scenario sc, Method m, float fraction,
                          int repeat) {
  uint64_t s = seed_mix(master, to_string(sc));
  s = seed_mix(s, to_string(m));
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", double(fraction));
  s = seed_mix(s, std::string(buf));
  return seed_mix(s, static_cast<uint64_t>(repeat));
}

struct MethodTraits {
  Objective objective = Objective::ce;
  Augmentation augmentation = Augmentation::none;
  bool ensemble = false;
};

inline MethodTraits method_traits(Method m) {
  switch (m) {
    case Method::ce: return {Objective::ce, Augmentation::none, false};
    case Method::abat: return {Objective::adv, Augmentation::none, false};
    case Method::abat_e: return {Objective::adv, Augmentation::none, true};
    case Method::ar: return {Objective::adv, Augmentation::scale, false};
    case Method::are: return {Objective::adv, Augmentation::scale, true};
  }
  throw UsageError("unknown method");
}

inline TrialSet select_users(const TrialSet& ts, bool keep_target, int target) {
  TrialSet out = ts;
  out.trials.clear();
  for (const auto& tr : ts.trials)
    if ((tr.user == target) == keep_target) out.trials.push_back(tr);
  if (keep_target) {
    out.U = 1;
    for (auto& tr : out.trials) tr.user = 1;  // single-user renumbering
  }
  return out;
}

}  // namespace detail

/// The full pipeline: per-user EA on the source; pretraining (centralized
/// or federated) for the source-free scenarios, or source perturbation
/// for the others; then per (fraction, repeat) a chronological calibration
/// split, calibration-only EA, method-specific training, and evaluation
/// of the held-out trials through a TestSet. A failing cell is recorded
/// with its error and the run continues. (fraction, repeat) cells are
/// independent — each owns a derived seed and copies of all mutable state
/// — so `workers` > 1 runs them concurrently with bitwise-identical
/// output; report assembly is single-threaded in grid order.
inline EvalReport run_scenario(const ScenarioConfig& cfg, int workers = 1) {
  cfg.validate();
  if (workers < 1) throw ValidationError("run_scenario: workers must be >= 1");

  TrialSet source, target;
  if (!cfg.source_path.empty()) {
    source = load_trialset(cfg.source_path);
    target = load_trialset(cfg.target_path);
  } else {
    TrialSet all = generate_synthetic(cfg.synth);
    const int target_user = cfg.target_user > 0 ? cfg.target_user : all.U;
    source = detail::select_users(all, false, target_user);
    target = detail::select_users(all, true, target_user);
    source.name += "/source";
    target.name += "/target";
  }
  source.validate();
  target.validate();

  // Per-user Euclidean Alignment on the source, shared by every scenario.
  const TrialSet source_aligned = align_per_user(source);

  ModelConfig model_cfg;
  model_cfg.c = source.c;
  model_cfg.t = source.t;
  model_cfg.K = source.K;

  // Scenario-specific source-side work happens once per run.
  std::optional<Checkpoint> checkpoint;            // source-free scenarios
  std::optional<TrialSet> shared_source;           // D̃_S or clean D_S
  switch (cfg.scenario) {
    case Scenario::centralized_source_free: {
      TrainConfig pt = cfg.pretrain;
      pt.objective = Objective::ce;
      pt.augmentation = Augmentation::none;
      pt.seed = seed_mix(cfg.master_seed, "pretrain");
      Checkpoint ck;
      ck.config = model_cfg;
      ck.params = train(init_params(model_cfg, seed_mix(pt.seed, "init")),
                        model_cfg, source_aligned, pt);
      checkpoint = std::move(ck);
      break;
    }
    case Scenario::federated_source_free: {
      FedConfig fc = cfg.fed;
      fc.seed = seed_mix(cfg.master_seed, "fed-pretrain");
      checkpoint = federated_pretrain(source_aligned, model_cfg, fc);
      model_cfg = checkpoint->config;  // carries bn_mode=batch
      break;
    }
    case Scenario::source_perturbation: {
      PerturbConfig pc = cfg.perturb;
      pc.seed = seed_mix(cfg.master_seed, "perturb");
      shared_source =
          apply_perturbations(source_aligned,
                              generate_user_perturbations(source_aligned, pc));
      break;
    }
    case Scenario::no_privacy:
      shared_source = source_aligned;
      break;
  }

  const detail::MethodTraits traits = detail::method_traits(cfg.method);
  EvalReport report;
  report.scenario = to_string(cfg.scenario);
  report.method = to_string(cfg.method);
  report.epsilons = cfg.grid.epsilons;
  report.etas = cfg.grid.etas;
  report.master_seed = cfg.master_seed;

  std::vector<std::pair<float, int>> grid_cells;
  for (float fraction : cfg.calibration_fractions)
    for (int repeat = 0; repeat < cfg.repeats; ++repeat)
      grid_cells.emplace_back(fraction, repeat);
  report.cells.resize(grid_cells.size());

  const auto run_cell = [&](size_t idx) {
    const auto [fraction, repeat] = grid_cells[idx];
    const uint64_t seed = detail::cell_seed(cfg.master_seed, cfg.scenario,
                                            cfg.method, fraction, repeat);
    CellResult cell;
    cell.fraction = fraction;
    cell.repeat = repeat;
    cell.seed = seed;
    try {
      auto [calib_raw, test_raw] = split_calibration(target, fraction);
      const AlignmentState align = fit_alignment(calib_raw);
      TrialSet calib = calib_raw;
      for (auto& tr : calib.trials) tr.signal = apply_alignment(align, tr.signal);
      const TestSet test(test_raw, align);

      TrainConfig ft = cfg.finetune;
      ft.seed = seed;
      ft.augmentation = traits.augmentation;
      const TrialSet* src = nullptr;
      if (shared_source) {
        // Source data crosses the boundary (perturbed or not): joint
        // training from scratch on D'_T plus source batches.
        ft.objective = Objective::adv_plus_source;
        if (traits.objective == Objective::ce) {
          ft.attack.epsilon = 0.0f;  // CE rung: no inner maximization
          ft.attack.alpha = 0.0f;
        }
        src = &*shared_source;
      } else {
        ft.objective = traits.objective;
      }

      EnsembleModel ens;
      const int members = traits.ensemble ? cfg.n_ensemble : 1;
      if (checkpoint) {
        ens = train_ensemble(members, seed, model_cfg, checkpoint->params,
                             calib, ft, src);
      } else {
        ens = train_ensemble(members, seed, model_cfg, std::nullopt, calib,
                             ft, src);
      }

      CellResult row = evaluate_model(ens, test, cfg.grid,
                                      seed_mix(seed, "evaluate"));
      cell.ok = true;
      cell.benign = row.benign;
      cell.adversarial = std::move(row.adversarial);
      cell.noisy = std::move(row.noisy);
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = e.what();
    }
    report.cells[idx] = std::move(cell);
  };

  if (workers == 1 || grid_cells.size() <= 1) {
    for (size_t i = 0; i < grid_cells.size(); ++i) run_cell(i);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    const size_t n_threads =
        std::min<size_t>(static_cast<size_t>(workers), grid_cells.size());
    for (size_t w = 0; w < n_threads; ++w)
      pool.emplace_back([&] {
        for (size_t i = next.fetch_add(1); i < grid_cells.size();
             i = next.fetch_add(1))
          run_cell(i);
      });
    for (auto& th : pool) th.join();
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report rendering
// ---------------------------------------------------------------------------

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) {
    nlohmann::json jc{{"fraction", c.fraction}, {"repeat", c.repeat},
                      {"seed", c.seed},         {"ok", c.ok}};
    if (c.ok) {
      jc["benign"] = c.benign;
      jc["adversarial"] = c.adversarial;
      jc["noisy"] = c.noisy;
      jc["avg"] = c.avg();
    } else {
      jc["error"] = c.error;
    }
    cells.push_back(std::move(jc));
  }
  const auto s = r.summary();
  return nlohmann::json{
      {"scenario", r.scenario},
      {"method", r.method},
      {"epsilons", r.epsilons},
      {"etas", r.etas},
      {"master_seed", r.master_seed},
      {"cells", std::move(cells)},
      {"summary",
       {{"benign", s.benign},
        {"adversarial", s.adversarial},
        {"noisy", s.noisy},
        {"avg", s.avg},
        {"n_cells", s.n_cells},
        {"n_failed", s.n_failed}}}};
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.scenario = j.at("scenario").get<std::string>();
  r.method = j.at("method").get<std::string>();
  r.epsilons = j.at("epsilons").get<std::vector<float>>();
  r.etas = j.at("etas").get<std::vector<float>>();
  r.master_seed = j.at("master_seed").get<uint64_t>();
  for (const auto& jc : j.at("cells")) {
    CellResult c;
    c.fraction = jc.at("fraction").get<float>();
    c.repeat = jc.at("repeat").get<int>();
    c.seed = jc.at("seed").get<uint64_t>();
    c.ok = jc.at("ok").get<bool>();
    if (c.ok) {
      c.benign = jc.at("benign").get<double>();
      c.adversarial = jc.at("adversarial").get<std::vector<double>>();
      c.noisy = jc.at("noisy").get<std::vector<double>>();
    } else {
      c.error = jc.at("error").get<std::string>();
    }
    r.cells.push_back(std::move(c));
  }
  return r;
}

inline std::string render_report(const EvalReport& r, const std::string& format) {
  std::ostringstream os;
  if (format == "json") {
    os << report_to_json(r).dump(2) << "\n";
  } else if (format == "csv") {
    os << "fraction,repeat,ok,benign,adversarial,noisy,avg,error\n";
    char line[256];
    for (const auto& c : r.cells) {
      if (c.ok) {
        std::snprintf(line, sizeof(line), "%.4f,%d,1,%.4f,%.4f,%.4f,%.4f,\n",
                      double(c.fraction), c.repeat, c.benign,
                      c.adversarial_mean(), c.noisy_mean(), c.avg());
        os << line;
      } else {
        std::string msg = c.error;
        for (auto& ch : msg)
          if (ch == ',' || ch == '\n') ch = ';';
        std::snprintf(line, sizeof(line), "%.4f,%d,0,,,,,", double(c.fraction),
                      c.repeat);
        os << line << msg << "\n";
      }
    }
    const auto s = r.summary();
    std::snprintf(line, sizeof(line), "summary,,,%.4f,%.4f,%.4f,%.4f,\n",
                  s.benign, s.adversarial, s.noisy, s.avg);
    os << line;
  } else if (format == "markdown" || format == "markdown-table") {
    const auto s = r.summary();
    os << "| Scenario | Method | Benign | Adversarial | Noisy | Avg |\n"
       << "|---|---|---|---|---|---|\n";
    char line[256];
    std::snprintf(line, sizeof(line), "| %s | %s | %.2f | %.2f | %.2f | %.2f |\n",
                  r.scenario.c_str(), r.method.c_str(), s.benign, s.adversarial,
                  s.noisy, s.avg);
    os << line;
  } else {
    throw ValidationError("render_report: unknown format: " + format);
  }
  return os.str();
}

inline void write_report(const EvalReport& r, const std::string& path,
                         const std::string& format) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write report: " + path);
  f << render_report(r, format);
  if (!f) throw IoError("failed writing report: " + path);
}

}  // namespace are
