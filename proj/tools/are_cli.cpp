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
// Command-line front end: datagen / pretrain / perturb / run / report.
// Worker count comes from the ARE_WORKERS environment variable (default 1);
// failures exit nonzero with a one-line JSON error object on stderr.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "are/are.hpp"

namespace {

int read_workers() {
  const char* env = std::getenv("ARE_WORKERS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v < 1)
    throw are::ValidationError("ARE_WORKERS must be a positive integer");
  return static_cast<int>(v);
}

std::vector<float> parse_fractions(const std::string& csv) {
  std::vector<float> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stof(tok));
  return out;
}

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw are::IoError("cannot read: " + path);
  nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
  if (j.is_discarded()) throw are::FormatError("invalid JSON: " + path);
  return j;
}

void apply_json_config(const nlohmann::json& j, are::ScenarioConfig& cfg) {
  using nlohmann::json;
  if (j.contains("scenario")) cfg.scenario = are::parse_scenario(j["scenario"]);
  if (j.contains("method")) cfg.method = are::parse_method(j["method"]);
  if (j.contains("calibration_fractions"))
    cfg.calibration_fractions = j["calibration_fractions"].get<std::vector<float>>();
  if (j.contains("repeats")) cfg.repeats = j["repeats"].get<int>();
  if (j.contains("master_seed")) cfg.master_seed = j["master_seed"].get<uint64_t>();
  if (j.contains("n_ensemble")) cfg.n_ensemble = j["n_ensemble"].get<int>();
  if (j.contains("source_path")) cfg.source_path = j["source_path"].get<std::string>();
  if (j.contains("target_path")) cfg.target_path = j["target_path"].get<std::string>();
  if (j.contains("target_user")) cfg.target_user = j["target_user"].get<int>();
  if (j.contains("synth")) {
    const json& s = j["synth"];
    if (s.contains("channels")) cfg.synth.c = s["channels"].get<int>();
    if (s.contains("samples")) cfg.synth.t = s["samples"].get<int>();
    if (s.contains("classes")) cfg.synth.K = s["classes"].get<int>();
    if (s.contains("users")) cfg.synth.U = s["users"].get<int>();
    if (s.contains("trials_per_class_per_user"))
      cfg.synth.trials_per_class_per_user = s["trials_per_class_per_user"].get<int>();
    if (s.contains("snr")) cfg.synth.snr = s["snr"].get<float>();
    if (s.contains("seed")) cfg.synth.seed = s["seed"].get<uint64_t>();
  }
  auto train_from_json = [](const json& t, are::TrainConfig& tc) {
    if (t.contains("epochs")) tc.epochs = t["epochs"].get<int>();
    if (t.contains("batch_size")) tc.batch_size = t["batch_size"].get<int>();
    if (t.contains("learning_rate")) tc.learning_rate = t["learning_rate"].get<float>();
    if (t.contains("scale_beta")) tc.scale_beta = t["scale_beta"].get<float>();
    if (t.contains("attack_epsilon")) {
      tc.attack = are::AttackConfig::with_epsilon(t["attack_epsilon"].get<float>(),
                                                  t.value("attack_steps", 10));
    }
  };
  if (j.contains("pretrain")) train_from_json(j["pretrain"], cfg.pretrain);
  if (j.contains("finetune")) train_from_json(j["finetune"], cfg.finetune);
  if (j.contains("fed")) {
    const json& f = j["fed"];
    if (f.contains("rounds")) cfg.fed.rounds = f["rounds"].get<int>();
    if (f.contains("local_epochs")) cfg.fed.local_epochs = f["local_epochs"].get<int>();
    if (f.contains("client_fraction"))
      cfg.fed.client_fraction = f["client_fraction"].get<float>();
    if (f.contains("exclude_bn_stats"))
      cfg.fed.exclude_bn_stats = f["exclude_bn_stats"].get<bool>();
  }
  if (j.contains("perturb")) {
    const json& p = j["perturb"];
    if (p.contains("rho")) cfg.perturb.rho = p["rho"].get<float>();
  }
  if (j.contains("grid")) {
    const json& g = j["grid"];
    if (g.contains("epsilons")) cfg.grid.epsilons = g["epsilons"].get<std::vector<float>>();
    if (g.contains("etas")) cfg.grid.etas = g["etas"].get<std::vector<float>>();
    if (g.contains("attack_steps")) cfg.grid.attack_steps = g["attack_steps"].get<int>();
    if (g.contains("noise_draws")) cfg.grid.noise_draws = g["noise_draws"].get<int>();
  }
}

int run_main(int argc, char** argv) {
  CLI::App app{"ARE pipeline: synthetic EEG decoding with privacy-preserving transfer"};
  app.require_subcommand(1);

  // ---- datagen ----
  auto* datagen = app.add_subcommand("datagen", "Write a synthetic TrialSet");
  std::string dg_out;
  are::SynthSpec spec;
  bool bnci_like = false;
  datagen->add_option("--out", dg_out, "Output trial file")->required();
  datagen->add_option("--users", spec.U);
  datagen->add_option("--channels", spec.c);
  datagen->add_option("--samples", spec.t);
  datagen->add_option("--classes", spec.K);
  datagen->add_option("--trials", spec.trials_per_class_per_user,
                      "Trials per class per user");
  datagen->add_option("--snr", spec.snr);
  datagen->add_option("--seed", spec.seed);
  datagen->add_flag("--bnci-like", bnci_like, "Use the BNCI-like preset shape");

  // ---- pretrain ----
  auto* pretrain = app.add_subcommand("pretrain", "Pretrain a source model");
  std::string pt_data, pt_out;
  bool federated = false;
  int pt_epochs = 50, pt_rounds = 10, pt_local_epochs = 1;
  uint64_t pt_seed = 0;
  pretrain->add_option("--data", pt_data, "Source trial file")->required();
  pretrain->add_option("--out", pt_out, "Output checkpoint")->required();
  pretrain->add_flag("--federated", federated, "Federated instead of centralized");
  pretrain->add_option("--epochs", pt_epochs);
  pretrain->add_option("--rounds", pt_rounds, "Federated rounds");
  pretrain->add_option("--local-epochs", pt_local_epochs);
  pretrain->add_option("--seed", pt_seed);

  // ---- perturb ----
  auto* perturb = app.add_subcommand("perturb", "Emit the perturbed source set");
  std::string pb_data, pb_out;
  float pb_rho = 0.3f;
  uint64_t pb_seed = 0;
  perturb->add_option("--data", pb_data, "Source trial file")->required();
  perturb->add_option("--out", pb_out, "Output trial file")->required();
  perturb->add_option("--rho", pb_rho, "Perturbation amplitude fraction");
  perturb->add_option("--seed", pb_seed);

  // ---- run ----
  auto* run = app.add_subcommand("run", "Run a full scenario");
  std::string run_config, run_scenario_name, run_method, run_fractions, run_out;
  std::string run_format = "json";
  int run_repeats = -1;
  int64_t run_seed = -1;
  run->add_option("--config", run_config, "JSON config file");
  run->add_option("--scenario", run_scenario_name);
  run->add_option("--method", run_method);
  run->add_option("--fractions", run_fractions, "Comma-separated list");
  run->add_option("--repeats", run_repeats);
  run->add_option("--seed", run_seed, "Master seed");
  run->add_option("--out", run_out, "Report output path")->required();
  run->add_option("--format", run_format, "json | csv | markdown");

  // ---- report ----
  auto* report = app.add_subcommand("report", "Re-render a saved JSON report");
  std::string rp_in, rp_out, rp_format = "markdown";
  report->add_option("--in", rp_in, "Saved JSON report")->required();
  report->add_option("--format", rp_format, "json | csv | markdown");
  report->add_option("--out", rp_out, "Output path (default: stdout)");

  CLI11_PARSE(app, argc, argv);
  const int workers = read_workers();

  if (*datagen) {
    if (bnci_like) {
      are::SynthSpec preset = are::SynthSpec::bnci_like();
      preset.seed = spec.seed;
      spec = preset;
    }
    are::TrialSet ts = are::generate_synthetic(spec);
    are::save_trialset(ts, dg_out);
    std::cout << "wrote " << ts.trials.size() << " trials to " << dg_out << "\n";
    return 0;
  }

  if (*pretrain) {
    are::TrialSet source = are::load_trialset(pt_data);
    are::ModelConfig mc;
    mc.c = source.c;
    mc.t = source.t;
    mc.K = source.K;
    are::Checkpoint ck;
    nlohmann::json metrics;
    if (federated) {
      are::FedConfig fc;
      fc.rounds = pt_rounds;
      fc.local_epochs = pt_local_epochs;
      fc.local.epochs = pt_local_epochs;
      fc.seed = pt_seed;
      std::vector<are::RoundStat> log;
      ck = are::federated_pretrain(source, mc, fc, &log);
      metrics["rounds"] = are::round_log_json(log);
    } else {
      are::TrialSet aligned = are::align_per_user(source);
      are::TrainConfig tc;
      tc.epochs = pt_epochs;
      tc.seed = pt_seed;
      std::vector<are::EpochStat> stats;
      ck.config = mc;
      ck.params = are::train(are::init_params(mc, are::seed_mix(pt_seed, "init")),
                             mc, aligned, tc, nullptr, &stats);
      nlohmann::json epochs = nlohmann::json::array();
      for (const auto& s : stats)
        epochs.push_back({{"epoch", s.epoch}, {"loss", s.loss},
                          {"accuracy", s.accuracy}});
      metrics["epochs"] = std::move(epochs);
    }
    are::save_checkpoint(ck, pt_out);
    std::ofstream mf(pt_out + ".metrics.json");
    if (!mf) throw are::IoError("cannot write metrics: " + pt_out + ".metrics.json");
    mf << metrics.dump(2) << "\n";
    std::cout << "wrote checkpoint " << pt_out << "\n";
    return 0;
  }

  if (*perturb) {
    are::TrialSet source = are::load_trialset(pb_data);
    are::TrialSet aligned = are::align_per_user(source);
    are::PerturbConfig pc;
    pc.rho = pb_rho;
    pc.seed = pb_seed;
    are::TrialSet unlearnable =
        are::apply_perturbations(aligned, are::generate_user_perturbations(aligned, pc));
    are::save_trialset(unlearnable, pb_out,
                       nlohmann::json{{"perturbed", true}, {"rho", pb_rho}});
    std::cout << "wrote perturbed set to " << pb_out << "\n";
    return 0;
  }

  if (*run) {
    are::ScenarioConfig cfg;
    if (!run_config.empty()) apply_json_config(load_json_file(run_config), cfg);
    if (!run_scenario_name.empty()) cfg.scenario = are::parse_scenario(run_scenario_name);
    if (!run_method.empty()) cfg.method = are::parse_method(run_method);
    if (!run_fractions.empty()) cfg.calibration_fractions = parse_fractions(run_fractions);
    if (run_repeats > 0) cfg.repeats = run_repeats;
    if (run_seed >= 0) cfg.master_seed = static_cast<uint64_t>(run_seed);
    are::EvalReport rep = are::run_scenario(cfg, workers);
    are::write_report(rep, run_out, run_format);
    const auto s = rep.summary();
    std::cout << "scenario=" << rep.scenario << " method=" << rep.method
              << " avg=" << s.avg << " (" << s.n_failed << " failed cells)\n";
    return 0;
  }

  if (*report) {
    are::EvalReport rep = are::report_from_json(load_json_file(rp_in));
    if (rp_out.empty())
      std::cout << are::render_report(rep, rp_format);
    else
      are::write_report(rep, rp_out, rp_format);
    return 0;
  }

  throw are::UsageError("no subcommand selected");
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_main(argc, argv);
  } catch (const std::exception& e) {
    nlohmann::json err{{"error", typeid(e).name()}, {"message", e.what()}};
    // readable error kind instead of the mangled typeid
    auto kind = [&]() -> const char* {
      if (dynamic_cast<const are::DimensionError*>(&e)) return "dimension";
      if (dynamic_cast<const are::ValidationError*>(&e)) return "validation";
      if (dynamic_cast<const are::NumericError*>(&e)) return "numeric";
      if (dynamic_cast<const are::FormatError*>(&e)) return "format";
      if (dynamic_cast<const are::IoError*>(&e)) return "io";
      if (dynamic_cast<const are::UnsupportedError*>(&e)) return "unsupported";
      if (dynamic_cast<const are::UsageError*>(&e)) return "usage";
      return "internal";
    };
    err["error"] = kind();
    std::cerr << err.dump() << std::endl;
    return 1;
  }
}
