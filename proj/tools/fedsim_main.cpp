// Copyright 2026 The fedsim Authors. All Rights Reserved.
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

#include <CLI11.hpp>

#include <iostream>

#include "fedsim/experiment.hpp"

namespace {

int run_cmd(const std::string& config_path, const std::vector<std::string>& overrides,
            const std::string& out_dir, const std::string& resume) {
  fedsim::ExperimentConfig cfg = fedsim::parse_config(config_path, overrides);
  fedsim::RunResult result = fedsim::run_experiment(cfg, out_dir, resume);
  std::cout << fedsim::to_jsonl(result.final_record) << "\n";
  return result.exit_code;
}

int eval_cmd(const std::string& config_path, const std::vector<std::string>& overrides,
             const std::string& checkpoint) {
  fedsim::ExperimentConfig cfg = fedsim::parse_config(config_path, overrides);
  fedsim::MetricsRecord rec = fedsim::eval_checkpoint(cfg, checkpoint);
  std::cout << fedsim::to_jsonl(rec) << "\n";
  return fedsim::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedsim: federated training simulator for scale-invariant language models"};
  app.require_subcommand(1);

  std::string config_path, out_dir, resume, checkpoint;
  std::vector<std::string> overrides;

  CLI::App* run = app.add_subcommand("run", "train a model federatedly");
  run->add_option("--config", config_path, "experiment config file")->required();
  run->add_option("--override", overrides, "key=value config overrides");
  run->add_option("--out", out_dir, "output directory for metrics and checkpoints")->required();
  run->add_option("--resume", resume, "checkpoint to resume from");

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on the held-out split");
  ev->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  ev->add_option("--config", config_path, "experiment config file")->required();
  ev->add_option("--override", overrides, "key=value config overrides");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : fedsim::kExitConfig;
  }

  try {
    if (app.got_subcommand("run")) return run_cmd(config_path, overrides, out_dir, resume);
    return eval_cmd(config_path, overrides, checkpoint);
  } catch (const fedsim::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return fedsim::kExitConfig;
  } catch (const fedsim::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return fedsim::kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
