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

#ifndef FEDSIM_EXPERIMENT_HPP_
#define FEDSIM_EXPERIMENT_HPP_

#include <string>

#include "fedsim/checkpoint.hpp"
#include "fedsim/config.hpp"

namespace fedsim {

// Exit codes shared by the library and the CLI.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDiverged = 3;
inline constexpr int kExitIo = 4;

struct RunResult {
  int exit_code = kExitOk;
  MetricsRecord final_record;
};

// Runs the configured experiment: per round, sample clients, run local SGD,
// optionally quantize uploads, aggregate (or clip+tree-aggregate under DP),
// and apply the server optimizer. Metrics land in <out_dir>/metrics.jsonl
// and metrics.csv, checkpoints in <out_dir>/checkpoint_*.ckpt. Fully
// deterministic in the seed, independent of FEDSIM_THREADS.
RunResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                         const std::string& resume_path = "");

// Evaluates a checkpoint on the held-out split and prints one metrics line.
MetricsRecord eval_checkpoint(const ExperimentConfig& cfg, const std::string& checkpoint_path);

// FEDSIM_THREADS, defaulting to the hardware concurrency.
Index parallelism_from_env();

}  // namespace fedsim

#endif  // FEDSIM_EXPERIMENT_HPP_
