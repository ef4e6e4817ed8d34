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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fedsim/experiment.hpp"

using namespace fedsim;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string fresh_dir(const std::string& name) {
  const std::string dir = "/tmp/fedsim_exp/" + name;
  std::system(("rm -rf " + dir).c_str());
  return dir;
}

// Small but real: 12 clients, tiny SI-CIFG, whitespace synthetic corpus.
std::string tiny_config() {
  return R"(
variant = si_cifg
seed = 11
rounds = 2
clients_per_round = 3
model.vocab = 40
model.embed = 8
model.hidden = 12
client.learning_rate = 0.3
client.batch_size = 5
client.max_seq_len = 8
corpus.clients = 12
corpus.sentences_per_client = 6
corpus.vocab_types = 30
corpus.min_len = 2
corpus.max_len = 6
eval.every = 1
)";
}

std::vector<std::string> jsonl_lines(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_CASE("tiny run: exit 0, records in round order, derived fields consistent") {
  const std::string dir = fresh_dir("tiny");
  ExperimentConfig cfg = parse_config_text(tiny_config());
  RunResult r = run_experiment(cfg, dir);
  CHECK(r.exit_code == kExitOk);
  CHECK(!r.final_record.diverged);

  auto lines = jsonl_lines(dir + "/metrics.jsonl");
  CHECK(lines.size() == 6);  // rounds 0,1,2 x {train_sample, eval}
  Index last_round = -1;
  for (const auto& line : lines) {
    const auto p = line.find("\"round\":");
    const Index round = std::stol(line.substr(p + 8));
    CHECK(round >= last_round);
    last_round = round;

    const auto lp = line.find("\"loss\":");
    const auto pp = line.find("\"perplexity\":");
    const double loss = std::stod(line.substr(lp + 7));
    const double ppl = std::stod(line.substr(pp + 13));
    CHECK(ppl == doctest::Approx(std::exp(loss)).epsilon(1e-9));
  }
  CHECK(slurp(dir + "/metrics.csv").find("round,split,loss") == 0);
}

TEST_CASE("same config and seed give byte-identical metrics files") {
  ExperimentConfig cfg = parse_config_text(tiny_config());
  const std::string d1 = fresh_dir("det1");
  const std::string d2 = fresh_dir("det2");
  run_experiment(cfg, d1);
  run_experiment(cfg, d2);
  CHECK(slurp(d1 + "/metrics.jsonl") == slurp(d2 + "/metrics.jsonl"));
  CHECK(slurp(d1 + "/metrics.csv") == slurp(d2 + "/metrics.csv"));
  CHECK(slurp(d1 + "/checkpoint_final.ckpt") == slurp(d2 + "/checkpoint_final.ckpt"));
}

TEST_CASE("parallelism degree does not change results") {
  ExperimentConfig cfg = parse_config_text(tiny_config());
  const std::string d1 = fresh_dir("thr1");
  const std::string d2 = fresh_dir("thr2");
  setenv("FEDSIM_THREADS", "1", 1);
  run_experiment(cfg, d1);
  setenv("FEDSIM_THREADS", "4", 1);
  run_experiment(cfg, d2);
  unsetenv("FEDSIM_THREADS");
  CHECK(slurp(d1 + "/metrics.jsonl") == slurp(d2 + "/metrics.jsonl"));
  CHECK(slurp(d1 + "/checkpoint_final.ckpt") == slurp(d2 + "/checkpoint_final.ckpt"));
}

TEST_CASE("checkpoint resume replays the straight-through trajectory exactly") {
  const std::string dir_a = fresh_dir("resume_straight");
  const std::string dir_b = fresh_dir("resume_half");
  const std::string dir_c = fresh_dir("resume_rest");

  ExperimentConfig full = parse_config_text(tiny_config(), {"rounds=4", "checkpoint.every=2"});
  run_experiment(full, dir_a);

  ExperimentConfig half = parse_config_text(tiny_config(), {"rounds=2"});
  run_experiment(half, dir_b);
  ExperimentConfig rest = parse_config_text(tiny_config(), {"rounds=4"});
  RunResult r = run_experiment(rest, dir_c, dir_b + "/checkpoint_final.ckpt");
  CHECK(r.exit_code == kExitOk);

  CHECK(slurp(dir_a + "/checkpoint_final.ckpt") == slurp(dir_c + "/checkpoint_final.ckpt"));

  // The resumed metrics must equal the tail of the straight-through metrics.
  auto all = jsonl_lines(dir_a + "/metrics.jsonl");
  auto tail = jsonl_lines(dir_c + "/metrics.jsonl");
  REQUIRE(all.size() == 10);  // rounds 0..4 x 2 splits
  REQUIRE(tail.size() == 4);  // rounds 3,4 x 2 splits
  for (std::size_t i = 0; i < tail.size(); ++i) CHECK(tail[i] == all[all.size() - 4 + i]);
}

TEST_CASE("DP with z=0 and clipping off equals the non-DP uniform pipeline bit-exactly") {
  const std::string base = tiny_config();
  ExperimentConfig plain = parse_config_text(
      base, {"rounds=20", "weighting=uniform", "server.optimizer=sgdm",
             "server.learning_rate=1.0", "server.momentum=0.9"});
  ExperimentConfig dp = parse_config_text(
      base, {"rounds=20", "server.optimizer=sgdm", "server.learning_rate=1.0",
             "server.momentum=0.9", "dp.enabled=true", "dp.noise_multiplier=0",
             "dp.clip_norm=inf"});
  const std::string d1 = fresh_dir("plain");
  const std::string d2 = fresh_dir("dp0");
  RunResult r1 = run_experiment(plain, d1);
  RunResult r2 = run_experiment(dp, d2);
  CHECK(r1.exit_code == kExitOk);
  CHECK(r2.exit_code == kExitOk);
  CHECK(slurp(d1 + "/metrics.jsonl") == slurp(d2 + "/metrics.jsonl"));
}

TEST_CASE("divergence flags the final record and reports exit code 3") {
  // A huge client learning rate reliably blows the loss up.
  ExperimentConfig cfg = parse_config_text(
      tiny_config(), {"client.learning_rate=1e6", "variant=cifg", "rounds=6"});
  const std::string dir = fresh_dir("diverge");
  RunResult r = run_experiment(cfg, dir);
  CHECK(r.exit_code == kExitDiverged);
  CHECK(r.final_record.diverged);
  auto lines = jsonl_lines(dir + "/metrics.jsonl");
  REQUIRE(!lines.empty());
  CHECK(lines.back().find("\"diverged\":true") != std::string::npos);
}

TEST_CASE("eval subcommand path: checkpoint evaluation matches the final record") {
  ExperimentConfig cfg = parse_config_text(tiny_config());
  const std::string dir = fresh_dir("evalcmd");
  RunResult r = run_experiment(cfg, dir);
  MetricsRecord rec = eval_checkpoint(cfg, dir + "/checkpoint_final.ckpt");
  CHECK(rec.loss == r.final_record.loss);
  CHECK(rec.accuracy == r.final_record.accuracy);
  CHECK(rec.counted_tokens == r.final_record.counted_tokens);
}

TEST_CASE("quantized uploads shrink the reported bytes") {
  ExperimentConfig plain = parse_config_text(tiny_config());
  ExperimentConfig quant = parse_config_text(tiny_config(), {"quant.enabled=true"});
  const std::string d1 = fresh_dir("bytes_plain");
  const std::string d2 = fresh_dir("bytes_quant");
  RunResult r1 = run_experiment(plain, d1);
  RunResult r2 = run_experiment(quant, d2);
  CHECK(r2.final_record.upload_bytes * 7 < r1.final_record.upload_bytes);
  CHECK(r2.final_record.upload_bytes > 0);
}
