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

#ifndef FEDSIM_CONFIG_HPP_
#define FEDSIM_CONFIG_HPP_

#include <string>
#include <vector>

#include "fedsim/corpus.hpp"
#include "fedsim/dp_tree.hpp"
#include "fedsim/federated.hpp"
#include "fedsim/metrics.hpp"

namespace fedsim {

struct ServerConfig {
  ServerOpt opt = ServerOpt::kFedAdam;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double momentum = 0.9;
};

struct CorpusConfig {
  enum class Source { kSynthetic, kFile };
  Source source = Source::kSynthetic;
  std::string path;
  SynthConfig synth;
  TokenizerKind tokenizer = TokenizerKind::kWhitespace;
};

// The whole experiment, parsed from flat `key = value` text with dotted
// namespaces. Unknown keys are errors; every constraint violation names the
// key it came from.
struct ExperimentConfig {
  ModelVariant variant = ModelVariant::kCifgStandard;
  std::uint64_t seed = 1;
  Index rounds = 10;
  Index clients_per_round = 10;
  Weighting weighting = Weighting::kExampleWeighted;

  Index vocab_target = 150;  // requested V; the built vocab may be smaller
  Index embed = 32;
  Index hidden = 64;
  Index layers = 2;
  Index heads = 2;
  Index ffn = 64;
  double eps = kDefaultActivationEps;

  ClientConfig client;
  ServerConfig server;
  QuantConfig quant;
  bool dp_enabled = false;
  DpConfig dp;
  CorpusConfig corpus;

  MetricsMode metrics_mode = MetricsMode::kStandard;
  Index eval_every = 10;
  Index eval_train_clients = 5;
  Index checkpoint_every = 0;  // 0 = only the final checkpoint

  LmDims lm_dims(Index actual_vocab) const;
};

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides = {});
ExperimentConfig parse_config(const std::string& path,
                              const std::vector<std::string>& overrides = {});

// Canonical `key = value` rendering of every field (sorted), used for the
// checkpoint hash and for logging the effective configuration.
std::string serialize_config(const ExperimentConfig& cfg);

// Hash of the effective config minus `rounds`: training can stop at any
// round and resume toward a later target without changing identity.
std::uint64_t config_hash(const ExperimentConfig& cfg);

}  // namespace fedsim

#endif  // FEDSIM_CONFIG_HPP_
