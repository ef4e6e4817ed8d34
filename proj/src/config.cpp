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

#include "fedsim/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "fedsim/rng.hpp"

namespace fedsim {

LmDims ExperimentConfig::lm_dims(Index actual_vocab) const {
  LmDims d;
  d.variant = variant;
  d.vocab = actual_vocab;
  d.embed = embed;
  d.hidden = is_cifg(variant) ? hidden : embed;  // the transformer works at embed width
  d.layers = layers;
  d.heads = heads;
  d.ffn = ffn;
  d.max_seq_len = client.max_seq_len;
  d.eps = eps;
  return d;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

class KeyValues {
 public:
  void set(const std::string& key, const std::string& value, bool allow_replace) {
    if (!allow_replace && kv_.count(key))
      throw ConfigError("config: duplicate key '" + key + "'");
    kv_[key] = value;
  }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  template <typename Fn>
  void take(const std::string& key, Fn&& fn) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return;
    fn(it->second);
    kv_.erase(it);
  }

  void reject_leftovers() const {
    if (!kv_.empty()) throw ConfigError("config: unknown key '" + kv_.begin()->first + "'");
  }

 private:
  std::map<std::string, std::string> kv_;
};

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double x = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + ": expected a number, got '" + value + "'");
  }
}

Index parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return static_cast<Index>(x);
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + ": expected an integer, got '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long x = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return static_cast<std::uint64_t>(x);
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + ": expected an unsigned integer, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config: " + key + ": expected true/false, got '" + value + "'");
}

void require(bool ok, const std::string& key, const std::string& constraint) {
  if (!ok) throw ConfigError("config: " + key + ": " + constraint);
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(line_no) + ": expected key = value");
    kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), /*allow_replace=*/false);
  }
  for (const std::string& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: override '" + ov + "': expected key=value");
    kv.set(trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)), /*allow_replace=*/true);
  }

  ExperimentConfig cfg;
  bool weighting_explicit = false;

  kv.take("variant", [&](const std::string& v) {
    try {
      cfg.variant = variant_from_name(v);
    } catch (const Error& e) {
      throw ConfigError(std::string("config: variant: ") + e.what());
    }
  });
  kv.take("seed", [&](const std::string& v) { cfg.seed = parse_u64("seed", v); });
  kv.take("rounds", [&](const std::string& v) { cfg.rounds = parse_int("rounds", v); });
  kv.take("clients_per_round",
          [&](const std::string& v) { cfg.clients_per_round = parse_int("clients_per_round", v); });
  kv.take("weighting", [&](const std::string& v) {
    weighting_explicit = true;
    try {
      cfg.weighting = weighting_from_name(v);
    } catch (const Error& e) {
      throw ConfigError(std::string("config: weighting: ") + e.what());
    }
  });

  kv.take("model.vocab", [&](const std::string& v) { cfg.vocab_target = parse_int("model.vocab", v); });
  kv.take("model.embed", [&](const std::string& v) { cfg.embed = parse_int("model.embed", v); });
  kv.take("model.hidden", [&](const std::string& v) { cfg.hidden = parse_int("model.hidden", v); });
  kv.take("model.layers", [&](const std::string& v) { cfg.layers = parse_int("model.layers", v); });
  kv.take("model.heads", [&](const std::string& v) { cfg.heads = parse_int("model.heads", v); });
  kv.take("model.ffn", [&](const std::string& v) { cfg.ffn = parse_int("model.ffn", v); });
  kv.take("model.eps", [&](const std::string& v) { cfg.eps = parse_double("model.eps", v); });

  kv.take("client.learning_rate",
          [&](const std::string& v) { cfg.client.learning_rate = parse_double("client.learning_rate", v); });
  kv.take("client.batch_size",
          [&](const std::string& v) { cfg.client.batch_size = parse_int("client.batch_size", v); });
  kv.take("client.epochs",
          [&](const std::string& v) { cfg.client.epochs = parse_int("client.epochs", v); });
  kv.take("client.max_batches",
          [&](const std::string& v) { cfg.client.max_batches = parse_int("client.max_batches", v); });
  kv.take("client.max_seq_len",
          [&](const std::string& v) { cfg.client.max_seq_len = parse_int("client.max_seq_len", v); });

  kv.take("server.optimizer", [&](const std::string& v) {
    try {
      cfg.server.opt = server_opt_from_name(v);
    } catch (const Error& e) {
      throw ConfigError(std::string("config: server.optimizer: ") + e.what());
    }
  });
  kv.take("server.learning_rate",
          [&](const std::string& v) { cfg.server.learning_rate = parse_double("server.learning_rate", v); });
  kv.take("server.beta1", [&](const std::string& v) { cfg.server.beta1 = parse_double("server.beta1", v); });
  kv.take("server.beta2", [&](const std::string& v) { cfg.server.beta2 = parse_double("server.beta2", v); });
  kv.take("server.epsilon",
          [&](const std::string& v) { cfg.server.epsilon = parse_double("server.epsilon", v); });
  kv.take("server.momentum",
          [&](const std::string& v) { cfg.server.momentum = parse_double("server.momentum", v); });

  kv.take("quant.enabled", [&](const std::string& v) { cfg.quant.enabled = parse_bool("quant.enabled", v); });
  kv.take("quant.bits",
          [&](const std::string& v) { cfg.quant.bits = static_cast<int>(parse_int("quant.bits", v)); });

  kv.take("dp.enabled", [&](const std::string& v) { cfg.dp_enabled = parse_bool("dp.enabled", v); });
  kv.take("dp.clip_norm", [&](const std::string& v) { cfg.dp.clip_norm = parse_double("dp.clip_norm", v); });
  kv.take("dp.noise_multiplier", [&](const std::string& v) {
    cfg.dp.noise_multiplier = parse_double("dp.noise_multiplier", v);
  });
  kv.take("dp.reported_zcdp",
          [&](const std::string& v) { cfg.dp.reported_zcdp = parse_double("dp.reported_zcdp", v); });

  kv.take("corpus.source", [&](const std::string& v) {
    if (v == "synthetic")
      cfg.corpus.source = CorpusConfig::Source::kSynthetic;
    else if (v == "file")
      cfg.corpus.source = CorpusConfig::Source::kFile;
    else
      throw ConfigError("config: corpus.source: expected synthetic|file, got '" + v + "'");
  });
  kv.take("corpus.path", [&](const std::string& v) { cfg.corpus.path = v; });
  kv.take("corpus.clients",
          [&](const std::string& v) { cfg.corpus.synth.n_clients = parse_int("corpus.clients", v); });
  kv.take("corpus.sentences_per_client", [&](const std::string& v) {
    cfg.corpus.synth.sentences_per_client = parse_int("corpus.sentences_per_client", v);
  });
  kv.take("corpus.vocab_types", [&](const std::string& v) {
    cfg.corpus.synth.vocab_types = parse_int("corpus.vocab_types", v);
  });
  kv.take("corpus.alpha",
          [&](const std::string& v) { cfg.corpus.synth.alpha = parse_double("corpus.alpha", v); });
  kv.take("corpus.min_len",
          [&](const std::string& v) { cfg.corpus.synth.min_len = parse_int("corpus.min_len", v); });
  kv.take("corpus.max_len",
          [&](const std::string& v) { cfg.corpus.synth.max_len = parse_int("corpus.max_len", v); });
  kv.take("corpus.zipf_s",
          [&](const std::string& v) { cfg.corpus.synth.zipf_s = parse_double("corpus.zipf_s", v); });
  kv.take("corpus.tokenizer", [&](const std::string& v) {
    if (v == "whitespace")
      cfg.corpus.tokenizer = TokenizerKind::kWhitespace;
    else if (v == "char")
      cfg.corpus.tokenizer = TokenizerKind::kChar;
    else
      throw ConfigError("config: corpus.tokenizer: expected whitespace|char, got '" + v + "'");
  });

  kv.take("metrics.mode", [&](const std::string& v) {
    try {
      cfg.metrics_mode = metrics_mode_from_name(v);
    } catch (const Error& e) {
      throw ConfigError(std::string("config: metrics.mode: ") + e.what());
    }
  });
  kv.take("eval.every", [&](const std::string& v) { cfg.eval_every = parse_int("eval.every", v); });
  kv.take("eval.train_clients",
          [&](const std::string& v) { cfg.eval_train_clients = parse_int("eval.train_clients", v); });
  kv.take("checkpoint.every",
          [&](const std::string& v) { cfg.checkpoint_every = parse_int("checkpoint.every", v); });

  kv.reject_leftovers();

  // --- validation ---------------------------------------------------------
  require(cfg.rounds >= 1, "rounds", "must be >= 1");
  require(cfg.clients_per_round >= 1, "clients_per_round", "must be >= 1");
  require(cfg.vocab_target >= 4, "model.vocab", "must be >= 4 (3 ids are reserved)");
  require(cfg.embed >= 1, "model.embed", "must be >= 1");
  require(cfg.hidden >= 1, "model.hidden", "must be >= 1");
  require(cfg.layers >= 1, "model.layers", "must be >= 1");
  require(cfg.heads >= 1, "model.heads", "must be >= 1");
  require(cfg.ffn >= 1, "model.ffn", "must be >= 1");
  require(cfg.eps >= 0, "model.eps", "must be >= 0");
  if (!is_cifg(cfg.variant))
    require(cfg.embed % cfg.heads == 0, "model.heads", "must divide model.embed");
  require(cfg.client.learning_rate >= 0, "client.learning_rate", "must be >= 0");
  require(cfg.client.batch_size >= 1, "client.batch_size", "must be >= 1");
  require(cfg.client.epochs >= 1, "client.epochs", "must be >= 1");
  require(cfg.client.max_batches >= 1, "client.max_batches", "must be >= 1");
  require(cfg.client.max_seq_len >= 2, "client.max_seq_len", "must be >= 2");
  require(cfg.server.learning_rate >= 0, "server.learning_rate", "must be >= 0");
  require(cfg.server.beta1 >= 0 && cfg.server.beta1 < 1, "server.beta1", "must be in [0,1)");
  require(cfg.server.beta2 >= 0 && cfg.server.beta2 < 1, "server.beta2", "must be in [0,1)");
  require(cfg.server.epsilon > 0, "server.epsilon", "must be > 0");
  require(cfg.server.momentum >= 0 && cfg.server.momentum < 1, "server.momentum",
          "must be in [0,1)");
  require(cfg.quant.bits >= 2 && cfg.quant.bits <= 16, "quant.bits", "must be in [2,16]");
  require(cfg.dp.clip_norm > 0, "dp.clip_norm", "must be > 0");
  require(cfg.dp.noise_multiplier >= 0, "dp.noise_multiplier", "must be >= 0");
  require(cfg.corpus.synth.n_clients >= 1, "corpus.clients", "must be >= 1");
  require(cfg.corpus.synth.sentences_per_client >= 1, "corpus.sentences_per_client",
          "must be >= 1");
  require(cfg.corpus.synth.vocab_types >= 2, "corpus.vocab_types", "must be >= 2");
  require(cfg.corpus.synth.alpha >= 0 && cfg.corpus.synth.alpha <= 1, "corpus.alpha",
          "must be in [0,1]");
  require(cfg.corpus.synth.min_len >= 1, "corpus.min_len", "must be >= 1");
  require(cfg.corpus.synth.max_len >= cfg.corpus.synth.min_len, "corpus.max_len",
          "must be >= corpus.min_len");
  require(cfg.eval_every >= 1, "eval.every", "must be >= 1");
  require(cfg.eval_train_clients >= 1, "eval.train_clients", "must be >= 1");
  require(cfg.checkpoint_every >= 0, "checkpoint.every", "must be >= 0");
  if (cfg.corpus.source == CorpusConfig::Source::kFile)
    require(!cfg.corpus.path.empty(), "corpus.path", "required when corpus.source = file");

  if (cfg.dp_enabled) {
    require(!cfg.quant.enabled, "dp.enabled",
            "quantized uploads cannot be combined with DP clipping");
    if (weighting_explicit)
      require(cfg.weighting == Weighting::kUniform, "weighting",
              "DP aggregation requires uniform weighting");
    cfg.weighting = Weighting::kUniform;  // clipping bounds each client equally
    cfg.dp.clients_per_round = cfg.clients_per_round;
  }
  return cfg;
}

ExperimentConfig parse_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str(), overrides);
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "client.batch_size = " << cfg.client.batch_size << "\n";
  os << "client.epochs = " << cfg.client.epochs << "\n";
  os << "client.learning_rate = " << cfg.client.learning_rate << "\n";
  os << "client.max_batches = " << cfg.client.max_batches << "\n";
  os << "client.max_seq_len = " << cfg.client.max_seq_len << "\n";
  os << "clients_per_round = " << cfg.clients_per_round << "\n";
  os << "corpus.alpha = " << cfg.corpus.synth.alpha << "\n";
  os << "corpus.clients = " << cfg.corpus.synth.n_clients << "\n";
  os << "corpus.max_len = " << cfg.corpus.synth.max_len << "\n";
  os << "corpus.min_len = " << cfg.corpus.synth.min_len << "\n";
  os << "corpus.path = " << cfg.corpus.path << "\n";
  os << "corpus.sentences_per_client = " << cfg.corpus.synth.sentences_per_client << "\n";
  os << "corpus.source = "
     << (cfg.corpus.source == CorpusConfig::Source::kSynthetic ? "synthetic" : "file") << "\n";
  os << "corpus.tokenizer = "
     << (cfg.corpus.tokenizer == TokenizerKind::kWhitespace ? "whitespace" : "char") << "\n";
  os << "corpus.vocab_types = " << cfg.corpus.synth.vocab_types << "\n";
  os << "corpus.zipf_s = " << cfg.corpus.synth.zipf_s << "\n";
  os << "checkpoint.every = " << cfg.checkpoint_every << "\n";
  os << "dp.clip_norm = " << cfg.dp.clip_norm << "\n";
  os << "dp.enabled = " << (cfg.dp_enabled ? "true" : "false") << "\n";
  os << "dp.noise_multiplier = " << cfg.dp.noise_multiplier << "\n";
  if (cfg.dp.reported_zcdp) os << "dp.reported_zcdp = " << *cfg.dp.reported_zcdp << "\n";
  os << "eval.every = " << cfg.eval_every << "\n";
  os << "eval.train_clients = " << cfg.eval_train_clients << "\n";
  os << "metrics.mode = " << (cfg.metrics_mode == MetricsMode::kStandard ? "standard" : "in_vocab")
     << "\n";
  os << "model.embed = " << cfg.embed << "\n";
  os << "model.eps = " << cfg.eps << "\n";
  os << "model.ffn = " << cfg.ffn << "\n";
  os << "model.heads = " << cfg.heads << "\n";
  os << "model.hidden = " << cfg.hidden << "\n";
  os << "model.layers = " << cfg.layers << "\n";
  os << "model.vocab = " << cfg.vocab_target << "\n";
  os << "quant.bits = " << cfg.quant.bits << "\n";
  os << "quant.enabled = " << (cfg.quant.enabled ? "true" : "false") << "\n";
  os << "rounds = " << cfg.rounds << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "server.beta1 = " << cfg.server.beta1 << "\n";
  os << "server.beta2 = " << cfg.server.beta2 << "\n";
  os << "server.epsilon = " << cfg.server.epsilon << "\n";
  os << "server.learning_rate = " << cfg.server.learning_rate << "\n";
  os << "server.momentum = " << cfg.server.momentum << "\n";
  os << "server.optimizer = " << (cfg.server.opt == ServerOpt::kFedAdam ? "fedadam" : "sgdm")
     << "\n";
  os << "variant = " << variant_name(cfg.variant) << "\n";
  os << "weighting = "
     << (cfg.weighting == Weighting::kUniform ? "uniform" : "example_weighted") << "\n";
  return os.str();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  std::istringstream in(serialize_config(cfg));
  std::string line, kept;
  while (std::getline(in, line))
    if (line.rfind("rounds = ", 0) != 0) kept += line + "\n";
  return fnv1a64(kept);
}

}  // namespace fedsim
