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

#include "fedsim/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

#include "fedsim/dp_tree.hpp"

namespace fedsim {

namespace {

void parallel_for(Index n, Index threads, const std::function<void(Index)>& fn) {
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr first_error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (Index t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (Index i = t; i < n; i += threads) fn(i);
      } catch (...) {
        std::scoped_lock lock(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

struct Prepared {
  Vocab vocab;
  FederatedDataset train;
  FederatedDataset eval;
  std::vector<std::string> train_ids;
  LmDims dims;
};

Prepared prepare(const ExperimentConfig& cfg) {
  RawCorpus corpus = cfg.corpus.source == CorpusConfig::Source::kSynthetic
                         ? generate_synthetic(cfg.corpus.synth, cfg.seed)
                         : load_partitioned(cfg.corpus.path);
  Prepared prep;
  prep.vocab = build_vocab(corpus, cfg.vocab_target, cfg.corpus.tokenizer);
  FederatedDataset all =
      encode_corpus(corpus, prep.vocab, cfg.client.max_seq_len, cfg.corpus.tokenizer);
  DatasetSplit split = split_holdout(all);
  prep.train = std::move(split.train);
  prep.eval = std::move(split.eval);
  prep.train_ids = prep.train.client_ids();
  prep.dims = cfg.lm_dims(prep.vocab.size());
  if (cfg.clients_per_round > static_cast<Index>(prep.train_ids.size()))
    throw ConfigError("config: clients_per_round: exceeds the " +
                      std::to_string(prep.train_ids.size()) + " training clients");
  return prep;
}

TokenCounts eval_dataset(const LmParams& model, const FederatedDataset& ds, Index batch_size,
                         const Vocab& vocab, MetricsMode mode, Index max_clients, Index threads) {
  std::vector<const std::vector<std::vector<int>>*> clients;
  for (const auto& [id, seqs] : ds.clients) {
    clients.push_back(&seqs);
    if (max_clients > 0 && static_cast<Index>(clients.size()) >= max_clients) break;
  }
  std::vector<TokenCounts> per_client(clients.size());
  parallel_for(static_cast<Index>(clients.size()), threads, [&](Index i) {
    const auto& seqs = *clients[i];
    TokenCounts counts;
    for (std::size_t b = 0; b < seqs.size(); b += batch_size) {
      std::vector<std::vector<int>> batch(
          seqs.begin() + b, seqs.begin() + std::min(seqs.size(), b + batch_size));
      counts += lm_eval_batch(model, batch, vocab, mode);
    }
    per_client[i] = counts;
  });
  TokenCounts total;
  for (const TokenCounts& c : per_client) total += c;  // fixed client order
  return total;
}

std::uint64_t client_key(const std::string& id) { return fnv1a64(id); }

class Runner {
 public:
  Runner(const ExperimentConfig& cfg, std::string out_dir)
      : cfg_(cfg), out_dir_(std::move(out_dir)), prep_(prepare(cfg)), threads_(parallelism_from_env()) {
    std::filesystem::create_directories(out_dir_);
    layout_ = LmParams::init(prep_.dims, cfg_.seed).tree().layout();
    server_ = make_server_state(LmParams::init(prep_.dims, cfg_.seed).tree(), cfg_.server.opt);
    if (cfg_.dp_enabled) {
      DpConfig dp = cfg_.dp;
      dp.clients_per_round = cfg_.clients_per_round;
      tree_.emplace(server_.params.flat_size(), dp, cfg_.seed);
    }
  }

  RunResult run(const std::string& resume_path) {
    Index start_round = 0;
    if (!resume_path.empty()) start_round = restore(resume_path);
    writer_ = MetricsWriter(out_dir_ + "/metrics.jsonl", out_dir_ + "/metrics.csv");

    RunResult result;
    if (start_round == 0) {
      result.final_record = emit_records(0);
      initial_eval_loss_ = result.final_record.loss;
      if (result.final_record.diverged) return {kExitDiverged, result.final_record};
    }

    for (Index round = start_round + 1; round <= cfg_.rounds; ++round) {
      const auto t0 = std::chrono::steady_clock::now();
      try {
        train_round(round);
      } catch (const NonFiniteError& e) {
        std::cerr << "[fedsim] round " << round << ": " << e.what() << "\n";
        MetricsRecord rec;
        rec.round = round;
        rec.split = "eval";
        rec.loss = std::numeric_limits<double>::quiet_NaN();
        rec.perplexity = std::numeric_limits<double>::quiet_NaN();
        rec.upload_bytes = upload_bytes_;
        rec.diverged = true;
        writer_.write(rec);
        std::cerr << "[fedsim] run diverged at round " << round << "\n";
        return {kExitDiverged, rec};
      }
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

      if (round % cfg_.eval_every == 0 || round == cfg_.rounds) {
        MetricsRecord rec = emit_records(round, wall);
        result.final_record = rec;
        if (rec.diverged) return {kExitDiverged, rec};
      }
      if (cfg_.checkpoint_every > 0 && round % cfg_.checkpoint_every == 0 && round != cfg_.rounds)
        save(out_dir_ + "/checkpoint_round_" + std::to_string(round) + ".ckpt", round);
    }
    if (start_round >= cfg_.rounds) result.final_record = emit_records(cfg_.rounds);
    save(out_dir_ + "/checkpoint_final.ckpt", cfg_.rounds);
    return result;
  }

  MetricsRecord eval_only(const std::string& checkpoint_path) {
    CheckpointData ckpt = load_checkpoint(checkpoint_path);
    if (ckpt.config_hash != config_hash(cfg_))
      std::cerr << "[fedsim] warning: checkpoint config hash differs from the given config\n";
    check_checkpoint_shapes(ckpt, server_.params);
    for (auto& [name, t] : server_.params) t = ckpt.tensors.at(name);
    return eval_record(ckpt.round, "eval", 0.0);
  }

 private:
  MetricsRecord eval_record(Index round, const std::string& split, double wall) {
    const LmParams model = LmParams::from_tree(prep_.dims, server_.params);
    const bool is_eval = split == "eval";
    TokenCounts counts =
        eval_dataset(model, is_eval ? prep_.eval : prep_.train, cfg_.client.batch_size,
                     prep_.vocab, cfg_.metrics_mode, is_eval ? 0 : cfg_.eval_train_clients,
                     threads_);
    LossMetrics m = finalize_metrics(counts);
    MetricsRecord rec;
    rec.round = round;
    rec.split = split;
    rec.loss = m.loss;
    rec.perplexity = m.perplexity;
    rec.accuracy = m.accuracy;
    rec.counted_tokens = m.counts.counted_tokens;
    rec.wall_seconds = wall;
    rec.upload_bytes = upload_bytes_;
    return rec;
  }

  // Writes the train-sample and eval records for this round; flags the eval
  // record when the run has diverged (non-finite loss or 10x the initial).
  MetricsRecord emit_records(Index round, double wall = 0.0) {
    MetricsRecord train_rec = eval_record(round, "train_sample", wall);
    writer_.write(train_rec);
    MetricsRecord rec = eval_record(round, "eval", wall);
    rec.diverged = !std::isfinite(rec.loss) ||
                   (std::isfinite(initial_eval_loss_) && rec.loss > 10.0 * initial_eval_loss_);
    writer_.write(rec);
    std::cerr << "[fedsim] round " << round << " eval: loss " << rec.loss << " ppl "
              << rec.perplexity << " acc " << rec.accuracy << " (" << wall << "s/round)"
              << (rec.diverged ? " DIVERGED" : "") << "\n";
    return rec;
  }

  void train_round(Index round) {
    const Index n = cfg_.clients_per_round;
    const std::vector<std::string> sampled =
        sample_clients(prep_.train_ids, n, round, cfg_.seed);

    std::vector<ClientUpdate> updates(n);
    std::vector<Index> bytes(n);
    parallel_for(n, threads_, [&](Index i) {
      const std::string& cid = sampled[i];
      RngStream rng = RngStream::keyed({cfg_.seed, fnv1a64("client_update"),
                                        static_cast<std::uint64_t>(round), client_key(cid)});
      ClientUpdate u =
          client_update(prep_.dims, server_.params, prep_.train.clients.at(cid), cfg_.client, rng);
      if (cfg_.quant.enabled) {
        RngStream qrng = RngStream::keyed({cfg_.seed, fnv1a64("quantize"),
                                           static_cast<std::uint64_t>(round), client_key(cid)});
        QuantResult qr = quantize_update(u.delta, layout_, cfg_.quant, qrng);
        u.delta = std::move(qr.values);
        bytes[i] = qr.wire_bytes;
      } else {
        bytes[i] = u.delta.size() * static_cast<Index>(sizeof(double));
      }
      updates[i] = std::move(u);
    });
    for (Index i = 0; i < n; ++i) upload_bytes_ += bytes[i];

    Eigen::VectorXd mean_delta;
    if (cfg_.dp_enabled) {
      Eigen::VectorXd round_sum = Eigen::VectorXd::Zero(server_.params.flat_size());
      for (const ClientUpdate& u : updates)
        round_sum += clip_update(u.delta, cfg_.dp.clip_norm);
      TreeAgg::StepResult step = tree_->step(round_sum);
      mean_delta = step.round_input / static_cast<double>(n);
    } else {
      mean_delta = aggregate(updates, cfg_.weighting);
    }

    if (cfg_.server.opt == ServerOpt::kFedAdam) {
      fedadam_step(server_, mean_delta, cfg_.server.learning_rate, cfg_.server.beta1,
                   cfg_.server.beta2, cfg_.server.epsilon);
    } else {
      sgdm_step(server_, mean_delta, cfg_.server.learning_rate, cfg_.server.momentum);
    }
  }

  void save(const std::string& path, Index round) {
    ParamTree snapshot = server_.params;
    snapshot.add("__opt__.m", Tensor::from_vec(server_.m));
    snapshot.add("__opt__.v", Tensor::from_vec(server_.v));
    snapshot.add("__opt__.velocity", Tensor::from_vec(server_.velocity));
    snapshot.add("__meta__.upload_bytes",
                 Tensor::scalar(static_cast<double>(upload_bytes_)));
    snapshot.add("__meta__.initial_eval_loss", Tensor::scalar(initial_eval_loss_));
    if (tree_) tree_->append_state(snapshot);
    save_checkpoint(path, snapshot, config_hash(cfg_), round);
  }

  Index restore(const std::string& path) {
    CheckpointData ckpt = load_checkpoint(path);
    if (ckpt.config_hash != config_hash(cfg_))
      throw ConfigError("resume: checkpoint was written by a different configuration");
    check_checkpoint_shapes(ckpt, server_.params);
    for (auto& [name, t] : server_.params) t = ckpt.tensors.at(name);
    server_.m = ckpt.tensors.at("__opt__.m").data;
    server_.v = ckpt.tensors.at("__opt__.v").data;
    server_.velocity = ckpt.tensors.at("__opt__.velocity").data;
    server_.round = ckpt.round;
    upload_bytes_ = static_cast<Index>(ckpt.tensors.at("__meta__.upload_bytes").data[0]);
    initial_eval_loss_ = ckpt.tensors.at("__meta__.initial_eval_loss").data[0];
    if (tree_) {
      DpConfig dp = cfg_.dp;
      dp.clients_per_round = cfg_.clients_per_round;
      tree_ = TreeAgg::restore(server_.params.flat_size(), dp, cfg_.seed, ckpt.round,
                               ckpt.tensors);
    }
    return ckpt.round;
  }

  ExperimentConfig cfg_;
  std::string out_dir_;
  Prepared prep_;
  Index threads_;
  std::vector<ParamTree::Segment> layout_;
  ServerState server_;
  std::optional<TreeAgg> tree_;
  MetricsWriter writer_;
  Index upload_bytes_ = 0;
  double initial_eval_loss_ = std::numeric_limits<double>::quiet_NaN();
};

}  // namespace

Index parallelism_from_env() {
  if (const char* env = std::getenv("FEDSIM_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<Index>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

RunResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                         const std::string& resume_path) {
  Runner runner(cfg, out_dir);
  return runner.run(resume_path);
}

MetricsRecord eval_checkpoint(const ExperimentConfig& cfg, const std::string& checkpoint_path) {
  Runner runner(cfg, "/tmp");
  return runner.eval_only(checkpoint_path);
}

}  // namespace fedsim
