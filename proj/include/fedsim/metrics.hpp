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

#ifndef FEDSIM_METRICS_HPP_
#define FEDSIM_METRICS_HPP_

#include <fstream>
#include <string>
#include <vector>

#include "fedsim/corpus.hpp"
#include "fedsim/tensor.hpp"

namespace fedsim {

// standard: metrics discount end-of-sequence tokens; in_vocab additionally
// discounts out-of-vocabulary tokens. Padding never counts anywhere.
enum class MetricsMode { kStandard, kInVocab };
MetricsMode metrics_mode_from_name(const std::string& name);

struct TokenCounts {
  Index loss_tokens = 0;        // non-pad targets (the training objective)
  Index counted_tokens = 0;     // metric targets after discounting
  Index correct = 0;
  double loss_xent_sum = 0.0;
  double counted_xent_sum = 0.0;

  TokenCounts& operator+=(const TokenCounts& o) {
    loss_tokens += o.loss_tokens;
    counted_tokens += o.counted_tokens;
    correct += o.correct;
    loss_xent_sum += o.loss_xent_sum;
    counted_xent_sum += o.counted_xent_sum;
    return *this;
  }
};

struct LossMetrics {
  double mean_xent = 0.0;    // over non-pad targets
  double loss = 0.0;         // over counted targets; exp(loss) == perplexity
  double perplexity = 1.0;
  double accuracy = 0.0;
  TokenCounts counts;
};

// logits rows are prediction positions ((len-1) x V), targets[i] the token
// expected at position i+1.
TokenCounts accumulate_counts(const Tensor& logits, const std::vector<int>& targets,
                              const Vocab& vocab, MetricsMode mode);
LossMetrics finalize_metrics(const TokenCounts& counts);
LossMetrics loss_and_metrics(const Tensor& logits, const std::vector<int>& targets,
                             const Vocab& vocab, MetricsMode mode);

// One metrics line per round and split. wall_seconds is runtime telemetry:
// it stays in the in-memory record and the run log, never in the metrics
// files, which must be byte-identical across reruns of the same seed.
struct MetricsRecord {
  Index round = 0;
  std::string split;  // "train_sample" or "eval"
  double loss = 0.0;
  double perplexity = 1.0;
  double accuracy = 0.0;
  Index counted_tokens = 0;
  double wall_seconds = 0.0;
  Index upload_bytes = 0;
  bool diverged = false;
};

std::string to_jsonl(const MetricsRecord& r);
std::string to_csv_row(const MetricsRecord& r);
std::string csv_header();

// Append-only writer over the line-delimited JSON and CSV forms.
class MetricsWriter {
 public:
  MetricsWriter() = default;
  MetricsWriter(const std::string& jsonl_path, const std::string& csv_path);
  void write(const MetricsRecord& r);

 private:
  std::ofstream jsonl_;
  std::ofstream csv_;
  std::string jsonl_path_, csv_path_;
};

}  // namespace fedsim

#endif  // FEDSIM_METRICS_HPP_
