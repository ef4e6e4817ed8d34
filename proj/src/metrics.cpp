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

#include "fedsim/metrics.hpp"

#include <json.hpp>

#include <cmath>

namespace fedsim {

MetricsMode metrics_mode_from_name(const std::string& name) {
  if (name == "standard") return MetricsMode::kStandard;
  if (name == "in_vocab") return MetricsMode::kInVocab;
  throw Error("unknown metrics mode '" + name + "'");
}

TokenCounts accumulate_counts(const Tensor& logits, const std::vector<int>& targets,
                              const Vocab& vocab, MetricsMode mode) {
  if (logits.rank() != 2) throw ShapeError("loss_and_metrics: logits must be rank-2");
  const Index n = logits.shape[0];
  const Index v = logits.shape[1];
  if (n != static_cast<Index>(targets.size()))
    throw ShapeError("loss_and_metrics: positions/targets mismatch");
  if (v != vocab.size()) throw ShapeError("loss_and_metrics: logits width is not the vocab size");

  TokenCounts counts;
  auto m = logits.mat();
  for (Index i = 0; i < n; ++i) {
    const int target = targets[i];
    if (target < 0 || target >= v) throw Error("loss_and_metrics: target id out of range");
    if (target == Vocab::kPad) continue;

    double best = m(i, 0);
    Index best_j = 0;
    for (Index j = 1; j < v; ++j)
      if (m(i, j) > best) best = m(i, j), best_j = j;
    double sum = 0;
    for (Index j = 0; j < v; ++j) sum += std::exp(m(i, j) - best);
    const double xent = std::log(sum) + best - m(i, target);

    counts.loss_tokens += 1;
    counts.loss_xent_sum += xent;
    const bool discounted =
        target == Vocab::kEos || (mode == MetricsMode::kInVocab && target == Vocab::kOov);
    if (!discounted) {
      counts.counted_tokens += 1;
      counts.counted_xent_sum += xent;
      counts.correct += best_j == target;
    }
  }
  return counts;
}

LossMetrics finalize_metrics(const TokenCounts& counts) {
  LossMetrics out;
  out.counts = counts;
  out.mean_xent = counts.loss_tokens ? counts.loss_xent_sum / counts.loss_tokens : 0.0;
  out.loss = counts.counted_tokens ? counts.counted_xent_sum / counts.counted_tokens : 0.0;
  out.perplexity = std::exp(out.loss);
  out.accuracy =
      counts.counted_tokens ? static_cast<double>(counts.correct) / counts.counted_tokens : 0.0;
  return out;
}

LossMetrics loss_and_metrics(const Tensor& logits, const std::vector<int>& targets,
                             const Vocab& vocab, MetricsMode mode) {
  return finalize_metrics(accumulate_counts(logits, targets, vocab, mode));
}

namespace {

// nlohmann prints shortest round-trip decimals; reuse it for CSV so both
// forms render a double identically.
std::string num(double x) { return nlohmann::json(x).dump(); }

}  // namespace

std::string to_jsonl(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["round"] = r.round;
  j["split"] = r.split;
  j["loss"] = r.loss;
  j["perplexity"] = r.perplexity;
  j["accuracy"] = r.accuracy;
  j["counted_tokens"] = r.counted_tokens;
  j["upload_bytes"] = r.upload_bytes;
  j["diverged"] = r.diverged;
  return j.dump();
}

std::string csv_header() {
  return "round,split,loss,perplexity,accuracy,counted_tokens,upload_bytes,diverged";
}

std::string to_csv_row(const MetricsRecord& r) {
  std::string s = std::to_string(r.round) + "," + r.split + "," + num(r.loss) + "," +
                  num(r.perplexity) + "," + num(r.accuracy) + "," +
                  std::to_string(r.counted_tokens) + "," + std::to_string(r.upload_bytes) + "," +
                  (r.diverged ? "true" : "false");
  return s;
}

MetricsWriter::MetricsWriter(const std::string& jsonl_path, const std::string& csv_path)
    : jsonl_path_(jsonl_path), csv_path_(csv_path) {
  jsonl_.open(jsonl_path, std::ios::out | std::ios::trunc);
  if (!jsonl_) throw IoError("metrics: cannot open '" + jsonl_path + "'");
  csv_.open(csv_path, std::ios::out | std::ios::trunc);
  if (!csv_) throw IoError("metrics: cannot open '" + csv_path + "'");
  csv_ << csv_header() << "\n";
  csv_.flush();
}

void MetricsWriter::write(const MetricsRecord& r) {
  if (!jsonl_.is_open()) return;
  jsonl_ << to_jsonl(r) << "\n";
  jsonl_.flush();
  if (!jsonl_) throw IoError("metrics: write failed for '" + jsonl_path_ + "'");
  csv_ << to_csv_row(r) << "\n";
  csv_.flush();
  if (!csv_) throw IoError("metrics: write failed for '" + csv_path_ + "'");
}

}  // namespace fedsim
