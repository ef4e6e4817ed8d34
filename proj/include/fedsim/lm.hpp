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

#ifndef FEDSIM_LM_HPP_
#define FEDSIM_LM_HPP_

#include <map>
#include <string>
#include <vector>

#include "fedsim/attention.hpp"
#include "fedsim/cifg.hpp"
#include "fedsim/corpus.hpp"
#include "fedsim/metrics.hpp"

namespace fedsim {

struct LmDims {
  ModelVariant variant = ModelVariant::kCifgStandard;
  Index vocab = 0;        // actual vocabulary size (reserved ids included)
  Index embed = 32;       // embedding width; transformer model width
  Index hidden = 64;      // CIFG cell width
  Index layers = 2;       // transformer blocks
  Index heads = 2;
  Index ffn = 64;
  Index max_seq_len = 20;
  double eps = kDefaultActivationEps;

  Index model_dim() const { return is_cifg(variant) ? hidden : embed; }
};

// A language model: token embedding (V x e) reused transposed as the output
// projection (tied; no independent output matrix exists), plus the body.
// The CIFG body ends in a hidden-to-embedding projection so the tied output
// applies; the transformer works at the embedding width throughout and adds
// learned absolute position embeddings.
struct LmParams {
  LmDims dims;
  Tensor embedding;               // V x e
  CifgParams cifg;                // CIFG variants
  Tensor proj;                    // e x h, CIFG variants
  Tensor pos;                     // max_seq_len x d, transformer variants
  std::vector<AttnParams> blocks;

  static LmParams init(const LmDims& dims, std::uint64_t seed);
  ParamTree tree() const;
  static LmParams from_tree(const LmDims& dims, const ParamTree& tree);
};

std::map<std::string, Tensor> to_bindings(const ParamTree& tree);

// A per-batch training/eval graph. All sequences share one length; target
// positions whose token is PAD are masked out of the loss.
struct LmBatchGraph {
  Graph g;
  NodeId loss = -1;            // scalar: mean xent over non-pad targets
  Index loss_tokens = 0;       // how many targets the mean runs over
  std::vector<NodeId> logits;  // per_step: one V x B node per step;
                               // otherwise one V x (L-1) node per example
  bool per_step = false;
  Index batch = 0;
  Index seq_len = 0;
};

LmBatchGraph build_lm_batch(const LmDims& dims, const std::vector<std::vector<int>>& batch);

// Next-token logits for one sequence: rows are positions 0..len-2, row t
// scoring the token at t+1.
Tensor lm_forward(const std::vector<int>& tokens, const LmParams& params);

// Forward-only evaluation of a batch, accumulating loss/accuracy counts.
TokenCounts lm_eval_batch(const LmParams& params, const std::vector<std::vector<int>>& batch,
                          const Vocab& vocab, MetricsMode mode);

}  // namespace fedsim

#endif  // FEDSIM_LM_HPP_
