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

#ifndef FEDSIM_ATTENTION_HPP_
#define FEDSIM_ATTENTION_HPP_

#include <string>
#include <utility>
#include <vector>

#include "fedsim/cifg.hpp"
#include "fedsim/graph.hpp"

namespace fedsim {

inline constexpr double kLayerNormEps = 1e-5;

// One attention head: query/key projections score the positions, value and
// output projections carry the content. k x d for Q/K/V, d x k for O.
struct AttnHeadParams {
  Tensor W_q, W_k, W_v, W_o;
};

// One Pre-LN decoder block: attention heads, the two layer norms, and the
// ReLU feedforward.
struct AttnParams {
  std::vector<AttnHeadParams> heads;
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;  // d
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;          // m x d, m, d x m, d

  Index model_dim() const { return ln1_gain.shape[0]; }

  static AttnParams init(Index model_dim, Index n_heads, Index ffn_dim, std::uint64_t seed);
  static AttnParams shaped(Index model_dim, Index n_heads, Index ffn_dim);  // zero weights
  void append_to(ParamTree& tree, const std::string& prefix) const;
  static AttnParams from_tree(const ParamTree& tree, const std::string& prefix, Index n_heads);
};

struct AttnHeadNodes {
  NodeId W_q, W_k, W_v, W_o;
};
struct AttnBlockNodes {
  std::vector<AttnHeadNodes> heads;
  NodeId ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  NodeId ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};
AttnBlockNodes attention_placeholders(Graph& g, const AttnParams& p, const std::string& prefix);

struct AttnResult {
  NodeId probs;  // n x n, row = query position
  NodeId out;    // d x n
};

// Self attention over X (d x n, columns are positions). Standard scores go
// through a row softmax; the scale-invariant variant applies ReLU then
// row normalization. Causal masking clamps attention to positions <= t
// (-inf pre-softmax for standard, zeroed pre-normalization for SI).
AttnResult attention(Graph& g, const AttnHeadNodes& w, NodeId x, ModelVariant variant, double eps,
                     bool causal);

// Layer norm over the feature dimension (rows), per column.
NodeId layer_norm_cols(Graph& g, NodeId x, NodeId gain, NodeId bias, double ln_eps = kLayerNormEps);

// Pre-LN residual block: X + Attn(LN(X)), then + FFN(LN(.)). Head outputs
// are summed through their per-head output projections, which is the
// concat-then-project wiring in factored form.
NodeId transformer_block(Graph& g, const AttnBlockNodes& w, NodeId x, ModelVariant variant,
                         double eps, bool causal = true);

// Eager single-head surface: X is d x n; returns (probs, out).
std::pair<Tensor, Tensor> attention(const AttnHeadParams& p, const Tensor& x, ModelVariant variant,
                                    double eps = kDefaultActivationEps, bool causal = true);
Tensor transformer_block(const AttnParams& p, const Tensor& x, ModelVariant variant,
                         double eps = kDefaultActivationEps, bool causal = true);

}  // namespace fedsim

#endif  // FEDSIM_ATTENTION_HPP_
