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

#include "fedsim/attention.hpp"

#include <cmath>

namespace fedsim {

namespace {

// Finite stand-in for -inf: exp(x - rowmax) underflows to exactly 0.
constexpr double kMaskNegative = -1e30;

Tensor gaussian_tensor(Shape shape, double scale, RngStream rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t.data[i] = scale * rng.next_gaussian();
  return t;
}

Tensor causal_additive_mask(Index n) {
  Tensor m = Tensor::zeros({n, n});
  auto mm = m.mat();
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) mm(i, j) = kMaskNegative;
  return m;
}

Tensor causal_zero_one_mask(Index n) {
  Tensor m = Tensor::zeros({n, n});
  auto mm = m.mat();
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j <= i; ++j) mm(i, j) = 1.0;
  return m;
}

}  // namespace

AttnParams AttnParams::init(Index d, Index n_heads, Index ffn_dim, std::uint64_t seed) {
  if (d % n_heads != 0) throw Error("AttnParams: model_dim must be divisible by heads");
  const Index k = d / n_heads;
  auto w = [&](const std::string& name, Index rows, Index cols) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    return gaussian_tensor({rows, cols}, scale, RngStream::keyed({seed, fnv1a64(name)}));
  };
  AttnParams p;
  for (Index h = 0; h < n_heads; ++h) {
    const std::string hp = "head" + std::to_string(h) + ".";
    AttnHeadParams head;
    head.W_q = w(hp + "W_q", k, d);
    head.W_k = w(hp + "W_k", k, d);
    head.W_v = w(hp + "W_v", k, d);
    head.W_o = w(hp + "W_o", d, k);
    p.heads.push_back(std::move(head));
  }
  p.ln1_gain = Tensor::full({d}, 1.0);
  p.ln1_bias = Tensor::zeros({d});
  p.ln2_gain = Tensor::full({d}, 1.0);
  p.ln2_bias = Tensor::zeros({d});
  p.ffn_w1 = w("ffn_w1", ffn_dim, d);
  p.ffn_b1 = Tensor::zeros({ffn_dim});
  p.ffn_w2 = w("ffn_w2", d, ffn_dim);
  p.ffn_b2 = Tensor::zeros({d});
  return p;
}

AttnParams AttnParams::shaped(Index d, Index n_heads, Index ffn_dim) {
  if (d % n_heads != 0) throw Error("AttnParams: model_dim must be divisible by heads");
  const Index k = d / n_heads;
  AttnParams p;
  for (Index h = 0; h < n_heads; ++h)
    p.heads.push_back({Tensor::zeros({k, d}), Tensor::zeros({k, d}), Tensor::zeros({k, d}),
                       Tensor::zeros({d, k})});
  p.ln1_gain = Tensor::zeros({d});
  p.ln1_bias = Tensor::zeros({d});
  p.ln2_gain = Tensor::zeros({d});
  p.ln2_bias = Tensor::zeros({d});
  p.ffn_w1 = Tensor::zeros({ffn_dim, d});
  p.ffn_b1 = Tensor::zeros({ffn_dim});
  p.ffn_w2 = Tensor::zeros({d, ffn_dim});
  p.ffn_b2 = Tensor::zeros({d});
  return p;
}

void AttnParams::append_to(ParamTree& tree, const std::string& prefix) const {
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const std::string hp = prefix + "head" + std::to_string(h) + ".";
    tree.add(hp + "W_q", heads[h].W_q);
    tree.add(hp + "W_k", heads[h].W_k);
    tree.add(hp + "W_v", heads[h].W_v);
    tree.add(hp + "W_o", heads[h].W_o);
  }
  tree.add(prefix + "ln1_gain", ln1_gain);
  tree.add(prefix + "ln1_bias", ln1_bias);
  tree.add(prefix + "ln2_gain", ln2_gain);
  tree.add(prefix + "ln2_bias", ln2_bias);
  tree.add(prefix + "ffn_w1", ffn_w1);
  tree.add(prefix + "ffn_b1", ffn_b1);
  tree.add(prefix + "ffn_w2", ffn_w2);
  tree.add(prefix + "ffn_b2", ffn_b2);
}

AttnParams AttnParams::from_tree(const ParamTree& tree, const std::string& prefix, Index n_heads) {
  AttnParams p;
  for (Index h = 0; h < n_heads; ++h) {
    const std::string hp = prefix + "head" + std::to_string(h) + ".";
    p.heads.push_back({tree.at(hp + "W_q"), tree.at(hp + "W_k"), tree.at(hp + "W_v"),
                       tree.at(hp + "W_o")});
  }
  p.ln1_gain = tree.at(prefix + "ln1_gain");
  p.ln1_bias = tree.at(prefix + "ln1_bias");
  p.ln2_gain = tree.at(prefix + "ln2_gain");
  p.ln2_bias = tree.at(prefix + "ln2_bias");
  p.ffn_w1 = tree.at(prefix + "ffn_w1");
  p.ffn_b1 = tree.at(prefix + "ffn_b1");
  p.ffn_w2 = tree.at(prefix + "ffn_w2");
  p.ffn_b2 = tree.at(prefix + "ffn_b2");
  return p;
}

AttnBlockNodes attention_placeholders(Graph& g, const AttnParams& p, const std::string& prefix) {
  AttnBlockNodes n;
  for (std::size_t h = 0; h < p.heads.size(); ++h) {
    const std::string hp = prefix + "head" + std::to_string(h) + ".";
    AttnHeadNodes head;
    head.W_q = g.placeholder(hp + "W_q", p.heads[h].W_q.shape);
    head.W_k = g.placeholder(hp + "W_k", p.heads[h].W_k.shape);
    head.W_v = g.placeholder(hp + "W_v", p.heads[h].W_v.shape);
    head.W_o = g.placeholder(hp + "W_o", p.heads[h].W_o.shape);
    n.heads.push_back(head);
  }
  n.ln1_gain = g.placeholder(prefix + "ln1_gain", p.ln1_gain.shape);
  n.ln1_bias = g.placeholder(prefix + "ln1_bias", p.ln1_bias.shape);
  n.ln2_gain = g.placeholder(prefix + "ln2_gain", p.ln2_gain.shape);
  n.ln2_bias = g.placeholder(prefix + "ln2_bias", p.ln2_bias.shape);
  n.ffn_w1 = g.placeholder(prefix + "ffn_w1", p.ffn_w1.shape);
  n.ffn_b1 = g.placeholder(prefix + "ffn_b1", p.ffn_b1.shape);
  n.ffn_w2 = g.placeholder(prefix + "ffn_w2", p.ffn_w2.shape);
  n.ffn_b2 = g.placeholder(prefix + "ffn_b2", p.ffn_b2.shape);
  return n;
}

AttnResult attention(Graph& g, const AttnHeadNodes& w, NodeId x, ModelVariant variant, double eps,
                     bool causal) {
  if (is_cifg(variant)) throw Error("attention: variant is not a transformer variant");
  const Index n = g.shape_of(x)[1];

  NodeId q = g.matmul(w.W_q, x);                    // k x n
  NodeId k = g.matmul(w.W_k, x);                    // k x n
  NodeId scores = g.matmul(g.transpose(q), k);      // n x n, row t scores position j

  NodeId probs;
  if (is_scale_invariant(variant)) {
    NodeId pos = g.relu(scores);
    if (causal) pos = g.mul(pos, g.constant(causal_zero_one_mask(n)));
    probs = row_normalize(g, pos, eps);
  } else {
    if (causal) scores = g.add(scores, g.constant(causal_additive_mask(n)));
    probs = softmax_rows(g, scores);
  }

  NodeId v = g.matmul(w.W_v, x);                    // k x n
  NodeId ctx = g.matmul(v, g.transpose(probs));     // k x n, column t mixes positions <= t
  return {probs, g.matmul(w.W_o, ctx)};             // d x n
}

NodeId layer_norm_cols(Graph& g, NodeId x, NodeId gain, NodeId bias, double ln_eps) {
  const Index d = g.shape_of(x)[0];
  const Index n = g.shape_of(x)[1];
  const double inv_d = 1.0 / static_cast<double>(d);
  NodeId mean = g.affine(g.col_sum(x), inv_d, 0.0);
  NodeId centered = g.sub(x, g.broadcast_rows(mean, d));
  NodeId var = g.affine(g.col_sum(g.mul(centered, centered)), inv_d, 0.0);
  NodeId denom = g.sqrt(g.affine(var, 1.0, ln_eps));
  NodeId normed = g.div(centered, g.broadcast_rows(denom, d));
  return g.add(g.mul(normed, g.broadcast_cols(gain, n)), g.broadcast_cols(bias, n));
}

NodeId transformer_block(Graph& g, const AttnBlockNodes& w, NodeId x, ModelVariant variant,
                         double eps, bool causal) {
  const Index n = g.shape_of(x)[1];

  NodeId ln1 = layer_norm_cols(g, x, w.ln1_gain, w.ln1_bias);
  NodeId attn_sum = -1;
  for (const AttnHeadNodes& head : w.heads) {
    NodeId out = attention(g, head, ln1, variant, eps, causal).out;
    attn_sum = attn_sum < 0 ? out : g.add(attn_sum, out);
  }
  NodeId y = g.add(x, attn_sum);

  NodeId ln2 = layer_norm_cols(g, y, w.ln2_gain, w.ln2_bias);
  NodeId hidden = g.relu(g.add(g.matmul(w.ffn_w1, ln2), g.broadcast_cols(w.ffn_b1, n)));
  NodeId ffn = g.add(g.matmul(w.ffn_w2, hidden), g.broadcast_cols(w.ffn_b2, n));
  return g.add(y, ffn);
}

std::pair<Tensor, Tensor> attention(const AttnHeadParams& p, const Tensor& x, ModelVariant variant,
                                    double eps, bool causal) {
  Graph g;
  AttnHeadNodes w;
  w.W_q = g.placeholder("W_q", p.W_q.shape);
  w.W_k = g.placeholder("W_k", p.W_k.shape);
  w.W_v = g.placeholder("W_v", p.W_v.shape);
  w.W_o = g.placeholder("W_o", p.W_o.shape);
  NodeId xn = g.placeholder("x", x.shape);
  AttnResult r = attention(g, w, xn, variant, eps, causal);
  g.mark_output("probs", r.probs);
  g.mark_output("out", r.out);
  auto vals = g.evaluate({{"W_q", p.W_q},
                          {"W_k", p.W_k},
                          {"W_v", p.W_v},
                          {"W_o", p.W_o},
                          {"x", x}});
  return {vals.at("probs"), vals.at("out")};
}

Tensor transformer_block(const AttnParams& p, const Tensor& x, ModelVariant variant, double eps,
                         bool causal) {
  Graph g;
  AttnBlockNodes w = attention_placeholders(g, p, "");
  NodeId xn = g.placeholder("x", x.shape);
  g.mark_output("y", transformer_block(g, w, xn, variant, eps, causal));
  ParamTree tree;
  p.append_to(tree, "");
  std::map<std::string, Tensor> in{{"x", x}};
  for (const auto& [name, t] : tree) in[name] = t;
  return g.evaluate(in).at("y");
}

}  // namespace fedsim
