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

#include "fedsim/lm.hpp"

#include <cmath>

namespace fedsim {

namespace {

Tensor gaussian_tensor(Shape shape, double scale, RngStream rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t.data[i] = scale * rng.next_gaussian();
  return t;
}

void check_tokens(const LmDims& dims, const std::vector<int>& tokens) {
  if (static_cast<Index>(tokens.size()) < 2) throw Error("lm_forward: sequence shorter than 2");
  for (int id : tokens)
    if (id < 0 || id >= dims.vocab)
      throw Error("lm_forward: token id " + std::to_string(id) + " out of range for vocab " +
                  std::to_string(dims.vocab));
}

// Masked cross-entropy summed over the columns of a V x n logits node.
struct XentCols {
  NodeId sum;
  Index tokens;
};

XentCols xent_sum_cols(Graph& g, NodeId logits, const std::vector<int>& targets) {
  const Index v = g.shape_of(logits)[0];
  const Index n = g.shape_of(logits)[1];

  NodeId mx = g.col_max(logits);
  NodeId shifted = g.sub(logits, g.broadcast_rows(mx, v));
  NodeId lse = g.add(g.log(g.col_sum(g.exp(shifted))), mx);

  Tensor onehot = Tensor::zeros({v, n});
  Tensor mask = Tensor::zeros({n});
  Index tokens = 0;
  auto oh = onehot.mat();
  for (Index j = 0; j < n; ++j) {
    oh(targets[j], j) = 1.0;
    if (targets[j] != Vocab::kPad) {
      mask.data[j] = 1.0;
      ++tokens;
    }
  }
  NodeId picked = g.col_sum(g.mul(logits, g.constant(std::move(onehot))));
  NodeId per_pos = g.sub(lse, picked);
  return {g.sum_all(g.mul(g.constant(std::move(mask)), per_pos)), tokens};
}

}  // namespace

LmParams LmParams::init(const LmDims& dims, std::uint64_t seed) {
  if (dims.vocab < 4) throw Error("LmParams: vocab must be at least 4");
  LmParams p;
  p.dims = dims;
  p.embedding = gaussian_tensor({dims.vocab, dims.embed},
                                1.0 / std::sqrt(static_cast<double>(dims.embed)),
                                RngStream::keyed({seed, fnv1a64("embedding")}));
  if (is_cifg(dims.variant)) {
    p.cifg = CifgParams::init(dims.embed, dims.hidden, splitmix64(seed ^ fnv1a64("cifg")));
    p.proj = gaussian_tensor({dims.embed, dims.hidden},
                             1.0 / std::sqrt(static_cast<double>(dims.hidden)),
                             RngStream::keyed({seed, fnv1a64("proj")}));
  } else {
    if (dims.embed % dims.heads != 0)
      throw Error("LmParams: embed width must be divisible by heads");
    p.pos = gaussian_tensor({dims.max_seq_len, dims.embed}, 0.02,
                            RngStream::keyed({seed, fnv1a64("pos")}));
    for (Index b = 0; b < dims.layers; ++b)
      p.blocks.push_back(AttnParams::init(
          dims.embed, dims.heads, dims.ffn,
          splitmix64(seed ^ fnv1a64("block" + std::to_string(b)))));
  }
  return p;
}

ParamTree LmParams::tree() const {
  ParamTree t;
  t.add("embedding", embedding);
  if (is_cifg(dims.variant)) {
    cifg.append_to(t, "cifg.");
    t.add("proj", proj);
  } else {
    t.add("pos", pos);
    for (std::size_t b = 0; b < blocks.size(); ++b)
      blocks[b].append_to(t, "block" + std::to_string(b) + ".");
  }
  return t;
}

LmParams LmParams::from_tree(const LmDims& dims, const ParamTree& tree) {
  LmParams p;
  p.dims = dims;
  p.embedding = tree.at("embedding");
  if (is_cifg(dims.variant)) {
    p.cifg = CifgParams::from_tree(tree, "cifg.");
    p.proj = tree.at("proj");
  } else {
    p.pos = tree.at("pos");
    for (Index b = 0; b < dims.layers; ++b)
      p.blocks.push_back(AttnParams::from_tree(tree, "block" + std::to_string(b) + ".", dims.heads));
  }
  return p;
}

std::map<std::string, Tensor> to_bindings(const ParamTree& tree) {
  std::map<std::string, Tensor> b;
  for (const auto& [name, t] : tree) b[name] = t;
  return b;
}

LmBatchGraph build_lm_batch(const LmDims& dims, const std::vector<std::vector<int>>& batch) {
  if (batch.empty()) throw Error("build_lm_batch: empty batch");
  const Index seq_len = static_cast<Index>(batch[0].size());
  for (const auto& seq : batch) {
    if (static_cast<Index>(seq.size()) != seq_len)
      throw ShapeError("build_lm_batch: ragged batch");
    check_tokens(dims, seq);
  }
  const Index n_batch = static_cast<Index>(batch.size());
  const Index steps = seq_len - 1;

  LmBatchGraph out;
  out.per_step = is_cifg(dims.variant);
  out.batch = n_batch;
  out.seq_len = seq_len;
  Graph& g = out.g;

  NodeId emb = g.placeholder("embedding", {dims.vocab, dims.embed});
  NodeId total = -1;

  if (is_cifg(dims.variant)) {
    CifgNodes cell = cifg_placeholders(g, CifgParams::shaped(dims.embed, dims.hidden), "cifg.");
    NodeId proj = g.placeholder("proj", {dims.embed, dims.hidden});

    // Position-major input layout: column t*B+b is token t of example b.
    std::vector<Index> ids;
    ids.reserve(steps * n_batch);
    for (Index t = 0; t < steps; ++t)
      for (Index b = 0; b < n_batch; ++b) ids.push_back(batch[b][t]);
    NodeId x_all = g.transpose(g.gather_rows(emb, std::move(ids)));  // e x steps*B

    NodeId h = g.constant(Tensor::zeros({dims.hidden, n_batch}));
    NodeId c = g.constant(Tensor::zeros({dims.hidden, n_batch}));
    for (Index t = 0; t < steps; ++t) {
      NodeId x_t = g.slice_cols(x_all, t * n_batch, (t + 1) * n_batch);
      CifgStepNodes step = cifg_step(g, cell, x_t, h, c, dims.variant, dims.eps);
      h = step.h;
      c = step.c;
      NodeId logits_t = g.matmul(emb, g.matmul(proj, h));  // V x B
      out.logits.push_back(logits_t);

      std::vector<int> targets(n_batch);
      for (Index b = 0; b < n_batch; ++b) targets[b] = batch[b][t + 1];
      XentCols xc = xent_sum_cols(g, logits_t, targets);
      out.loss_tokens += xc.tokens;
      total = total < 0 ? xc.sum : g.add(total, xc.sum);
    }
  } else {
    if (seq_len > dims.max_seq_len)
      throw ShapeError("build_lm_batch: sequence longer than max_seq_len position table");
    NodeId pos = g.placeholder("pos", {dims.max_seq_len, dims.embed});
    std::vector<AttnBlockNodes> blocks;
    const AttnParams shapes = AttnParams::shaped(dims.embed, dims.heads, dims.ffn);
    for (Index b = 0; b < dims.layers; ++b)
      blocks.push_back(attention_placeholders(g, shapes, "block" + std::to_string(b) + "."));
    NodeId pos_slice = g.transpose(g.slice_rows(pos, 0, steps));  // d x steps

    for (Index b = 0; b < n_batch; ++b) {
      std::vector<Index> ids(batch[b].begin(), batch[b].end() - 1);
      NodeId x = g.add(g.transpose(g.gather_rows(emb, std::move(ids))), pos_slice);
      for (const AttnBlockNodes& blk : blocks)
        x = transformer_block(g, blk, x, dims.variant, dims.eps, /*causal=*/true);
      NodeId logits_b = g.matmul(emb, x);  // V x steps
      out.logits.push_back(logits_b);

      std::vector<int> targets(batch[b].begin() + 1, batch[b].end());
      XentCols xc = xent_sum_cols(g, logits_b, targets);
      out.loss_tokens += xc.tokens;
      total = total < 0 ? xc.sum : g.add(total, xc.sum);
    }
  }

  out.loss = g.affine(total, 1.0 / std::max<Index>(out.loss_tokens, 1), 0.0);
  g.mark_output("loss", out.loss);
  return out;
}

Tensor lm_forward(const std::vector<int>& tokens, const LmParams& params) {
  check_tokens(params.dims, tokens);
  LmBatchGraph bg = build_lm_batch(params.dims, {tokens});
  bg.g.forward(to_bindings(params.tree()));

  const Index steps = static_cast<Index>(tokens.size()) - 1;
  Tensor logits = Tensor::zeros({steps, params.dims.vocab});
  auto lm = logits.mat();
  if (bg.per_step) {
    for (Index t = 0; t < steps; ++t) lm.row(t) = bg.g.value(bg.logits[t]).mat().col(0);
  } else {
    lm = bg.g.value(bg.logits[0]).mat().transpose();
  }
  return logits;
}

TokenCounts lm_eval_batch(const LmParams& params, const std::vector<std::vector<int>>& batch,
                          const Vocab& vocab, MetricsMode mode) {
  LmBatchGraph bg = build_lm_batch(params.dims, batch);
  bg.g.forward(to_bindings(params.tree()));

  const Index steps = bg.seq_len - 1;
  TokenCounts counts;
  for (Index b = 0; b < bg.batch; ++b) {
    Tensor logits = Tensor::zeros({steps, params.dims.vocab});
    auto lm = logits.mat();
    if (bg.per_step) {
      for (Index t = 0; t < steps; ++t) lm.row(t) = bg.g.value(bg.logits[t]).mat().col(b);
    } else {
      lm = bg.g.value(bg.logits[b]).mat().transpose();
    }
    std::vector<int> targets(batch[b].begin() + 1, batch[b].end());
    counts += accumulate_counts(logits, targets, vocab, mode);
  }
  return counts;
}

}  // namespace fedsim
