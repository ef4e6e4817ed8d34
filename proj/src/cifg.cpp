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

#include "fedsim/cifg.hpp"

namespace fedsim {

const char* variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::kCifgStandard: return "cifg";
    case ModelVariant::kCifgScaleInvariant: return "si_cifg";
    case ModelVariant::kTransformerStandard: return "transformer";
    case ModelVariant::kTransformerScaleInvariant: return "si_transformer";
  }
  return "?";
}

ModelVariant variant_from_name(const std::string& name) {
  if (name == "cifg") return ModelVariant::kCifgStandard;
  if (name == "si_cifg") return ModelVariant::kCifgScaleInvariant;
  if (name == "transformer") return ModelVariant::kTransformerStandard;
  if (name == "si_transformer") return ModelVariant::kTransformerScaleInvariant;
  throw Error("unknown model variant '" + name + "'");
}

namespace {

Tensor gaussian_tensor(Shape shape, double scale, RngStream rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t.data[i] = scale * rng.next_gaussian();
  return t;
}

}  // namespace

CifgParams CifgParams::init(Index d, Index h, std::uint64_t seed) {
  auto w = [&](const char* name, Index rows, Index cols) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    return gaussian_tensor({rows, cols}, scale, RngStream::keyed({seed, fnv1a64(name)}));
  };
  CifgParams p;
  p.W_f = w("W_f", h, d);
  p.U_f = w("U_f", h, h);
  p.b_f = Tensor::full({h}, 1.0);  // forget bias starts open
  p.W_o = w("W_o", h, d);
  p.U_o = w("U_o", h, h);
  p.b_o = Tensor::zeros({h});
  p.W_c = w("W_c", h, d);
  p.U_c = w("U_c", h, h);
  p.b_c = Tensor::zeros({h});
  return p;
}

CifgParams CifgParams::shaped(Index d, Index h) {
  CifgParams p;
  p.W_f = Tensor::zeros({h, d});
  p.U_f = Tensor::zeros({h, h});
  p.b_f = Tensor::zeros({h});
  p.W_o = p.W_f;
  p.U_o = p.U_f;
  p.b_o = p.b_f;
  p.W_c = p.W_f;
  p.U_c = p.U_f;
  p.b_c = p.b_f;
  return p;
}

void CifgParams::append_to(ParamTree& tree, const std::string& prefix) const {
  tree.add(prefix + "W_f", W_f);
  tree.add(prefix + "U_f", U_f);
  tree.add(prefix + "b_f", b_f);
  tree.add(prefix + "W_o", W_o);
  tree.add(prefix + "U_o", U_o);
  tree.add(prefix + "b_o", b_o);
  tree.add(prefix + "W_c", W_c);
  tree.add(prefix + "U_c", U_c);
  tree.add(prefix + "b_c", b_c);
}

CifgParams CifgParams::from_tree(const ParamTree& tree, const std::string& prefix) {
  CifgParams p;
  p.W_f = tree.at(prefix + "W_f");
  p.U_f = tree.at(prefix + "U_f");
  p.b_f = tree.at(prefix + "b_f");
  p.W_o = tree.at(prefix + "W_o");
  p.U_o = tree.at(prefix + "U_o");
  p.b_o = tree.at(prefix + "b_o");
  p.W_c = tree.at(prefix + "W_c");
  p.U_c = tree.at(prefix + "U_c");
  p.b_c = tree.at(prefix + "b_c");
  return p;
}

CifgNodes cifg_placeholders(Graph& g, const CifgParams& p, const std::string& prefix) {
  CifgNodes n;
  n.W_f = g.placeholder(prefix + "W_f", p.W_f.shape);
  n.U_f = g.placeholder(prefix + "U_f", p.U_f.shape);
  n.b_f = g.placeholder(prefix + "b_f", p.b_f.shape);
  n.W_o = g.placeholder(prefix + "W_o", p.W_o.shape);
  n.U_o = g.placeholder(prefix + "U_o", p.U_o.shape);
  n.b_o = g.placeholder(prefix + "b_o", p.b_o.shape);
  n.W_c = g.placeholder(prefix + "W_c", p.W_c.shape);
  n.U_c = g.placeholder(prefix + "U_c", p.U_c.shape);
  n.b_c = g.placeholder(prefix + "b_c", p.b_c.shape);
  return n;
}

CifgStepNodes cifg_step(Graph& g, const CifgNodes& w, NodeId x, NodeId h_prev, NodeId c_prev,
                        ModelVariant variant, double eps) {
  if (!is_cifg(variant)) throw Error("cifg_step: variant is not a CIFG variant");
  const Index batch = g.shape_of(x)[1];
  const bool si = is_scale_invariant(variant);

  auto pre = [&](NodeId W, NodeId U, NodeId b) {
    return g.add(g.add(g.matmul(W, x), g.matmul(U, h_prev)), g.broadcast_cols(b, batch));
  };
  auto gate = [&](NodeId z) { return si ? si_sigmoid_cols(g, z, eps) : g.sigmoid(z); };
  auto squash = [&](NodeId z) { return si ? si_tanh_cols(g, z, eps) : g.tanh(z); };

  NodeId f = gate(pre(w.W_f, w.U_f, w.b_f));
  NodeId i = g.affine(f, -1.0, 1.0);  // coupled input gate
  NodeId o = gate(pre(w.W_o, w.U_o, w.b_o));
  NodeId cand = squash(pre(w.W_c, w.U_c, w.b_c));
  NodeId c = g.add(g.mul(f, c_prev), g.mul(i, cand));
  NodeId h = g.mul(o, squash(c));
  return {h, c};
}

std::pair<Tensor, Tensor> cifg_step(const CifgParams& p, const Tensor& x, const Tensor& h_prev,
                                    const Tensor& c_prev, ModelVariant variant, double eps) {
  if (x.rank() != 1 || h_prev.rank() != 1 || c_prev.rank() != 1)
    throw ShapeError("cifg_step: expected rank-1 inputs");
  Graph g;
  CifgNodes w = cifg_placeholders(g, p, "");
  NodeId xn = g.reshape(g.placeholder("x", x.shape), {x.shape[0], 1});
  NodeId hn = g.reshape(g.placeholder("h_prev", h_prev.shape), {h_prev.shape[0], 1});
  NodeId cn = g.reshape(g.placeholder("c_prev", c_prev.shape), {c_prev.shape[0], 1});
  CifgStepNodes out = cifg_step(g, w, xn, hn, cn, variant, eps);
  g.mark_output("h", g.reshape(out.h, {p.hidden_dim()}));
  g.mark_output("c", g.reshape(out.c, {p.hidden_dim()}));

  std::map<std::string, Tensor> in{{"x", x}, {"h_prev", h_prev}, {"c_prev", c_prev}};
  ParamTree tree;
  p.append_to(tree, "");
  for (const auto& [name, t] : tree) in[name] = t;
  auto vals = g.evaluate(in);
  return {vals.at("h"), vals.at("c")};
}

}  // namespace fedsim
