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

#include "fedsim/activations.hpp"

namespace fedsim {

namespace {

// x / max(denominator, eps), denominator given per column.
NodeId div_by_col_denom(Graph& g, NodeId m, NodeId denom, double eps) {
  const Index rows = g.shape_of(m)[0];
  return g.safe_div(m, g.broadcast_rows(g.max_scalar(denom, eps), rows));
}

NodeId via_single_column(Graph& g, NodeId x, double eps,
                         NodeId (*cols_fn)(Graph&, NodeId, double)) {
  const Index n = g.shape_of(x)[0];
  return g.reshape(cols_fn(g, g.reshape(x, {n, 1}), eps), {n});
}

}  // namespace

NodeId maxn_cols(Graph& g, NodeId m, double eps) {
  return div_by_col_denom(g, m, g.col_max(g.abs(m)), eps);
}

NodeId si_tanh_cols(Graph& g, NodeId m, double eps) { return maxn_cols(g, m, eps); }

NodeId si_sigmoid_cols(Graph& g, NodeId m, double eps) {
  NodeId r = g.relu(m);
  return div_by_col_denom(g, r, g.col_max(r), eps);
}

NodeId maxn(Graph& g, NodeId x, double eps) { return via_single_column(g, x, eps, maxn_cols); }
NodeId si_tanh(Graph& g, NodeId x, double eps) { return via_single_column(g, x, eps, si_tanh_cols); }
NodeId si_sigmoid(Graph& g, NodeId x, double eps) {
  return via_single_column(g, x, eps, si_sigmoid_cols);
}

NodeId softmax_rows(Graph& g, NodeId m) {
  const Index cols = g.shape_of(m)[1];
  NodeId shifted = g.sub(m, g.broadcast_cols(g.row_max(m), cols));
  NodeId e = g.exp(shifted);
  return g.div(e, g.broadcast_cols(g.row_sum(e), cols));
}

NodeId softmax(Graph& g, NodeId x) {
  const Index n = g.shape_of(x)[0];
  return g.reshape(softmax_rows(g, g.reshape(x, {1, n})), {n});
}

NodeId row_normalize(Graph& g, NodeId m, double eps) {
  const Index cols = g.shape_of(m)[1];
  return g.safe_div(m, g.broadcast_cols(g.max_scalar(g.row_sum(m), eps), cols));
}

NodeId baseline_activation(Graph& g, ActivationKind kind, NodeId x) {
  switch (kind) {
    case ActivationKind::kSigmoid: return g.sigmoid(x);
    case ActivationKind::kTanh: return g.tanh(x);
    case ActivationKind::kRelu: return g.relu(x);
    case ActivationKind::kSoftmax: return softmax(g, x);
    case ActivationKind::kSiSigmoid:
    case ActivationKind::kSiTanh:
      throw Error("baseline_activation: SI kinds need an eps, use si_sigmoid/si_tanh");
  }
  throw Error("baseline_activation: bad kind");
}

namespace {

Eigen::VectorXd run_vector_op(const Eigen::VectorXd& x,
                              NodeId (*build)(Graph&, NodeId, double), double eps) {
  if (x.size() == 0) throw ShapeError("activation: empty input");
  Graph g;
  NodeId in = g.placeholder("x", {x.size()});
  g.mark_output("y", build(g, in, eps));
  return g.evaluate({{"x", Tensor::from_vec(x)}}).at("y").data;
}

}  // namespace

Eigen::VectorXd maxn(const Eigen::VectorXd& x, double eps) {
  return run_vector_op(x, static_cast<NodeId (*)(Graph&, NodeId, double)>(&maxn), eps);
}

Eigen::VectorXd si_sigmoid(const Eigen::VectorXd& x, double eps) {
  return run_vector_op(x, static_cast<NodeId (*)(Graph&, NodeId, double)>(&si_sigmoid), eps);
}

Eigen::VectorXd si_tanh(const Eigen::VectorXd& x, double eps) {
  return run_vector_op(x, static_cast<NodeId (*)(Graph&, NodeId, double)>(&si_tanh), eps);
}

RowMat row_normalize(const RowMat& a, double eps) {
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      if (a(i, j) < 0.0)
        throw Error("row_normalize: negative entry at (" + std::to_string(i) + "," +
                    std::to_string(j) + ")");
  Graph g;
  NodeId in = g.placeholder("a", {a.rows(), a.cols()});
  g.mark_output("y", row_normalize(g, in, eps));
  Tensor out = g.evaluate({{"a", Tensor::from_mat(a)}}).at("y");
  return RowMat(out.mat());
}

Eigen::VectorXd baseline_activation(ActivationKind kind, const Eigen::VectorXd& x) {
  if (x.size() == 0) throw ShapeError("baseline_activation: empty input");
  Graph g;
  NodeId in = g.placeholder("x", {x.size()});
  g.mark_output("y", baseline_activation(g, kind, in));
  return g.evaluate({{"x", Tensor::from_vec(x)}}).at("y").data;
}

}  // namespace fedsim
