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

#include "fedsim/graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fedsim {

namespace {

std::string mismatch_msg(Op op, const Shape& a, const Shape& b) {
  std::ostringstream os;
  os << op_name(op) << ": shape mismatch " << shape_str(a) << " vs " << shape_str(b);
  return os.str();
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

const char* op_name(Op op) {
  switch (op) {
    case Op::kPlaceholder: return "placeholder";
    case Op::kConstant: return "constant";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kSafeDiv: return "safe_div";
    case Op::kMatMul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kRelu: return "relu";
    case Op::kAbs: return "abs";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSqrt: return "sqrt";
    case Op::kSigmoid: return "sigmoid";
    case Op::kTanh: return "tanh";
    case Op::kAffine: return "affine";
    case Op::kMaxScalar: return "max_scalar";
    case Op::kSumAll: return "sum_all";
    case Op::kMaxAll: return "max_all";
    case Op::kRowSum: return "row_sum";
    case Op::kRowMax: return "row_max";
    case Op::kColSum: return "col_sum";
    case Op::kColMax: return "col_max";
    case Op::kBroadcastCols: return "broadcast_cols";
    case Op::kBroadcastRows: return "broadcast_rows";
    case Op::kConcat: return "concat";
    case Op::kSliceRows: return "slice_rows";
    case Op::kSliceCols: return "slice_cols";
    case Op::kGatherRows: return "gather_rows";
    case Op::kReshape: return "reshape";
  }
  return "?";
}

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  forward_done_ = false;
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::placeholder(const std::string& name, Shape shape) {
  if (placeholders_.count(name)) throw Error("placeholder: duplicate name '" + name + "'");
  Node n;
  n.op = Op::kPlaceholder;
  n.shape = std::move(shape);
  n.name = name;
  NodeId id = push(std::move(n));
  placeholders_[name] = id;
  return id;
}

NodeId Graph::constant(Tensor value) {
  Node n;
  n.op = Op::kConstant;
  n.shape = value.shape;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Graph::unary(Op op, NodeId x) {
  Node n;
  n.op = op;
  n.in[0] = x;
  n.shape = nodes_[x].shape;
  return push(std::move(n));
}

NodeId Graph::binary_same_shape(Op op, NodeId x, NodeId y) {
  if (nodes_[x].shape != nodes_[y].shape)
    throw ShapeError(mismatch_msg(op, nodes_[x].shape, nodes_[y].shape));
  Node n;
  n.op = op;
  n.in = {x, y};
  n.shape = nodes_[x].shape;
  return push(std::move(n));
}

void Graph::check_rank2(Op op, NodeId x) const {
  if (nodes_[x].shape.size() != 2)
    throw ShapeError(std::string(op_name(op)) + ": expected a rank-2 operand, got " +
                     shape_str(nodes_[x].shape));
}

NodeId Graph::add(NodeId x, NodeId y) { return binary_same_shape(Op::kAdd, x, y); }
NodeId Graph::sub(NodeId x, NodeId y) { return binary_same_shape(Op::kSub, x, y); }
NodeId Graph::mul(NodeId x, NodeId y) { return binary_same_shape(Op::kMul, x, y); }
NodeId Graph::div(NodeId x, NodeId y) { return binary_same_shape(Op::kDiv, x, y); }
NodeId Graph::safe_div(NodeId x, NodeId y) { return binary_same_shape(Op::kSafeDiv, x, y); }

NodeId Graph::matmul(NodeId x, NodeId y) {
  check_rank2(Op::kMatMul, x);
  check_rank2(Op::kMatMul, y);
  const Shape& a = nodes_[x].shape;
  const Shape& b = nodes_[y].shape;
  if (a[1] != b[0]) throw ShapeError(mismatch_msg(Op::kMatMul, a, b));
  Node n;
  n.op = Op::kMatMul;
  n.in = {x, y};
  n.shape = {a[0], b[1]};
  return push(std::move(n));
}

NodeId Graph::transpose(NodeId x) {
  check_rank2(Op::kTranspose, x);
  Node n;
  n.op = Op::kTranspose;
  n.in[0] = x;
  n.shape = {nodes_[x].shape[1], nodes_[x].shape[0]};
  return push(std::move(n));
}

NodeId Graph::relu(NodeId x) { return unary(Op::kRelu, x); }
NodeId Graph::abs(NodeId x) { return unary(Op::kAbs, x); }
NodeId Graph::exp(NodeId x) { return unary(Op::kExp, x); }
NodeId Graph::log(NodeId x) { return unary(Op::kLog, x); }
NodeId Graph::sqrt(NodeId x) { return unary(Op::kSqrt, x); }
NodeId Graph::sigmoid(NodeId x) { return unary(Op::kSigmoid, x); }
NodeId Graph::tanh(NodeId x) { return unary(Op::kTanh, x); }

NodeId Graph::affine(NodeId x, double a, double b) {
  NodeId id = unary(Op::kAffine, x);
  nodes_[id].a = a;
  nodes_[id].b = b;
  return id;
}

NodeId Graph::max_scalar(NodeId x, double c) {
  NodeId id = unary(Op::kMaxScalar, x);
  nodes_[id].a = c;
  return id;
}

NodeId Graph::sum_all(NodeId x) {
  NodeId id = unary(Op::kSumAll, x);
  nodes_[id].shape = {};
  return id;
}

NodeId Graph::max_all(NodeId x) {
  if (numel(nodes_[x].shape) == 0) throw ShapeError("max_all: empty operand");
  NodeId id = unary(Op::kMaxAll, x);
  nodes_[id].shape = {};
  return id;
}

NodeId Graph::row_sum(NodeId x) {
  check_rank2(Op::kRowSum, x);
  NodeId id = unary(Op::kRowSum, x);
  nodes_[id].shape = {nodes_[x].shape[0]};
  return id;
}

NodeId Graph::row_max(NodeId x) {
  check_rank2(Op::kRowMax, x);
  if (nodes_[x].shape[1] == 0) throw ShapeError("row_max: empty rows");
  NodeId id = unary(Op::kRowMax, x);
  nodes_[id].shape = {nodes_[x].shape[0]};
  return id;
}

NodeId Graph::col_sum(NodeId x) {
  check_rank2(Op::kColSum, x);
  NodeId id = unary(Op::kColSum, x);
  nodes_[id].shape = {nodes_[x].shape[1]};
  return id;
}

NodeId Graph::col_max(NodeId x) {
  check_rank2(Op::kColMax, x);
  if (nodes_[x].shape[0] == 0) throw ShapeError("col_max: empty columns");
  NodeId id = unary(Op::kColMax, x);
  nodes_[id].shape = {nodes_[x].shape[1]};
  return id;
}

NodeId Graph::broadcast_cols(NodeId v, Index n) {
  if (nodes_[v].shape.size() != 1) throw ShapeError("broadcast_cols: expected a rank-1 operand");
  NodeId id = unary(Op::kBroadcastCols, v);
  nodes_[id].i0 = n;
  nodes_[id].shape = {nodes_[v].shape[0], n};
  return id;
}

NodeId Graph::broadcast_rows(NodeId v, Index n) {
  if (nodes_[v].shape.size() != 1) throw ShapeError("broadcast_rows: expected a rank-1 operand");
  NodeId id = unary(Op::kBroadcastRows, v);
  nodes_[id].i0 = n;
  nodes_[id].shape = {n, nodes_[v].shape[0]};
  return id;
}

NodeId Graph::concat(NodeId x, NodeId y) {
  const Shape& a = nodes_[x].shape;
  const Shape& b = nodes_[y].shape;
  if (a.size() != b.size() || a.empty() || (a.size() == 2 && a[1] != b[1]))
    throw ShapeError(mismatch_msg(Op::kConcat, a, b));
  Node n;
  n.op = Op::kConcat;
  n.in = {x, y};
  n.shape = a;
  n.shape[0] = a[0] + b[0];
  return push(std::move(n));
}

NodeId Graph::slice_rows(NodeId x, Index begin, Index end) {
  const Shape& s = nodes_[x].shape;
  if (s.empty()) throw ShapeError("slice_rows: scalar operand");
  if (begin < 0 || end > s[0] || begin > end) throw ShapeError("slice_rows: range out of bounds");
  Node n;
  n.op = Op::kSliceRows;
  n.in[0] = x;
  n.i0 = begin;
  n.i1 = end;
  n.shape = s;
  n.shape[0] = end - begin;
  return push(std::move(n));
}

NodeId Graph::slice_cols(NodeId x, Index begin, Index end) {
  check_rank2(Op::kSliceCols, x);
  const Shape& s = nodes_[x].shape;
  if (begin < 0 || end > s[1] || begin > end) throw ShapeError("slice_cols: range out of bounds");
  Node n;
  n.op = Op::kSliceCols;
  n.in[0] = x;
  n.i0 = begin;
  n.i1 = end;
  n.shape = {s[0], end - begin};
  return push(std::move(n));
}

NodeId Graph::gather_rows(NodeId x, std::vector<Index> ids) {
  check_rank2(Op::kGatherRows, x);
  const Shape& s = nodes_[x].shape;
  for (Index i : ids)
    if (i < 0 || i >= s[0]) throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range");
  Node n;
  n.op = Op::kGatherRows;
  n.in[0] = x;
  n.shape = {static_cast<Index>(ids.size()), s[1]};
  n.ids = std::move(ids);
  return push(std::move(n));
}

NodeId Graph::reshape(NodeId x, Shape shape) {
  if (numel(shape) != numel(nodes_[x].shape))
    throw ShapeError(mismatch_msg(Op::kReshape, nodes_[x].shape, shape));
  Node n;
  n.op = Op::kReshape;
  n.in[0] = x;
  n.shape = std::move(shape);
  return push(std::move(n));
}

void Graph::mark_output(const std::string& name, NodeId id) { outputs_[name] = id; }

NodeId Graph::output(const std::string& name) const {
  auto it = outputs_.find(name);
  if (it == outputs_.end()) throw Error("graph: no output named '" + name + "'");
  return it->second;
}

const Tensor& Graph::value(NodeId id) const {
  if (!forward_done_) throw Error("graph: value() before forward()");
  return values_[id];
}

void Graph::compute(NodeId id) {
  const Node& n = nodes_[id];
  Tensor& out = values_[id];
  out.shape = n.shape;
  const auto in0 = [&]() -> const Tensor& { return values_[n.in[0]]; };
  const auto in1 = [&]() -> const Tensor& { return values_[n.in[1]]; };

  switch (n.op) {
    case Op::kPlaceholder:
      break;  // bound before replay
    case Op::kConstant:
      out = n.value;
      break;
    case Op::kAdd:
      out.data = in0().data + in1().data;
      break;
    case Op::kSub:
      out.data = in0().data - in1().data;
      break;
    case Op::kMul:
      out.data = in0().data.cwiseProduct(in1().data);
      break;
    case Op::kDiv:
      out.data = in0().data.cwiseQuotient(in1().data);
      break;
    case Op::kSafeDiv:
      out.data = (in1().data.array() == 0.0)
                     .select(0.0, in0().data.array() / in1().data.array())
                     .matrix();
      break;
    case Op::kMatMul:
      out.data.resize(numel(n.shape));
      out.mat().noalias() = in0().mat() * in1().mat();
      break;
    case Op::kTranspose:
      out.data.resize(numel(n.shape));
      out.mat() = in0().mat().transpose();
      break;
    case Op::kRelu:
      out.data = in0().data.cwiseMax(0.0);
      break;
    case Op::kAbs:
      out.data = in0().data.cwiseAbs();
      break;
    case Op::kExp:
      // std::exp underflow gives exactly 0 for very negative inputs; Eigen's
      // vectorized exp clamps instead, which would leak mass through masks.
      out.data = in0().data.unaryExpr([](double v) { return std::exp(v); });
      break;
    case Op::kLog:
      out.data = in0().data.array().log();
      break;
    case Op::kSqrt:
      out.data = in0().data.cwiseSqrt();
      break;
    case Op::kSigmoid:
      // 0.5*(1+tanh(x/2)) avoids overflow for large negative inputs.
      out.data = ((in0().data.array() * 0.5).tanh() * 0.5 + 0.5).matrix();
      break;
    case Op::kTanh:
      out.data = in0().data.array().tanh();
      break;
    case Op::kAffine:
      out.data = (in0().data.array() * n.a + n.b).matrix();
      break;
    case Op::kMaxScalar:
      out.data = in0().data.cwiseMax(n.a);
      break;
    case Op::kSumAll:
      out.data.resize(1);
      out.data[0] = in0().data.sum();
      break;
    case Op::kMaxAll:
      out.data.resize(1);
      out.data[0] = in0().data.maxCoeff();
      break;
    case Op::kRowSum:
      out.data = in0().mat().rowwise().sum();
      break;
    case Op::kRowMax:
      out.data = in0().mat().rowwise().maxCoeff();
      break;
    case Op::kColSum:
      out.data = in0().mat().colwise().sum().transpose();
      break;
    case Op::kColMax:
      out.data = in0().mat().colwise().maxCoeff().transpose();
      break;
    case Op::kBroadcastCols: {
      out.data.resize(numel(n.shape));
      auto m = out.mat();
      m.colwise() = in0().data;
      break;
    }
    case Op::kBroadcastRows: {
      out.data.resize(numel(n.shape));
      auto m = out.mat();
      m.rowwise() = in0().data.transpose();
      break;
    }
    case Op::kConcat:
      out.data.resize(numel(n.shape));
      // Row-major: stacking along axis 0 is a contiguous append.
      out.data.head(in0().size()) = in0().data;
      out.data.tail(in1().size()) = in1().data;
      break;
    case Op::kSliceRows: {
      const Index width = nodes_[n.in[0]].shape.size() == 2 ? nodes_[n.in[0]].shape[1] : 1;
      out.data = in0().data.segment(n.i0 * width, (n.i1 - n.i0) * width);
      break;
    }
    case Op::kSliceCols:
      out.data.resize(numel(n.shape));
      out.mat() = in0().mat().middleCols(n.i0, n.i1 - n.i0);
      break;
    case Op::kGatherRows: {
      out.data.resize(numel(n.shape));
      auto src = in0().mat();
      auto dst = out.mat();
      for (Index r = 0; r < static_cast<Index>(n.ids.size()); ++r) dst.row(r) = src.row(n.ids[r]);
      break;
    }
    case Op::kReshape:
      out.data = in0().data;
      break;
  }

  if (!out.all_finite())
    throw NonFiniteError(std::string(op_name(n.op)) + ": non-finite value at node " +
                         std::to_string(id));
  out.node = id;
}

void Graph::forward(const std::map<std::string, Tensor>& inputs) {
  values_.assign(nodes_.size(), Tensor());
  for (const auto& [name, id] : placeholders_) {
    auto it = inputs.find(name);
    if (it == inputs.end()) throw Error("evaluate: unbound placeholder '" + name + "'");
    if (it->second.shape != nodes_[id].shape)
      throw ShapeError("evaluate: placeholder '" + name + "' expects " +
                       shape_str(nodes_[id].shape) + ", got " + shape_str(it->second.shape));
    if (!it->second.all_finite())
      throw NonFiniteError("evaluate: non-finite value bound to '" + name + "'");
    values_[id] = it->second;
    values_[id].node = id;
  }
  forward_done_ = true;  // value() is legal during replay
  for (NodeId id = 0; id < static_cast<NodeId>(nodes_.size()); ++id)
    if (nodes_[id].op != Op::kPlaceholder) compute(id);
}

std::map<std::string, Tensor> Graph::evaluate(const std::map<std::string, Tensor>& inputs) {
  forward(inputs);
  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : outputs_) out[name] = values_[id];
  return out;
}

namespace {

// First maximal flat index; deterministic tie-break.
Index argmax_first(const Eigen::VectorXd& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

void Graph::backprop(NodeId out, std::vector<Tensor>& adj) {
  adj.assign(nodes_.size(), Tensor());
  adj[out] = Tensor::scalar(1.0);

  auto grad_of = [&](NodeId id) -> Tensor& {
    if (adj[id].data.size() == 0 && numel(nodes_[id].shape) != 0) {
      if (adj[id].shape != nodes_[id].shape || adj[id].data.size() != numel(nodes_[id].shape))
        adj[id] = Tensor::zeros(nodes_[id].shape);
    }
    return adj[id];
  };
  auto has_grad = [&](NodeId id) { return adj[id].data.size() != 0; };

  for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
    if (!has_grad(id)) continue;
    const Node& n = nodes_[id];
    if (n.op == Op::kPlaceholder || n.op == Op::kConstant) continue;
    const Tensor& g = adj[id];
    const Tensor& y = values_[id];
    const NodeId x0 = n.in[0];
    const NodeId x1 = n.in[1];

    switch (n.op) {
      case Op::kAdd:
        grad_of(x0).data += g.data;
        grad_of(x1).data += g.data;
        break;
      case Op::kSub:
        grad_of(x0).data += g.data;
        grad_of(x1).data -= g.data;
        break;
      case Op::kMul:
        grad_of(x0).data += g.data.cwiseProduct(values_[x1].data);
        grad_of(x1).data += g.data.cwiseProduct(values_[x0].data);
        break;
      case Op::kDiv:
        grad_of(x0).data += g.data.cwiseQuotient(values_[x1].data);
        grad_of(x1).data -= g.data.cwiseProduct(y.data).cwiseQuotient(values_[x1].data);
        break;
      case Op::kSafeDiv: {
        auto bzero = (values_[x1].data.array() == 0.0);
        grad_of(x0).data +=
            bzero.select(0.0, g.data.array() / values_[x1].data.array()).matrix();
        grad_of(x1).data -= bzero
                                .select(0.0, g.data.array() * y.data.array() /
                                                 values_[x1].data.array())
                                .matrix();
        break;
      }
      case Op::kMatMul:
        grad_of(x0).mat().noalias() += g.mat() * values_[x1].mat().transpose();
        grad_of(x1).mat().noalias() += values_[x0].mat().transpose() * g.mat();
        break;
      case Op::kTranspose:
        grad_of(x0).mat() += g.mat().transpose();
        break;
      case Op::kRelu:
        // Subgradient 0 at the kink.
        grad_of(x0).data += g.data.cwiseProduct(
            (values_[x0].data.array() > 0.0).cast<double>().matrix());
        break;
      case Op::kAbs:
        grad_of(x0).data +=
            g.data.cwiseProduct(values_[x0].data.array().sign().matrix());
        break;
      case Op::kExp:
        grad_of(x0).data += g.data.cwiseProduct(y.data);
        break;
      case Op::kLog:
        grad_of(x0).data += g.data.cwiseQuotient(values_[x0].data);
        break;
      case Op::kSqrt:
        grad_of(x0).data += (g.data.array() * 0.5 / y.data.array()).matrix();
        break;
      case Op::kSigmoid:
        grad_of(x0).data +=
            (g.data.array() * y.data.array() * (1.0 - y.data.array())).matrix();
        break;
      case Op::kTanh:
        grad_of(x0).data += (g.data.array() * (1.0 - y.data.array().square())).matrix();
        break;
      case Op::kAffine:
        grad_of(x0).data += g.data * n.a;
        break;
      case Op::kMaxScalar:
        // Tie at x == c keeps the constant branch, matching relu'(0) = 0.
        grad_of(x0).data += g.data.cwiseProduct(
            (values_[x0].data.array() > n.a).cast<double>().matrix());
        break;
      case Op::kSumAll:
        grad_of(x0).data.array() += g.data[0];
        break;
      case Op::kMaxAll:
        grad_of(x0).data[argmax_first(values_[x0].data)] += g.data[0];
        break;
      case Op::kRowSum: {
        auto m = grad_of(x0).mat();
        m.colwise() += g.data;
        break;
      }
      case Op::kRowMax: {
        auto src = values_[x0].mat();
        auto m = grad_of(x0).mat();
        for (Index r = 0; r < src.rows(); ++r) {
          Index best = 0;
          for (Index c = 1; c < src.cols(); ++c)
            if (src(r, c) > src(r, best)) best = c;
          m(r, best) += g.data[r];
        }
        break;
      }
      case Op::kColSum: {
        auto m = grad_of(x0).mat();
        m.rowwise() += g.data.transpose();
        break;
      }
      case Op::kColMax: {
        auto src = values_[x0].mat();
        auto m = grad_of(x0).mat();
        for (Index c = 0; c < src.cols(); ++c) {
          Index best = 0;
          for (Index r = 1; r < src.rows(); ++r)
            if (src(r, c) > src(best, c)) best = r;
          m(best, c) += g.data[c];
        }
        break;
      }
      case Op::kBroadcastCols:
        grad_of(x0).data += g.mat().rowwise().sum();
        break;
      case Op::kBroadcastRows:
        grad_of(x0).data += g.mat().colwise().sum().transpose();
        break;
      case Op::kConcat:
        grad_of(x0).data += g.data.head(values_[x0].size());
        grad_of(x1).data += g.data.tail(values_[x1].size());
        break;
      case Op::kSliceRows: {
        const Index width = nodes_[x0].shape.size() == 2 ? nodes_[x0].shape[1] : 1;
        grad_of(x0).data.segment(n.i0 * width, (n.i1 - n.i0) * width) += g.data;
        break;
      }
      case Op::kSliceCols:
        grad_of(x0).mat().middleCols(n.i0, n.i1 - n.i0) += g.mat();
        break;
      case Op::kGatherRows: {
        auto m = grad_of(x0).mat();
        auto gm = g.mat();
        for (Index r = 0; r < static_cast<Index>(n.ids.size()); ++r)
          m.row(n.ids[r]) += gm.row(r);
        break;
      }
      case Op::kReshape:
        grad_of(x0).data += g.data;
        break;
      case Op::kPlaceholder:
      case Op::kConstant:
        break;
    }
  }
}

GradMap Graph::gradient(const std::string& scalar_output, const ParamTree& params) {
  return gradient(output(scalar_output), params);
}

GradMap Graph::gradient(NodeId out, const ParamTree& params) {
  if (!forward_done_) throw Error("gradient: forward pass required first");
  if (!nodes_[out].shape.empty())
    throw ShapeError("gradient: output is not a scalar, shape " + shape_str(nodes_[out].shape));
  std::vector<Tensor> adj;
  backprop(out, adj);
  GradMap grads;
  for (const auto& [name, t] : params) {
    auto it = placeholders_.find(name);
    if (it != placeholders_.end() && adj[it->second].data.size() != 0) {
      Tensor gt = adj[it->second];
      gt.node.reset();
      grads.add(name, std::move(gt));
    } else {
      grads.add(name, Tensor::zeros(t.shape));
    }
  }
  return grads;
}

Eigen::VectorXd Graph::gradient_flat(NodeId out, const ParamTree& params) {
  return gradient(out, params).flatten();
}

FdReport finite_difference_check(Graph& graph, const std::string& scalar_output,
                                 const std::map<std::string, Tensor>& inputs,
                                 const ParamTree& params, double h, double tol) {
  if (h <= 0) throw Error("finite_difference_check: h must be positive");
  std::map<std::string, Tensor> bindings = inputs;
  for (const auto& [name, t] : params) bindings[name] = t;

  graph.forward(bindings);
  const NodeId out = graph.output(scalar_output);
  GradMap analytic = graph.gradient(out, params);

  FdReport report;
  for (const auto& [name, t] : params) {
    for (Index i = 0; i < t.size(); ++i) {
      Tensor& bound = bindings[name];
      const double orig = bound.data[i];
      bound.data[i] = orig + h;
      graph.forward(bindings);
      const double up = graph.value(out).data[0];
      bound.data[i] = orig - h;
      graph.forward(bindings);
      const double down = graph.value(out).data[0];
      bound.data[i] = orig;

      const double numeric = (up - down) / (2.0 * h);
      const double exact = analytic.at(name).data[i];
      const double denom = std::max(std::abs(numeric), std::abs(exact));
      const double rel = denom < 1e-8 ? 0.0 : std::abs(numeric - exact) / denom;
      if (rel > report.max_rel_error) report.max_rel_error = rel;
      if (rel > tol) report.failures.push_back({name, i, exact, numeric, rel});
    }
  }
  std::sort(report.failures.begin(), report.failures.end(),
            [](const FdIssue& a, const FdIssue& b) { return a.rel_error > b.rel_error; });
  report.pass = report.failures.empty();
  // Re-establish the unperturbed forward values for the caller.
  graph.forward(bindings);
  return report;
}

}  // namespace fedsim
