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

#ifndef FEDSIM_GRAPH_HPP_
#define FEDSIM_GRAPH_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedsim/param_tree.hpp"
#include "fedsim/tensor.hpp"

namespace fedsim {

using NodeId = std::int32_t;

enum class Op : std::uint8_t {
  kPlaceholder,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kSafeDiv,  // a/b with 0/0 (and x/0) defined as 0
  kMatMul,
  kTranspose,
  kRelu,
  kAbs,
  kExp,
  kLog,
  kSqrt,
  kSigmoid,
  kTanh,
  kAffine,     // a*x + b, elementwise, constant a/b
  kMaxScalar,  // max(x, c), elementwise, constant c
  kSumAll,
  kMaxAll,
  kRowSum,
  kRowMax,
  kColSum,
  kColMax,
  kBroadcastCols,  // vector (r) -> r x n, every column equals the vector
  kBroadcastRows,  // vector (c) -> n x c, every row equals the vector
  kConcat,         // along axis 0 (vectors append; matrices stack rows)
  kSliceRows,
  kSliceCols,
  kGatherRows,
  kReshape,
};

const char* op_name(Op op);

// Recorded tape of primitive operations. Nodes are appended in topological
// order by construction; replaying the tape forward reproduces the recorded
// outputs bit-exactly. A Graph instance must not be mutated concurrently;
// distinct graphs evaluate concurrently without restriction.
class Graph {
 public:
  struct Node {
    Op op;
    std::array<NodeId, 2> in{-1, -1};
    Shape shape;
    double a = 0.0;  // affine slope / max_scalar threshold
    double b = 0.0;  // affine intercept
    Index i0 = 0;    // slice begin / broadcast count
    Index i1 = 0;    // slice end
    std::vector<Index> ids;  // gather indices
    std::string name;        // placeholder name
    Tensor value;            // constant payload
  };

  // --- construction -------------------------------------------------------
  NodeId placeholder(const std::string& name, Shape shape);
  NodeId constant(Tensor value);

  NodeId add(NodeId x, NodeId y);
  NodeId sub(NodeId x, NodeId y);
  NodeId mul(NodeId x, NodeId y);
  NodeId div(NodeId x, NodeId y);
  NodeId safe_div(NodeId x, NodeId y);
  NodeId matmul(NodeId x, NodeId y);
  NodeId transpose(NodeId x);
  NodeId relu(NodeId x);
  NodeId abs(NodeId x);
  NodeId exp(NodeId x);
  NodeId log(NodeId x);
  NodeId sqrt(NodeId x);
  NodeId sigmoid(NodeId x);
  NodeId tanh(NodeId x);
  NodeId affine(NodeId x, double a, double b);
  NodeId max_scalar(NodeId x, double c);
  NodeId sum_all(NodeId x);
  NodeId max_all(NodeId x);
  NodeId row_sum(NodeId x);
  NodeId row_max(NodeId x);
  NodeId col_sum(NodeId x);
  NodeId col_max(NodeId x);
  NodeId broadcast_cols(NodeId v, Index n);
  NodeId broadcast_rows(NodeId v, Index n);
  NodeId concat(NodeId x, NodeId y);
  NodeId slice_rows(NodeId x, Index begin, Index end);
  NodeId slice_cols(NodeId x, Index begin, Index end);
  NodeId gather_rows(NodeId x, std::vector<Index> ids);
  NodeId reshape(NodeId x, Shape shape);

  void mark_output(const std::string& name, NodeId id);

  // --- execution ----------------------------------------------------------
  // Binds placeholders by name, replays the tape, and returns the marked
  // outputs. Unknown extra bindings are ignored; a missing binding, a bound
  // tensor of the wrong shape, or a non-finite intermediate is an error
  // naming the offending placeholder or primitive.
  std::map<std::string, Tensor> evaluate(const std::map<std::string, Tensor>& inputs);

  // Forward pass only; values stay readable through value().
  void forward(const std::map<std::string, Tensor>& inputs);

  const Tensor& value(NodeId id) const;
  const Shape& shape_of(NodeId id) const { return nodes_[id].shape; }
  std::size_t node_count() const { return nodes_.size(); }
  NodeId output(const std::string& name) const;

  // Reverse-mode gradient of a scalar output with respect to every tensor in
  // `params` (matched to placeholders by name). Parameters that do not
  // influence the output get zero gradients. Requires a prior forward pass.
  GradMap gradient(const std::string& scalar_output, const ParamTree& params);
  GradMap gradient(NodeId out, const ParamTree& params);

  // Same, flattened in ParamTree layout order.
  Eigen::VectorXd gradient_flat(NodeId out, const ParamTree& params);

 private:
  NodeId push(Node n);
  NodeId unary(Op op, NodeId x);
  NodeId binary_same_shape(Op op, NodeId x, NodeId y);
  void check_rank2(Op op, NodeId x) const;
  void compute(NodeId id);
  void backprop(NodeId out, std::vector<Tensor>& adj);

  std::vector<Node> nodes_;
  std::vector<Tensor> values_;
  std::map<std::string, NodeId> outputs_;
  std::map<std::string, NodeId> placeholders_;
  bool forward_done_ = false;
};

// Per-coordinate comparison of the reverse-mode gradient against central
// finite differences. Lives in the library as the standing test oracle for
// every differentiable composite built on the tape.
struct FdIssue {
  std::string param;
  Index coordinate;
  double analytic;
  double numeric;
  double rel_error;
};

struct FdReport {
  double max_rel_error = 0.0;
  bool pass = true;
  std::vector<FdIssue> failures;  // coordinates exceeding tol, worst first
};

FdReport finite_difference_check(Graph& graph, const std::string& scalar_output,
                                 const std::map<std::string, Tensor>& inputs,
                                 const ParamTree& params, double h, double tol);

}  // namespace fedsim

#endif  // FEDSIM_GRAPH_HPP_
