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

#ifndef FEDSIM_ACTIVATIONS_HPP_
#define FEDSIM_ACTIVATIONS_HPP_

#include "fedsim/graph.hpp"
#include "fedsim/tensor.hpp"

namespace fedsim {

enum class ActivationKind { kSigmoid, kTanh, kRelu, kSoftmax, kSiSigmoid, kSiTanh };

inline constexpr double kDefaultActivationEps = 1e-6;

// --- tape builders --------------------------------------------------------
// The scale-invariant activations normalize along the hidden dimension. For
// a batched h x B matrix that dimension runs down each column; the rank-1
// overloads reshape through a single column. Every denominator carries an
// eps guard so an all-zero (or all-nonpositive, for SI-sigmoid) input maps
// to zero instead of 0/0.

NodeId maxn(Graph& g, NodeId x, double eps);             // rank-1
NodeId si_sigmoid(Graph& g, NodeId x, double eps);       // rank-1
NodeId si_tanh(Graph& g, NodeId x, double eps);          // rank-1
NodeId maxn_cols(Graph& g, NodeId m, double eps);        // rank-2, per column
NodeId si_sigmoid_cols(Graph& g, NodeId m, double eps);  // rank-2, per column
NodeId si_tanh_cols(Graph& g, NodeId m, double eps);     // rank-2, per column

NodeId softmax(Graph& g, NodeId x);              // rank-1
NodeId softmax_rows(Graph& g, NodeId m);         // rank-2, per row, max-shifted
NodeId row_normalize(Graph& g, NodeId m, double eps);  // rank-2; caller ensures >= 0

NodeId baseline_activation(Graph& g, ActivationKind kind, NodeId x);  // rank-1

// --- eager surface --------------------------------------------------------
// Thin wrappers that run the tape builders on a scratch graph, so the eager
// results and the differentiated path can never drift apart.

Eigen::VectorXd maxn(const Eigen::VectorXd& x, double eps = kDefaultActivationEps);
Eigen::VectorXd si_sigmoid(const Eigen::VectorXd& x, double eps = kDefaultActivationEps);
Eigen::VectorXd si_tanh(const Eigen::VectorXd& x, double eps = kDefaultActivationEps);
// Requires non-negative entries (apply ReLU first); throws otherwise.
RowMat row_normalize(const RowMat& a, double eps = kDefaultActivationEps);
// kind must be one of Sigmoid/Tanh/Relu/Softmax.
Eigen::VectorXd baseline_activation(ActivationKind kind, const Eigen::VectorXd& x);

}  // namespace fedsim

#endif  // FEDSIM_ACTIVATIONS_HPP_
