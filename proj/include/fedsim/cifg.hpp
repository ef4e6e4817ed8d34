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

#ifndef FEDSIM_CIFG_HPP_
#define FEDSIM_CIFG_HPP_

#include <string>
#include <utility>

#include "fedsim/activations.hpp"
#include "fedsim/graph.hpp"
#include "fedsim/param_tree.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

enum class ModelVariant {
  kCifgStandard,
  kCifgScaleInvariant,
  kTransformerStandard,
  kTransformerScaleInvariant,
};

inline bool is_cifg(ModelVariant v) {
  return v == ModelVariant::kCifgStandard || v == ModelVariant::kCifgScaleInvariant;
}
inline bool is_scale_invariant(ModelVariant v) {
  return v == ModelVariant::kCifgScaleInvariant || v == ModelVariant::kTransformerScaleInvariant;
}
const char* variant_name(ModelVariant v);
ModelVariant variant_from_name(const std::string& name);

// Coupled-input-forget-gate cell weights. There is no input gate: it is
// defined as 1 - forget, which removes a quarter of the LSTM parameters.
struct CifgParams {
  Tensor W_f, U_f, b_f;  // forget:    h x d, h x h, h
  Tensor W_o, U_o, b_o;  // output
  Tensor W_c, U_c, b_c;  // candidate cell

  Index input_dim() const { return W_f.shape[1]; }
  Index hidden_dim() const { return W_f.shape[0]; }

  static CifgParams init(Index input_dim, Index hidden_dim, std::uint64_t seed);
  static CifgParams shaped(Index input_dim, Index hidden_dim);  // zero weights
  void append_to(ParamTree& tree, const std::string& prefix) const;
  static CifgParams from_tree(const ParamTree& tree, const std::string& prefix);
};

// Placeholder ids for one cell's weights on a tape.
struct CifgNodes {
  NodeId W_f, U_f, b_f, W_o, U_o, b_o, W_c, U_c, b_c;
};
CifgNodes cifg_placeholders(Graph& g, const CifgParams& p, const std::string& prefix);

struct CifgStepNodes {
  NodeId h;
  NodeId c;
};

// One recurrence step on the tape. x is d x B, h_prev and c_prev are h x B.
// The standard variant gates with sigmoid/tanh; the scale-invariant variant
// substitutes SI-sigmoid for every sigmoid and SI-tanh for every tanh,
// normalizing along the hidden dimension of each batch column.
CifgStepNodes cifg_step(Graph& g, const CifgNodes& w, NodeId x, NodeId h_prev, NodeId c_prev,
                        ModelVariant variant, double eps);

// Eager single-example surface: x is a d-vector, states are h-vectors.
std::pair<Tensor, Tensor> cifg_step(const CifgParams& p, const Tensor& x, const Tensor& h_prev,
                                    const Tensor& c_prev, ModelVariant variant,
                                    double eps = kDefaultActivationEps);

}  // namespace fedsim

#endif  // FEDSIM_CIFG_HPP_
