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

#ifndef FEDSIM_FEDERATED_HPP_
#define FEDSIM_FEDERATED_HPP_

#include <string>
#include <vector>

#include "fedsim/lm.hpp"
#include "fedsim/param_tree.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

struct ClientConfig {
  double learning_rate = 0.5;
  Index batch_size = 10;
  Index epochs = 1;
  Index max_batches = 120;
  Index max_seq_len = 20;
};

// delta is the client's weight movement (final - initial), accumulated as
// the running sum of its SGD increments so a single step ships exactly
// -lr * gradient. weight counts training examples consumed.
struct ClientUpdate {
  Eigen::VectorXd delta;
  double weight = 0.0;
};

enum class Weighting { kExampleWeighted, kUniform };
Weighting weighting_from_name(const std::string& name);

struct QuantConfig {
  int bits = 8;
  bool enabled = false;
};

// Uniform sample of n distinct clients, a pure function of (seed, round).
std::vector<std::string> sample_clients(const std::vector<std::string>& pool, Index n, Index round,
                                        std::uint64_t seed);

// Local SGD from the global snapshot over min(epochs * ceil(|data|/batch),
// max_batches) batches of shuffled local data.
ClientUpdate client_update(const LmDims& dims, const ParamTree& global,
                           const std::vector<std::vector<int>>& data, const ClientConfig& cfg,
                           RngStream& rng);

// delta * min(1, clip_norm / ||delta||); inputs already inside the ball pass
// through unchanged, bit for bit.
Eigen::VectorXd clip_update(const Eigen::VectorXd& delta, double clip_norm);

// Stochastic uniform quantization, one 2^bits-level grid per tensor spanning
// that tensor's [min, max]. Coordinates round to an adjacent level, upward
// with probability proportional to the offset, so the result is unbiased.
// wire_bytes is the simulated upload: packed levels plus two range doubles
// per tensor.
struct QuantResult {
  Eigen::VectorXd values;
  Index wire_bytes = 0;
};
QuantResult quantize_update(const Eigen::VectorXd& delta,
                            const std::vector<ParamTree::Segment>& layout, const QuantConfig& q,
                            RngStream& rng);

// Weighted mean of client deltas. Uniform weighting sums in client order and
// divides once, which is what the DP path's round input telescopes to.
Eigen::VectorXd aggregate(const std::vector<ClientUpdate>& updates, Weighting weighting);

enum class ServerOpt { kFedAdam, kSgdMomentum };
ServerOpt server_opt_from_name(const std::string& name);

struct ServerState {
  ParamTree params;
  ServerOpt opt = ServerOpt::kFedAdam;
  Eigen::VectorXd m;         // FedAdam first moment
  Eigen::VectorXd v;         // FedAdam second moment
  Eigen::VectorXd velocity;  // SGD momentum
  Index round = 0;
};
ServerState make_server_state(ParamTree params, ServerOpt opt);

// FedAdam without bias correction: m and v track the aggregated delta, the
// params move by lr * m / (sqrt(v) + tau).
void fedadam_step(ServerState& s, const Eigen::VectorXd& mean_delta, double lr, double beta1,
                  double beta2, double tau);

void sgdm_step(ServerState& s, const Eigen::VectorXd& mean_delta, double lr, double momentum);

}  // namespace fedsim

#endif  // FEDSIM_FEDERATED_HPP_
