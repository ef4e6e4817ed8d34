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

#ifndef FEDSIM_DP_TREE_HPP_
#define FEDSIM_DP_TREE_HPP_

#include <cstdint>
#include <map>
#include <optional>

#include "fedsim/param_tree.hpp"
#include "fedsim/tensor.hpp"

namespace fedsim {

struct DpConfig {
  double clip_norm = 5.0;
  double noise_multiplier = 0.0;  // z; per-node noise std is z * clip_norm
  Index clients_per_round = 0;
  std::optional<double> reported_zcdp;  // accounting metadata only, never computed here
};

// Binary-tree noisy prefix sums over per-round clipped aggregate updates.
// Rounds are leaves; the released prefix sum at round t is the exact prefix
// plus one fresh Gaussian noise vector per set bit of t (the covering tree
// nodes). A node's noise is drawn once when the node opens - keyed by
// (seed, creation round, level) - and reused until the node closes, so the
// whole noise stream replays from the seed.
class TreeAgg {
 public:
  TreeAgg(Index dim, const DpConfig& cfg, std::uint64_t seed);

  struct StepResult {
    Eigen::VectorXd release;      // noisy prefix sum S~_t
    Eigen::VectorXd round_input;  // S~_t - S~_{t-1}, formed as
                                  // clipped_sum + (noise_t - noise_{t-1})
  };

  // Advances one round with this round's sum of clipped client deltas.
  StepResult step(const Eigen::VectorXd& clipped_sum);

  Index round() const { return t_; }
  Index dim() const { return dim_; }
  double noise_std() const { return sigma_; }
  Index open_node_count() const { return static_cast<Index>(open_noise_.size()); }

  // Checkpoint support: the exact prefix and open-node noise vectors.
  void append_state(ParamTree& tree) const;
  static TreeAgg restore(Index dim, const DpConfig& cfg, std::uint64_t seed, Index t,
                         const ParamTree& tree);

 private:
  Eigen::VectorXd node_noise(Index creation_round, int level) const;
  Eigen::VectorXd noise_sum() const;

  Index dim_;
  double sigma_;
  std::uint64_t seed_;
  Index t_ = 0;
  Eigen::VectorXd prefix_;          // exact, unnoised
  Eigen::VectorXd prev_noise_sum_;  // noise part of the previous release
  std::map<int, Eigen::VectorXd> open_noise_;  // level -> node noise
};

// Per-round mean fed to the server optimizer: (new - prev) / n. At round 1
// prev_release is the zero vector.
Eigen::VectorXd dp_round_delta(const Eigen::VectorXd& prev_release,
                               const Eigen::VectorXd& new_release, Index n);

}  // namespace fedsim

#endif  // FEDSIM_DP_TREE_HPP_
