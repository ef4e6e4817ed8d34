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

#include "fedsim/dp_tree.hpp"

#include <bit>

#include "fedsim/rng.hpp"

namespace fedsim {

TreeAgg::TreeAgg(Index dim, const DpConfig& cfg, std::uint64_t seed)
    : dim_(dim), seed_(seed) {
  if (dim <= 0) throw Error("TreeAgg: dimension must be positive");
  if (!(cfg.clip_norm > 0)) throw Error("TreeAgg: clip_norm must be positive");
  if (cfg.noise_multiplier < 0) throw Error("TreeAgg: noise multiplier must be >= 0");
  // z == 0 must stay exactly noiseless even with clipping disabled
  // (clip_norm = inf), so never form 0 * inf.
  sigma_ = cfg.noise_multiplier == 0.0 ? 0.0 : cfg.noise_multiplier * cfg.clip_norm;
  prefix_ = Eigen::VectorXd::Zero(dim);
  prev_noise_sum_ = Eigen::VectorXd::Zero(dim);
}

Eigen::VectorXd TreeAgg::node_noise(Index creation_round, int level) const {
  Eigen::VectorXd noise = Eigen::VectorXd::Zero(dim_);
  if (sigma_ == 0.0) return noise;
  RngStream rng = RngStream::keyed({seed_, fnv1a64("tree_noise"),
                                    static_cast<std::uint64_t>(creation_round),
                                    static_cast<std::uint64_t>(level)});
  for (Index i = 0; i < dim_; ++i) noise[i] = sigma_ * rng.next_gaussian();
  return noise;
}

Eigen::VectorXd TreeAgg::noise_sum() const {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim_);
  for (const auto& [level, noise] : open_noise_) sum += noise;
  return sum;
}

TreeAgg::StepResult TreeAgg::step(const Eigen::VectorXd& clipped_sum) {
  if (clipped_sum.size() != dim_) throw ShapeError("TreeAgg::step: dimension mismatch");
  t_ += 1;
  // Binary-counter increment: the trailing ones of t-1 close (their noise is
  // discarded), one node opens at the lowest set bit of t with fresh noise.
  const int level = std::countr_zero(static_cast<std::uint64_t>(t_));
  for (int l = 0; l < level; ++l) open_noise_.erase(l);
  open_noise_[level] = node_noise(t_, level);

  prefix_ += clipped_sum;
  Eigen::VectorXd nsum = noise_sum();

  StepResult out;
  out.release = prefix_ + nsum;
  out.round_input = clipped_sum + (nsum - prev_noise_sum_);
  prev_noise_sum_ = std::move(nsum);
  return out;
}

void TreeAgg::append_state(ParamTree& tree) const {
  tree.add("__dp__.prefix", Tensor::from_vec(prefix_));
  tree.add("__dp__.prev_noise_sum", Tensor::from_vec(prev_noise_sum_));
  for (const auto& [level, noise] : open_noise_)
    tree.add("__dp__.noise_level" + std::to_string(level), Tensor::from_vec(noise));
}

TreeAgg TreeAgg::restore(Index dim, const DpConfig& cfg, std::uint64_t seed, Index t,
                         const ParamTree& tree) {
  TreeAgg agg(dim, cfg, seed);
  agg.t_ = t;
  agg.prefix_ = tree.at("__dp__.prefix").data;
  agg.prev_noise_sum_ = tree.at("__dp__.prev_noise_sum").data;
  for (int level = 0; level < 63; ++level) {
    if ((static_cast<std::uint64_t>(t) >> level) & 1) {
      const std::string name = "__dp__.noise_level" + std::to_string(level);
      agg.open_noise_[level] = tree.at(name).data;
    }
  }
  return agg;
}

Eigen::VectorXd dp_round_delta(const Eigen::VectorXd& prev_release,
                               const Eigen::VectorXd& new_release, Index n) {
  if (n <= 0) throw Error("dp_round_delta: clients_per_round must be positive");
  if (prev_release.size() != new_release.size())
    throw ShapeError("dp_round_delta: dimension mismatch");
  return (new_release - prev_release) / static_cast<double>(n);
}

}  // namespace fedsim
