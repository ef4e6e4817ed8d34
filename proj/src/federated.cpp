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

#include "fedsim/federated.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedsim {

Weighting weighting_from_name(const std::string& name) {
  if (name == "example_weighted") return Weighting::kExampleWeighted;
  if (name == "uniform") return Weighting::kUniform;
  throw Error("unknown weighting '" + name + "'");
}

ServerOpt server_opt_from_name(const std::string& name) {
  if (name == "fedadam") return ServerOpt::kFedAdam;
  if (name == "sgdm") return ServerOpt::kSgdMomentum;
  throw Error("unknown server optimizer '" + name + "'");
}

std::vector<std::string> sample_clients(const std::vector<std::string>& pool, Index n, Index round,
                                        std::uint64_t seed) {
  if (n > static_cast<Index>(pool.size()))
    throw Error("sample_clients: requested " + std::to_string(n) + " of " +
                std::to_string(pool.size()) + " clients");
  std::vector<std::string> ids = pool;
  RngStream rng = RngStream::keyed({seed, fnv1a64("sample"), static_cast<std::uint64_t>(round)});
  for (Index i = 0; i < n; ++i) {
    const Index j = i + static_cast<Index>(rng.next_below(ids.size() - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(n);
  return ids;
}

ClientUpdate client_update(const LmDims& dims, const ParamTree& global,
                           const std::vector<std::vector<int>>& data, const ClientConfig& cfg,
                           RngStream& rng) {
  if (data.empty()) throw Error("client_update: empty client");
  const Index examples = static_cast<Index>(data.size());
  const Index per_epoch = (examples + cfg.batch_size - 1) / cfg.batch_size;
  const Index budget = std::min(cfg.epochs * per_epoch, cfg.max_batches);

  ParamTree local = global;
  Eigen::VectorXd flat = local.flatten();
  ClientUpdate update;
  update.delta = Eigen::VectorXd::Zero(flat.size());

  std::vector<Index> order(examples);
  Index batches_done = 0;
  for (Index epoch = 0; epoch < cfg.epochs && batches_done < budget; ++epoch) {
    std::iota(order.begin(), order.end(), Index{0});
    for (Index i = examples - 1; i > 0; --i)
      std::swap(order[i], order[rng.next_below(static_cast<std::uint64_t>(i + 1))]);

    for (Index b = 0; b < per_epoch && batches_done < budget; ++b) {
      const Index begin = b * cfg.batch_size;
      const Index end = std::min(begin + cfg.batch_size, examples);
      std::vector<std::vector<int>> batch;
      batch.reserve(end - begin);
      for (Index i = begin; i < end; ++i) batch.push_back(data[order[i]]);

      LmBatchGraph bg = build_lm_batch(dims, batch);
      bg.g.forward(to_bindings(local));
      if (bg.loss_tokens > 0) {
        const Eigen::VectorXd step =
            cfg.learning_rate * bg.g.gradient_flat(bg.loss, local);
        flat -= step;
        update.delta -= step;
        local.unflatten(flat);
      }
      update.weight += static_cast<double>(end - begin);
      ++batches_done;
    }
  }
  return update;
}

Eigen::VectorXd clip_update(const Eigen::VectorXd& delta, double clip_norm) {
  if (!(clip_norm > 0)) throw Error("clip_update: clip_norm must be positive");
  const double norm = delta.norm();
  if (norm <= clip_norm) return delta;
  Eigen::VectorXd out = delta * (clip_norm / norm);
  // Rounding can leave the result an ulp outside the ball; nudge until the
  // norm bound holds exactly, which also makes re-clipping a no-op.
  for (double n = out.norm(); n > clip_norm; n = out.norm()) out *= clip_norm / n;
  return out;
}

QuantResult quantize_update(const Eigen::VectorXd& delta,
                            const std::vector<ParamTree::Segment>& layout, const QuantConfig& q,
                            RngStream& rng) {
  if (q.bits < 2 || q.bits > 16) throw Error("quantize_update: bits must be in [2,16]");
  Index covered = 0;
  for (const auto& seg : layout) covered += seg.count;
  if (covered != delta.size()) throw ShapeError("quantize_update: layout does not cover delta");

  QuantResult out;
  out.values = delta;
  const Index levels = Index{1} << q.bits;
  for (const auto& seg : layout) {
    out.wire_bytes += (seg.count * q.bits + 7) / 8 + 2 * static_cast<Index>(sizeof(double));
    auto block = out.values.segment(seg.offset, seg.count);
    const double lo = block.minCoeff();
    const double hi = block.maxCoeff();
    if (hi == lo) continue;  // constant tensors are exact as-is
    const double step = (hi - lo) / static_cast<double>(levels - 1);
    for (Index i = 0; i < seg.count; ++i) {
      const double x = block[i];
      const double pos = (x - lo) / step;
      const double snapped = lo + std::round(pos) * step;
      if (snapped == x) continue;  // already a grid level
      double k = std::floor(pos);
      if (k >= static_cast<double>(levels - 1)) {
        block[i] = hi;
        continue;
      }
      const double frac = pos - k;
      if (rng.next_double() < frac) k += 1.0;
      block[i] = k == static_cast<double>(levels - 1) ? hi : lo + k * step;
    }
  }
  return out;
}

Eigen::VectorXd aggregate(const std::vector<ClientUpdate>& updates, Weighting weighting) {
  if (updates.empty()) throw Error("aggregate: empty round");
  for (const auto& u : updates)
    if (u.delta.size() != updates[0].delta.size())
      throw ShapeError("aggregate: delta length mismatch");
  if (updates.size() == 1) return updates[0].delta;  // mean of one is itself

  if (weighting == Weighting::kUniform) {
    Eigen::VectorXd sum = updates[0].delta;
    for (std::size_t i = 1; i < updates.size(); ++i) sum += updates[i].delta;
    return sum / static_cast<double>(updates.size());
  }
  Eigen::VectorXd acc = updates[0].weight * updates[0].delta;
  double total = updates[0].weight;
  for (std::size_t i = 1; i < updates.size(); ++i) {
    acc += updates[i].weight * updates[i].delta;
    total += updates[i].weight;
  }
  if (!(total > 0)) throw Error("aggregate: non-positive total weight");
  return acc / total;
}

ServerState make_server_state(ParamTree params, ServerOpt opt) {
  ServerState s;
  const Index n = params.flat_size();
  s.params = std::move(params);
  s.opt = opt;
  s.m = Eigen::VectorXd::Zero(n);
  s.v = Eigen::VectorXd::Zero(n);
  s.velocity = Eigen::VectorXd::Zero(n);
  return s;
}

void fedadam_step(ServerState& s, const Eigen::VectorXd& mean_delta, double lr, double beta1,
                  double beta2, double tau) {
  Eigen::VectorXd flat = s.params.flatten();
  if (mean_delta.size() != flat.size()) throw ShapeError("fedadam_step: delta length mismatch");
  s.m = beta1 * s.m + (1.0 - beta1) * mean_delta;
  s.v = beta2 * s.v + (1.0 - beta2) * mean_delta.cwiseProduct(mean_delta);
  flat.array() += lr * s.m.array() / (s.v.array().sqrt() + tau);
  s.params.unflatten(flat);
  s.round += 1;
}

void sgdm_step(ServerState& s, const Eigen::VectorXd& mean_delta, double lr, double momentum) {
  Eigen::VectorXd flat = s.params.flatten();
  if (mean_delta.size() != flat.size()) throw ShapeError("sgdm_step: delta length mismatch");
  s.velocity = momentum * s.velocity + mean_delta;
  flat += lr * s.velocity;
  s.params.unflatten(flat);
  s.round += 1;
}

}  // namespace fedsim
