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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fedsim/federated.hpp"

using namespace fedsim;

namespace {

LmDims tiny_dims() {
  LmDims d;
  d.variant = ModelVariant::kCifgStandard;
  d.vocab = 9;
  d.embed = 5;
  d.hidden = 6;
  d.max_seq_len = 6;
  return d;
}

std::vector<std::vector<int>> tiny_data(Index n, std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<std::vector<int>> data;
  for (Index i = 0; i < n; ++i) {
    std::vector<int> seq(6, Vocab::kPad);
    const Index len = 3 + rng.next_below(3);
    for (Index t = 0; t < len; ++t) seq[t] = 3 + static_cast<int>(rng.next_below(6));
    seq[len] = Vocab::kEos;
    data.push_back(seq);
  }
  return data;
}

std::vector<std::string> make_pool(Index n) {
  std::vector<std::string> pool;
  for (Index i = 0; i < n; ++i) pool.push_back("c" + std::to_string(1000 + i));
  return pool;
}

}  // namespace

TEST_CASE("sample_clients: distinct, deterministic, bounded") {
  auto pool = make_pool(100);
  auto s = sample_clients(pool, 10, 3, 99);
  CHECK(s.size() == 10);
  std::set<std::string> uniq(s.begin(), s.end());
  CHECK(uniq.size() == 10);
  CHECK(sample_clients(pool, 10, 3, 99) == s);
  CHECK(sample_clients(pool, 10, 4, 99) != s);
  CHECK(sample_clients(pool, 10, 3, 100) != s);
  CHECK_THROWS_AS(sample_clients(pool, 101, 0, 1), Error);

  auto big = make_pool(600);
  CHECK(sample_clients(big, 500, 0, 7).size() == 500);
}

TEST_CASE("client_update: zero learning rate is a no-op with full weight") {
  LmDims dims = tiny_dims();
  ParamTree global = LmParams::init(dims, 5).tree();
  auto data = tiny_data(23, 1);
  ClientConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.batch_size = 10;
  RngStream rng(44);
  ClientUpdate u = client_update(dims, global, data, cfg, rng);
  CHECK(u.delta.isZero(0.0));
  CHECK(u.weight == 23.0);
}

TEST_CASE("client_update: one batch, one step ships exactly -lr * gradient") {
  LmDims dims = tiny_dims();
  ParamTree global = LmParams::init(dims, 6).tree();
  auto data = tiny_data(4, 2);
  ClientConfig cfg;
  cfg.learning_rate = 0.25;
  cfg.batch_size = 10;  // one batch holds everything
  RngStream rng = RngStream::keyed({9, 1, 2});
  ClientUpdate u = client_update(dims, global, data, cfg, rng);

  // Independent single gradient at the global params over the same batch
  // order (replay the same shuffle stream).
  RngStream replay = RngStream::keyed({9, 1, 2});
  std::vector<Index> order(data.size());
  std::iota(order.begin(), order.end(), Index{0});
  for (Index i = static_cast<Index>(data.size()) - 1; i > 0; --i)
    std::swap(order[i], order[replay.next_below(static_cast<std::uint64_t>(i + 1))]);
  std::vector<std::vector<int>> batch;
  for (Index i : order) batch.push_back(data[i]);
  LmBatchGraph bg = build_lm_batch(dims, batch);
  bg.g.forward(to_bindings(global));
  Eigen::VectorXd expect = -cfg.learning_rate * bg.g.gradient_flat(bg.loss, global);

  REQUIRE(u.delta.size() == expect.size());
  for (Index i = 0; i < expect.size(); ++i) CHECK(u.delta[i] == expect[i]);
  CHECK(u.weight == 4.0);
}

TEST_CASE("client_update: 1300 examples, batch 10, cap 120 batches") {
  LmDims dims = tiny_dims();
  ParamTree global = LmParams::init(dims, 8).tree();
  auto data = tiny_data(1300, 3);
  ClientConfig cfg;
  cfg.learning_rate = 0.0;  // only the consumption accounting matters here
  cfg.batch_size = 10;
  cfg.epochs = 1;
  cfg.max_batches = 120;
  RngStream rng(7);
  ClientUpdate u = client_update(dims, global, data, cfg, rng);
  CHECK(u.weight == 1200.0);  // 120 batches x 10 examples
}

TEST_CASE("client_update rejects empty clients") {
  LmDims dims = tiny_dims();
  ParamTree global = LmParams::init(dims, 5).tree();
  RngStream rng(1);
  CHECK_THROWS_AS(client_update(dims, global, {}, ClientConfig{}, rng), Error);
}

TEST_CASE("clip_update: projection onto the ball") {
  Eigen::VectorXd x(4);
  x << 6, 8, 0, 0;  // norm 10
  Eigen::VectorXd c = clip_update(x, 5.0);
  CHECK(c.norm() == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(c[0] == doctest::Approx(3.0));

  Eigen::VectorXd small(2);
  small << 1.2, -0.7;  // norm < 5
  Eigen::VectorXd s = clip_update(small, 5.0);
  CHECK(s[0] == small[0]);
  CHECK(s[1] == small[1]);

  CHECK(clip_update(Eigen::VectorXd::Zero(3), 5.0).isZero(0.0));
  CHECK_THROWS_AS(clip_update(small, 0.0), Error);

  // clip_norm = inf disables clipping bit-exactly
  Eigen::VectorXd inf_pass = clip_update(x, std::numeric_limits<double>::infinity());
  for (Index i = 0; i < 4; ++i) CHECK(inf_pass[i] == x[i]);
}

TEST_CASE("clipping is idempotent and norm-bounded on random vectors") {
  RngStream rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd x(32);
    for (Index i = 0; i < 32; ++i) x[i] = 3.0 * rng.next_gaussian();
    Eigen::VectorXd once = clip_update(x, 5.0);
    Eigen::VectorXd twice = clip_update(once, 5.0);
    CHECK(once.norm() <= 5.0 + 1e-12);
    for (Index i = 0; i < 32; ++i) CHECK(once[i] == twice[i]);
  }
}

TEST_CASE("quantize_update: degenerate and on-grid coordinates are exact") {
  QuantConfig q;
  q.bits = 2;
  std::vector<ParamTree::Segment> layout{{"t", 0, 4}};
  RngStream rng(5);

  Eigen::VectorXd constant = Eigen::VectorXd::Constant(4, 0.37);
  QuantResult r = quantize_update(constant, layout, q, rng);
  for (Index i = 0; i < 4; ++i) CHECK(r.values[i] == 0.37);
  CHECK(r.wire_bytes == (4 * 2 + 7) / 8 + 16);

  Eigen::VectorXd grid(4);
  grid << 0, 1, 2, 3;  // exactly the 4 levels of a 2-bit grid on [0,3]
  QuantResult g = quantize_update(grid, layout, q, rng);
  for (Index i = 0; i < 4; ++i) CHECK(g.values[i] == grid[i]);
}

TEST_CASE("quantize_update: stochastic rounding is unbiased (Monte Carlo)") {
  QuantConfig q;
  q.bits = 2;  // grid {0, 1/3, 2/3, 1} on [0,1]
  std::vector<ParamTree::Segment> layout{{"t", 0, 3}};
  Eigen::VectorXd x(3);
  x << 0.0, 1.0, 0.3;

  RngStream rng(777);
  const int n = 100000;
  double sum = 0;
  for (int i = 0; i < n; ++i) {
    QuantResult r = quantize_update(x, layout, q, rng);
    CHECK(r.values[0] == 0.0);
    CHECK(r.values[1] == 1.0);
    sum += r.values[2];
  }
  const double mean = sum / n;
  // 0.3 sits between 0 and 1/3: variance (x-lo)(hi-x) of the two-point law.
  const double var = (0.3 - 0.0) * (1.0 / 3.0 - 0.3);
  CHECK(std::abs(mean - 0.3) <= 3.0 * std::sqrt(var / n));
}

TEST_CASE("quantized values land on the per-tensor grid") {
  QuantConfig q;
  q.bits = 3;
  RngStream rng(31);
  Eigen::VectorXd x(12);
  for (Index i = 0; i < 12; ++i) x[i] = rng.next_gaussian();
  std::vector<ParamTree::Segment> layout{{"a", 0, 7}, {"b", 7, 5}};
  QuantResult r = quantize_update(x, layout, q, rng);
  for (const auto& seg : layout) {
    const double lo = x.segment(seg.offset, seg.count).minCoeff();
    const double hi = x.segment(seg.offset, seg.count).maxCoeff();
    const double step = (hi - lo) / 7.0;
    for (Index i = seg.offset; i < seg.offset + seg.count; ++i) {
      const double pos = (r.values[i] - lo) / step;
      CHECK(std::abs(pos - std::round(pos)) < 1e-9);
      CHECK(r.values[i] >= lo - 1e-12);
      CHECK(r.values[i] <= hi + 1e-12);
    }
  }
}

TEST_CASE("aggregate: mean of one, symmetry, weighted mean") {
  ClientUpdate a{Eigen::VectorXd::Constant(3, 2.0), 1.0};
  Eigen::VectorXd one = aggregate({a}, Weighting::kExampleWeighted);
  for (Index i = 0; i < 3; ++i) CHECK(one[i] == a.delta[i]);

  ClientUpdate b{-a.delta, 1.0};
  CHECK(aggregate({a, b}, Weighting::kUniform).isZero(0.0));

  ClientUpdate z{Eigen::VectorXd::Zero(1), 1.0};
  ClientUpdate four{Eigen::VectorXd::Constant(1, 4.0), 3.0};
  CHECK(aggregate({z, four}, Weighting::kExampleWeighted)[0] == doctest::Approx(3.0));
  CHECK(aggregate({z, four}, Weighting::kUniform)[0] == doctest::Approx(2.0));

  CHECK_THROWS_AS(aggregate({}, Weighting::kUniform), Error);
}

TEST_CASE("fedadam_step: fixed point and scalar reference value") {
  ParamTree p;
  p.add("w", Tensor::scalar(1.0));
  ServerState s = make_server_state(p, ServerOpt::kFedAdam);

  fedadam_step(s, Eigen::VectorXd::Zero(1), 0.001, 0.9, 0.999, 1e-8);
  CHECK(s.params.at("w").data[0] == 1.0);
  CHECK(s.round == 1);

  // One unit delta from zero moments: lr * (0.1) / (sqrt(0.001) + tau).
  fedadam_step(s, Eigen::VectorXd::Ones(1), 0.001, 0.9, 0.999, 1e-8);
  const double expect = 0.001 * 0.1 / (std::sqrt(0.001) + 1e-8);
  CHECK(s.params.at("w").data[0] - 1.0 == doctest::Approx(expect).epsilon(1e-12));
  CHECK(expect == doctest::Approx(3.1622e-3).epsilon(1e-4));
  CHECK(s.round == 2);
}

TEST_CASE("sgdm_step: momentum accumulation and the plain-SGD limit") {
  ParamTree p;
  p.add("w", Tensor::scalar(0.0));
  ServerState s = make_server_state(p, ServerOpt::kSgdMomentum);
  sgdm_step(s, Eigen::VectorXd::Ones(1), 1.0, 0.9);
  sgdm_step(s, Eigen::VectorXd::Ones(1), 1.0, 0.9);
  CHECK(s.params.at("w").data[0] == doctest::Approx(2.9).epsilon(1e-12));

  ParamTree q;
  q.add("w", Tensor::scalar(0.0));
  ServerState s2 = make_server_state(q, ServerOpt::kSgdMomentum);
  sgdm_step(s2, Eigen::VectorXd::Constant(1, 0.5), 0.3, 0.0);
  CHECK(s2.params.at("w").data[0] == doctest::Approx(0.15).epsilon(1e-15));
}

TEST_CASE("degenerate equivalence: single-client FL equals centralized SGD bit-exactly") {
  LmDims dims = tiny_dims();
  const std::uint64_t seed = 17;
  ParamTree fed = LmParams::init(dims, seed).tree();
  ParamTree central = LmParams::init(dims, seed).tree();
  auto data = tiny_data(16, 4);

  ClientConfig cfg;
  cfg.learning_rate = 0.4;
  cfg.batch_size = static_cast<Index>(data.size());  // full-batch: one step per round
  cfg.epochs = 1;

  ServerState server = make_server_state(fed, ServerOpt::kSgdMomentum);
  Eigen::VectorXd central_flat = central.flatten();

  for (Index round = 1; round <= 50; ++round) {
    // Federated path: one client holding all data, identity server step.
    RngStream rng = RngStream::keyed({seed, fnv1a64("client"), static_cast<std::uint64_t>(round)});
    ClientUpdate u = client_update(dims, server.params, data, cfg, rng);
    Eigen::VectorXd mean = aggregate({u}, Weighting::kExampleWeighted);
    sgdm_step(server, mean, /*lr=*/1.0, /*momentum=*/0.0);

    // Centralized oracle: plain full-batch SGD, same shuffle stream.
    RngStream crng = RngStream::keyed({seed, fnv1a64("client"), static_cast<std::uint64_t>(round)});
    std::vector<Index> order(data.size());
    std::iota(order.begin(), order.end(), Index{0});
    for (Index i = static_cast<Index>(data.size()) - 1; i > 0; --i)
      std::swap(order[i], order[crng.next_below(static_cast<std::uint64_t>(i + 1))]);
    std::vector<std::vector<int>> batch;
    for (Index i : order) batch.push_back(data[i]);
    LmBatchGraph bg = build_lm_batch(dims, batch);
    central.unflatten(central_flat);
    bg.g.forward(to_bindings(central));
    central_flat -= cfg.learning_rate * bg.g.gradient_flat(bg.loss, central);

    Eigen::VectorXd fed_flat = server.params.flatten();
    REQUIRE(fed_flat.size() == central_flat.size());
    for (Index i = 0; i < fed_flat.size(); ++i) {
      if (fed_flat[i] != central_flat[i]) {
        CAPTURE(round);
        CAPTURE(i);
        REQUIRE(fed_flat[i] == central_flat[i]);
      }
    }
  }
}
