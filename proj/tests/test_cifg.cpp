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

#include "fedsim/cifg.hpp"

using namespace fedsim;

namespace {

Tensor randn(Shape s, RngStream& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(s));
  for (Index i = 0; i < t.size(); ++i) t.data[i] = scale * rng.next_gaussian();
  return t;
}

CifgParams random_params(Index d, Index h, std::uint64_t seed) {
  RngStream rng(seed);
  CifgParams p = CifgParams::shaped(d, h);
  for (Tensor* t : {&p.W_f, &p.U_f, &p.b_f, &p.W_o, &p.U_o, &p.b_o, &p.W_c, &p.U_c, &p.b_c})
    *t = randn(t->shape, rng, 0.7);
  return p;
}

// Recomputes the forget gate alone so the i = 1 - f coupling is checked
// against an independent path.
Eigen::VectorXd forget_gate(const CifgParams& p, const Tensor& x, const Tensor& h_prev,
                            ModelVariant variant, double eps) {
  Eigen::VectorXd pre =
      p.W_f.mat() * x.data + p.U_f.mat() * h_prev.data + p.b_f.data;
  if (is_scale_invariant(variant)) return si_sigmoid(pre, eps);
  return (1.0 / (1.0 + (-pre.array()).exp())).matrix();
}

}  // namespace

TEST_CASE("cifg_step with all-zero weights: gates are 1/2, state halves") {
  const Index d = 3, h = 4;
  CifgParams p = CifgParams::shaped(d, h);
  RngStream rng(2);
  Tensor x = randn({d}, rng);
  Tensor h_prev = randn({h}, rng);
  Tensor c_prev = randn({h}, rng);

  auto [h_t, c_t] = cifg_step(p, x, h_prev, c_prev, ModelVariant::kCifgStandard);
  for (Index i = 0; i < h; ++i) {
    CHECK(c_t.data[i] == doctest::Approx(0.5 * c_prev.data[i]));
    CHECK(h_t.data[i] == doctest::Approx(0.5 * std::tanh(0.5 * c_prev.data[i])));
  }
}

TEST_CASE("gate coupling: f + i == 1 exactly, both variants") {
  RngStream rng(3);
  for (ModelVariant v : {ModelVariant::kCifgStandard, ModelVariant::kCifgScaleInvariant}) {
    for (int trial = 0; trial < 200; ++trial) {
      const Index d = 5, h = 6;
      CifgParams p = random_params(d, h, 100 + trial);
      Tensor x = randn({d}, rng);
      Tensor h_prev = randn({h}, rng);
      Tensor c_prev = randn({h}, rng);

      // The cell folds i into c_t; recompute f and i = 1 - f the way the
      // tape does and check the identity at the bit level.
      Eigen::VectorXd f = forget_gate(p, x, h_prev, v, 1e-6);
      for (Index j = 0; j < h; ++j) {
        const double i_gate = -1.0 * f[j] + 1.0;
        CHECK(f[j] + i_gate == 1.0);
      }
    }
  }
}

TEST_CASE("cell state follows f*c_prev + (1-f)*cand") {
  RngStream rng(9);
  const Index d = 4, h = 5;
  CifgParams p = random_params(d, h, 42);
  Tensor x = randn({d}, rng);
  Tensor h_prev = randn({h}, rng);
  Tensor c_prev = randn({h}, rng);

  for (ModelVariant v : {ModelVariant::kCifgStandard, ModelVariant::kCifgScaleInvariant}) {
    auto [h_t, c_t] = cifg_step(p, x, h_prev, c_prev, v);
    Eigen::VectorXd f = forget_gate(p, x, h_prev, v, 1e-6);
    Eigen::VectorXd pre_c = p.W_c.mat() * x.data + p.U_c.mat() * h_prev.data + p.b_c.data;
    Eigen::VectorXd cand =
        is_scale_invariant(v) ? si_tanh(pre_c, 1e-6) : pre_c.array().tanh().matrix();
    for (Index j = 0; j < h; ++j) {
      const double expect = f[j] * c_prev.data[j] + (1.0 - f[j]) * cand[j];
      CHECK(c_t.data[j] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("SI variant: scaling the forget triple by a=7 leaves the step unchanged") {
  RngStream rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const Index d = 6, h = 8;
    CifgParams p = random_params(d, h, 500 + trial);
    Tensor x = randn({d}, rng);
    Tensor h_prev = randn({h}, rng);
    Tensor c_prev = randn({h}, rng);

    auto [h1, c1] = cifg_step(p, x, h_prev, c_prev, ModelVariant::kCifgScaleInvariant);
    CifgParams q = p;
    q.W_f.data *= 7.0;
    q.U_f.data *= 7.0;
    q.b_f.data *= 7.0;
    auto [h2, c2] = cifg_step(q, x, h_prev, c_prev, ModelVariant::kCifgScaleInvariant);
    CHECK((h1.data - h2.data).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((c1.data - c2.data).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("standard variant is not scale invariant") {
  RngStream rng(77);
  const Index d = 6, h = 8;
  CifgParams p = random_params(d, h, 7);
  Tensor x = randn({d}, rng);
  Tensor h_prev = randn({h}, rng);
  Tensor c_prev = randn({h}, rng);

  auto [h1, c1] = cifg_step(p, x, h_prev, c_prev, ModelVariant::kCifgStandard);
  CifgParams q = p;
  q.W_f.data *= 2.0;
  q.U_f.data *= 2.0;
  q.b_f.data *= 2.0;
  auto [h2, c2] = cifg_step(q, x, h_prev, c_prev, ModelVariant::kCifgStandard);
  CHECK((h1.data - h2.data).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("cifg_step rejects non-CIFG variants and bad shapes") {
  CifgParams p = CifgParams::shaped(3, 4);
  Tensor x = Tensor::zeros({3});
  Tensor h = Tensor::zeros({4});
  Tensor c = Tensor::zeros({4});
  CHECK_THROWS_AS(cifg_step(p, x, h, c, ModelVariant::kTransformerStandard), Error);
  CHECK_THROWS_AS(cifg_step(p, Tensor::zeros({5}), h, c, ModelVariant::kCifgStandard),
                  ShapeError);
}

TEST_CASE("cifg_step gradients match finite differences, both variants") {
  for (ModelVariant v : {ModelVariant::kCifgStandard, ModelVariant::kCifgScaleInvariant}) {
    RngStream rng(is_scale_invariant(v) ? 11 : 12);
    const Index d = 4, h = 8, batch = 2;
    CifgParams p = random_params(d, h, 900 + static_cast<int>(v));

    Graph g;
    CifgNodes w = cifg_placeholders(g, p, "");
    NodeId x = g.constant(randn({d, batch}, rng));
    NodeId hp = g.constant(randn({h, batch}, rng));
    NodeId cp = g.constant(randn({h, batch}, rng));
    CifgStepNodes step = cifg_step(g, w, x, hp, cp, v, 1e-6);
    NodeId wh = g.constant(randn({h, batch}, rng));
    NodeId wc = g.constant(randn({h, batch}, rng));
    g.mark_output("loss", g.add(g.sum_all(g.mul(step.h, wh)), g.sum_all(g.mul(step.c, wc))));

    ParamTree params;
    p.append_to(params, "");
    FdReport rep = finite_difference_check(g, "loss", {}, params, 1e-5, 1e-4);
    INFO("variant ", variant_name(v), " max rel err ", rep.max_rel_error);
    CHECK(rep.pass);
  }
}
