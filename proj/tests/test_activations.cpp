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

#include "fedsim/activations.hpp"
#include "fedsim/rng.hpp"

using namespace fedsim;

namespace {

Eigen::VectorXd random_vec(Index n, RngStream& rng, double scale = 1.0) {
  Eigen::VectorXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = scale * rng.next_gaussian();
  return v;
}

}  // namespace

TEST_CASE("maxn arithmetic") {
  Eigen::VectorXd y = maxn((Eigen::VectorXd(3) << 2, 4, -8).finished(), 1e-6);
  CHECK(y[0] == doctest::Approx(0.25));
  CHECK(y[1] == doctest::Approx(0.5));
  CHECK(y[2] == doctest::Approx(-1.0));
}

TEST_CASE("maxn of zero vector stays zero under the eps guard") {
  Eigen::VectorXd y = maxn(Eigen::VectorXd::Zero(3), 1e-6);
  CHECK(y.isZero(0.0));
  // eps = 0 with an all-zero input: 0/0 is defined as 0.
  Eigen::VectorXd z = maxn(Eigen::VectorXd::Zero(3), 0.0);
  CHECK(z.isZero(0.0));
}

TEST_CASE("maxn is scale invariant when the max clears the guard") {
  RngStream rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd x = random_vec(1 + static_cast<Index>(rng.next_below(64)), rng);
    x[0] = 1.5;  // keep max|x| well above eps
    Eigen::VectorXd a = maxn(x, 1e-6);
    Eigen::VectorXd b = maxn(5.0 * x, 1e-6);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("si_sigmoid arithmetic and range") {
  Eigen::VectorXd y = si_sigmoid((Eigen::VectorXd(3) << 1, 2, 4).finished(), 1e-6);
  CHECK(y[0] == doctest::Approx(0.25));
  CHECK(y[1] == doctest::Approx(0.5));
  CHECK(y[2] == 1.0);

  Eigen::VectorXd z = si_sigmoid((Eigen::VectorXd(3) << -1, -2, -3).finished(), 1e-6);
  CHECK(z.isZero(0.0));
}

TEST_CASE("si_tanh arithmetic") {
  Eigen::VectorXd y = si_tanh((Eigen::VectorXd(2) << -2, 1).finished(), 1e-6);
  CHECK(y[0] == -1.0);
  CHECK(y[1] == doctest::Approx(0.5));
  CHECK(si_tanh(Eigen::VectorXd::Zero(2), 1e-6).isZero(0.0));
}

TEST_CASE("Proposition 1: SI activations are scale invariant, ranges hold") {
  RngStream rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.next_below(256));
    Eigen::VectorXd x = random_vec(n, rng);
    x[rng.next_below(n)] = 2.0;  // a positive entry clear of the guard
    for (double a : {0.5, 2.0, 10.0}) {
      CHECK((si_sigmoid(a * x) - si_sigmoid(x)).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((si_tanh(a * x) - si_tanh(x)).cwiseAbs().maxCoeff() < 1e-12);
    }
    Eigen::VectorXd s = si_sigmoid(x);
    CHECK(s.minCoeff() >= 0.0);
    CHECK(s.maxCoeff() <= 1.0);
    Eigen::VectorXd t = si_tanh(x);
    CHECK(t.minCoeff() >= -1.0);
    CHECK(t.maxCoeff() <= 1.0);
  }
}

TEST_CASE("exactly one coordinate attains magnitude 1 at a unique max") {
  RngStream rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd x = random_vec(12, rng);
    x[3] = 3.0;  // unique max in absolute value, above eps
    Eigen::VectorXd t = si_tanh(x, 1e-6);
    int ones = 0;
    for (Index i = 0; i < t.size(); ++i)
      if (std::abs(t[i]) == 1.0) ++ones;
    CHECK(ones == 1);
    CHECK(t[3] == 1.0);
  }
}

TEST_CASE("row_normalize arithmetic") {
  RowMat a(2, 2);
  a << 1, 3, 2, 2;
  RowMat y = row_normalize(a, 1e-6);
  CHECK(y(0, 0) == doctest::Approx(0.25));
  CHECK(y(0, 1) == doctest::Approx(0.75));
  CHECK(y(1, 0) == doctest::Approx(0.5));
  CHECK(y(1, 1) == doctest::Approx(0.5));
}

TEST_CASE("row_normalize: zero rows stay zero; stochastic rows unchanged") {
  RowMat z(1, 2);
  z << 0, 0;
  CHECK(row_normalize(z, 1e-6).isZero(0.0));

  RowMat s(2, 3);
  s << 0.2, 0.3, 0.5, 1.0, 0.0, 0.0;
  RowMat y = row_normalize(s, 1e-6);
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 3; ++j) CHECK(y(i, j) == s(i, j));
}

TEST_CASE("row_normalize rejects negative entries") {
  RowMat a(1, 2);
  a << 1, -0.5;
  CHECK_THROWS_WITH_AS(row_normalize(a, 1e-6), doctest::Contains("negative"), Error);
}

TEST_CASE("row_normalize rows sum to 1 whenever the row clears eps") {
  RngStream rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    RowMat a(4, 7);
    for (Index i = 0; i < a.size(); ++i) a.data()[i] = std::abs(rng.next_gaussian()) + 0.01;
    RowMat y = row_normalize(a, 1e-6);
    for (Index r = 0; r < 4; ++r) CHECK(std::abs(y.row(r).sum() - 1.0) < 1e-12);
  }
}

TEST_CASE("baseline activations") {
  CHECK(baseline_activation(ActivationKind::kSigmoid, Eigen::VectorXd::Zero(1))[0] == 0.5);
  CHECK(baseline_activation(ActivationKind::kTanh, Eigen::VectorXd::Zero(1))[0] == 0.0);
  Eigen::VectorXd sm = baseline_activation(ActivationKind::kSoftmax, Eigen::VectorXd::Zero(4));
  for (Index i = 0; i < 4; ++i) CHECK(sm[i] == doctest::Approx(0.25));
  CHECK(sm.sum() == doctest::Approx(1.0));
  Eigen::VectorXd r = baseline_activation(ActivationKind::kRelu,
                                          (Eigen::VectorXd(2) << -3, 3).finished());
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 3.0);
  CHECK_THROWS_AS(baseline_activation(ActivationKind::kSiTanh, Eigen::VectorXd::Zero(1)), Error);
}

TEST_CASE("standard activations are not scale invariant") {
  RngStream rng(13);
  Eigen::VectorXd x = random_vec(16, rng);
  auto dev = [&](ActivationKind k) {
    return (baseline_activation(k, 2.0 * x) - baseline_activation(k, x)).cwiseAbs().maxCoeff();
  };
  CHECK(dev(ActivationKind::kSigmoid) > 1e-6);
  CHECK(dev(ActivationKind::kTanh) > 1e-6);
  CHECK(dev(ActivationKind::kSoftmax) > 1e-6);
}

TEST_CASE("activation gradients match finite differences away from ties") {
  RngStream rng(55);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd base = random_vec(9, rng);
    base[1] = 2.0;          // unique max for both |.| and relu paths
    base[2] = -2.0 + 0.1;   // keep clear of -|max|
    ParamTree params;
    params.add("x", Tensor::from_vec(base));

    Graph g;
    NodeId x = g.placeholder("x", {9});
    NodeId w1 = g.constant(Tensor::from_vec(random_vec(9, rng)));
    NodeId w2 = g.constant(Tensor::from_vec(random_vec(9, rng)));
    NodeId w3 = g.constant(Tensor::from_vec(random_vec(9, rng)));
    NodeId loss = g.sum_all(g.add(g.mul(si_sigmoid(g, x, 1e-6), w1),
                                  g.add(g.mul(si_tanh(g, x, 1e-6), w2),
                                        g.mul(softmax(g, x), w3))));
    g.mark_output("loss", loss);
    FdReport rep = finite_difference_check(g, "loss", {}, params, 1e-5, 1e-4);
    CHECK(rep.pass);
  }
}
