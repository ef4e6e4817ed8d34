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

#include "fedsim/attention.hpp"

using namespace fedsim;

namespace {

Tensor randn(Shape s, RngStream& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(s));
  for (Index i = 0; i < t.size(); ++i) t.data[i] = scale * rng.next_gaussian();
  return t;
}

AttnHeadParams random_head(Index k, Index d, std::uint64_t seed) {
  RngStream rng(seed);
  return {randn({k, d}, rng, 0.6), randn({k, d}, rng, 0.6), randn({k, d}, rng, 0.6),
          randn({d, k}, rng, 0.6)};
}

AttnParams random_block(Index d, Index heads, Index ffn, std::uint64_t seed) {
  AttnParams p = AttnParams::init(d, heads, ffn, seed);
  return p;
}

}  // namespace

TEST_CASE("zero W_Q: causal standard attention is uniform over positions <= t") {
  const Index d = 6, k = 3, n = 4;
  AttnHeadParams p = random_head(k, d, 5);
  p.W_q = Tensor::zeros({k, d});
  RngStream rng(8);
  Tensor x = randn({d, n}, rng);

  auto [probs, out] = attention(p, x, ModelVariant::kTransformerStandard);
  auto pm = probs.mat();
  for (Index t = 0; t < n; ++t) {
    for (Index j = 0; j <= t; ++j) CHECK(pm(t, j) == doctest::Approx(1.0 / (t + 1)));
    for (Index j = t + 1; j < n; ++j) CHECK(pm(t, j) == 0.0);
  }
}

TEST_CASE("SI attention rows sum to 1 or are all-zero") {
  const Index d = 8, k = 4, n = 6;
  RngStream rng(3);
  for (int trial = 0; trial < 25; ++trial) {
    AttnHeadParams p = random_head(k, d, 50 + trial);
    Tensor x = randn({d, n}, rng);
    auto [probs, out] = attention(p, x, ModelVariant::kTransformerScaleInvariant);
    auto pm = probs.mat();
    for (Index t = 0; t < n; ++t) {
      const double s = pm.row(t).sum();
      CHECK((std::abs(s - 1.0) < 1e-12 || s == 0.0));
      for (Index j = t + 1; j < n; ++j) CHECK(pm(t, j) == 0.0);  // causal zeros
    }
  }
}

TEST_CASE("SI attention probs are invariant to scaling W_Q or W_K") {
  const Index d = 8, k = 4, n = 5;
  RngStream rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    AttnHeadParams p = random_head(k, d, 200 + trial);
    Tensor x = randn({d, n}, rng);
    auto [p0, o0] = attention(p, x, ModelVariant::kTransformerScaleInvariant);

    AttnHeadParams q = p;
    q.W_q.data *= 10.0;
    auto [p1, o1] = attention(q, x, ModelVariant::kTransformerScaleInvariant);
    CHECK((p0.data - p1.data).cwiseAbs().maxCoeff() < 1e-10);

    AttnHeadParams r = p;
    r.W_k.data *= 3.0;
    auto [p2, o2] = attention(r, x, ModelVariant::kTransformerScaleInvariant);
    CHECK((p0.data - p2.data).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("standard attention probs are not scale invariant") {
  const Index d = 8, k = 4, n = 5;
  RngStream rng(33);
  AttnHeadParams p = random_head(k, d, 4);
  Tensor x = randn({d, n}, rng);
  auto [p0, o0] = attention(p, x, ModelVariant::kTransformerStandard);
  AttnHeadParams q = p;
  q.W_q.data *= 2.0;
  auto [p1, o1] = attention(q, x, ModelVariant::kTransformerStandard);
  CHECK((p0.data - p1.data).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("transformer_block with zero attention and FFN weights is the identity") {
  const Index d = 8, heads = 2, ffn = 12, n = 5;
  AttnParams p = AttnParams::shaped(d, heads, ffn);
  p.ln1_gain = Tensor::full({d}, 1.0);  // live layer norms, dead branches
  p.ln2_gain = Tensor::full({d}, 1.0);
  RngStream rng(6);
  Tensor x = randn({d, n}, rng);
  for (ModelVariant v :
       {ModelVariant::kTransformerStandard, ModelVariant::kTransformerScaleInvariant}) {
    Tensor y = transformer_block(p, x, v);
    for (Index i = 0; i < x.size(); ++i) CHECK(y.data[i] == x.data[i]);
  }
}

TEST_CASE("transformer_block preserves shape for n in {1,5,20}") {
  const Index d = 8, heads = 2, ffn = 16;
  AttnParams p = random_block(d, heads, ffn, 77);
  RngStream rng(14);
  for (Index n : {1, 5, 20}) {
    Tensor x = randn({d, n}, rng);
    for (ModelVariant v :
         {ModelVariant::kTransformerStandard, ModelVariant::kTransformerScaleInvariant}) {
      Tensor y = transformer_block(p, x, v);
      CHECK(y.shape == Shape{d, n});
      CHECK(y.all_finite());
    }
  }
}

TEST_CASE("SI block output is invariant to scaling W_Q") {
  const Index d = 8, heads = 2, ffn = 16, n = 5;
  RngStream rng(25);
  for (int trial = 0; trial < 10; ++trial) {
    AttnParams p = random_block(d, heads, ffn, 300 + trial);
    Tensor x = randn({d, n}, rng);
    Tensor y0 = transformer_block(p, x, ModelVariant::kTransformerScaleInvariant);
    AttnParams q = p;
    for (auto& head : q.heads) head.W_q.data *= 5.0;
    Tensor y1 = transformer_block(q, x, ModelVariant::kTransformerScaleInvariant);
    CHECK((y0.data - y1.data).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("attention rejects CIFG variants") {
  AttnHeadParams p = random_head(2, 4, 1);
  Tensor x = Tensor::zeros({4, 3});
  CHECK_THROWS_AS(attention(p, x, ModelVariant::kCifgStandard), Error);
}

TEST_CASE("attention and block gradients match finite differences") {
  for (ModelVariant v :
       {ModelVariant::kTransformerStandard, ModelVariant::kTransformerScaleInvariant}) {
    const Index d = 6, heads = 2, ffn = 8, n = 4;
    AttnParams p = random_block(d, heads, ffn, 40 + static_cast<int>(v));
    RngStream rng(60 + static_cast<int>(v));
    Tensor x = randn({d, n}, rng);

    Graph g;
    AttnBlockNodes w = attention_placeholders(g, p, "");
    NodeId xn = g.constant(x);
    NodeId y = transformer_block(g, w, xn, v, 1e-6);
    NodeId mix = g.constant(randn({d, n}, rng));
    g.mark_output("loss", g.sum_all(g.mul(y, mix)));

    ParamTree params;
    p.append_to(params, "");
    FdReport rep = finite_difference_check(g, "loss", {}, params, 1e-5, 1e-4);
    INFO("variant ", variant_name(v), " max rel err ", rep.max_rel_error);
    CHECK(rep.pass);
  }
}
