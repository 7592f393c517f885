// Copyright 2026 The LocAt Authors. All Rights Reserved.
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

#include <cmath>
#include <limits>

#include "doctest.h"
#include "locat/autograd.hpp"
#include "locat/errors.hpp"
#include "locat/gaug.hpp"
#include "locat/gradcheck.hpp"
#include "locat/kernels.hpp"
#include "test_util.hpp"

using namespace locat;
using locat::testing::random_tensor;

namespace {

double max_rel(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, grad::relative_error(a[i], b[i]));
  return m;
}

}  // namespace

TEST_CASE("finite differences of a quadratic") {
  const Tensor theta({1}, 3.0);
  const Tensor g = grad::finite_diff([](const Tensor& t) { return 0.5 * t[0] * t[0]; }, theta, 1e-4);
  CHECK(std::abs(g[0] - 3.0) <= 1e-8);
  CHECK_THROWS_AS(grad::finite_diff([](const Tensor&) { return 0.0; }, theta, 0.0), DomainError);
}

TEST_CASE("constant loss gives zero gradients") {
  const Tensor w = random_tensor({3, 2}, 1);
  ag::Graph g;
  ag::Var wv = g.param(w);
  ag::Var loss = ag::sum(g.constant(Tensor({1, 1}, 4.0)));
  g.backward(loss);
  CHECK(g.grad_of(w) == Tensor({3, 2}, 0.0));
  CHECK(wv.valid());
}

TEST_CASE("sum of a linear map has the input as gradient") {
  const Tensor x = random_tensor({1, 4}, 2);
  const Tensor w = random_tensor({4, 3}, 3);
  ag::Graph g;
  ag::Var out = ag::matmul(g.constant(x), g.param(w));
  g.backward(ag::sum(out));
  const Tensor gw = g.grad_of(w);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(gw(i, j) == x(0, i));
}

TEST_CASE("softmax rows backward matches finite differences") {
  const Tensor z = random_tensor({4, 6}, 4);
  const Tensor bias = random_tensor({4, 6}, 5);
  const Tensor weights = random_tensor({4, 6}, 6);
  auto f = [&](const Tensor& t) {
    ag::Graph g(false);
    return ag::dot(ag::softmax_rows(g.constant(t), g.constant(bias)), weights).value()[0];
  };
  ag::Graph g;
  ag::Var zv = g.param(z), bv = g.param(bias);
  g.backward(ag::dot(ag::softmax_rows(zv, bv), weights));
  CHECK(max_rel(g.grad_of(z), grad::finite_diff(f, z)) <= 1e-6);
  // The bias enters additively, so its gradient equals the logit gradient.
  CHECK(testing::max_abs_diff(g.grad_of(bias), g.grad_of(z)) <= 1e-15);
}

TEST_CASE("gaussian kernel backward matches finite differences") {
  const auto grid = PatchGrid::get(3, 3);
  Tensor sigma({9, 2});
  Rng rng(7);
  for (auto& v : sigma.data()) v = rng.uniform(0.5, 3.0);
  const Tensor weights = random_tensor({9, 9}, 8);
  auto f = [&](const Tensor& s) {
    ag::Graph fg(false);
    return ag::dot(ag::gaussian_kernel(fg.constant(s), *grid), weights).value()[0];
  };
  ag::Graph g;
  ag::Var sv = g.param(sigma);
  g.backward(ag::dot(ag::gaussian_kernel(sv, *grid), weights));
  CHECK(max_rel(g.grad_of(sigma), grad::finite_diff(f, sigma)) <= 1e-5);
}

TEST_CASE("primitive gradients match finite differences") {
  const auto grid = PatchGrid::get(2, 3);
  const Tensor x = random_tensor({7, 4}, 9);
  const Tensor gain = random_tensor({4}, 10), shift = random_tensor({4}, 11);
  const Tensor weights = random_tensor({7, 4}, 12);

  struct Case {
    const char* name;
    std::function<ag::Var(ag::Var)> op;
    Tensor input;
    Tensor weights;
  };
  Tensor pos({6, 1});
  Rng rng(13);
  for (auto& v : pos.data()) v = rng.uniform(0.5, 2.0);
  const std::vector<Case> cases = {
      {"layernorm", [&](ag::Var v) { return ag::layernorm(v, v.graph->constant(gain), v.graph->constant(shift)); }, x, weights},
      {"gelu", [](ag::Var v) { return ag::gelu(v); }, x, weights},
      {"softplus", [](ag::Var v) { return ag::softplus(v); }, x, weights},
      {"sigmoid", [](ag::Var v) { return ag::sigmoid(v); }, x, weights},
      {"bounded_width", [](ag::Var v) { return ag::bounded_width(v, 3.0); }, x, weights},
      {"laplace", [&](ag::Var v) { return ag::laplace_kernel(v, *grid); }, pos, random_tensor({6, 6}, 14)},
      {"inverse", [&](ag::Var v) { return ag::inverse_distance_kernel(v, *grid); }, pos, random_tensor({6, 6}, 15)},
      {"mean_rows", [](ag::Var v) { return ag::mean_rows(v, 1, 7); }, x, random_tensor({1, 4}, 16)},
      {"auto_alpha_bar", [&](ag::Var v) { return ag::auto_alpha_bar(v, v.graph->constant(random_tensor({7, 4}, 17))); }, x, random_tensor({6, 1}, 18)},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    auto f = [&](const Tensor& t) {
      ag::Graph g(false);
      return ag::dot(c.op(g.constant(t)), c.weights).value()[0];
    };
    ag::Graph g;
    ag::Var v = g.param(c.input);
    g.backward(ag::dot(c.op(v), c.weights));
    CHECK(max_rel(g.grad_of(c.input), grad::finite_diff(f, c.input, 1e-5)) <= 1e-5);
  }
}

TEST_CASE("backward replay is bit-stable") {
  const auto c = grad::make_case(gradcheck_config(), 3);
  const auto a = grad::model_gradients(c.cfg, c.params, c.image, c.label);
  const auto b = grad::model_gradients(c.cfg, c.params, c.image, c.label);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].value == b[i].value);
}

TEST_CASE("non-finite values are reported with the primitive name") {
  ag::Graph g;
  const Tensor x({1, 1}, 1e200);
  ag::Var v = g.param(x);
  CHECK_THROWS_WITH_AS(ag::matmul(v, v), doctest::Contains("matmul"), NumericError);
  const Tensor bad({1, 1}, std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(g.param(bad), NumericError);
}

TEST_CASE("default model gradients match finite differences") {
  const auto report = grad::gradcheck(grad::make_case(gradcheck_config(), 1));
  for (const auto& row : report.rows) {
    CAPTURE(row.parameter);
    CHECK(row.max_rel_err <= 1e-4);
  }
}

TEST_CASE("class-token pooling cuts the last layer's locality heads off") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ModelConfig cfg = gradcheck_config();
    cfg.pooling = prr::PoolingKind::cls_only();
    const auto c = grad::make_case(cfg, seed);
    const auto flow = grad::gradient_flow_probe(c.cfg, c.params, c.image, c.label);
    CHECK(flow.w_sigma.back() == 0.0);
    CHECK(flow.b_sigma.back() == 0.0);
    CHECK(flow.w_alpha.back() == 0.0);
    CHECK(flow.b_alpha.back() == 0.0);
    CHECK(flow.w_sigma.front() > 0.0);
  }
}

TEST_CASE("refinement pooling reaches the last layer's locality heads") {
  const auto c = grad::make_case(gradcheck_config(), 0);
  const auto flow = grad::gradient_flow_probe(c.cfg, c.params, c.image, c.label);
  CHECK(flow.w_sigma.back() > 1e-12);
  CHECK(flow.w_alpha.back() > 1e-12);
}

TEST_CASE("average pooling spreads gradient uniformly over positions") {
  ModelConfig cfg = gradcheck_config();
  cfg.pooling = prr::PoolingKind::gap();
  const auto c = grad::make_case(cfg, 4);
  const auto flow = grad::gradient_flow_probe(c.cfg, c.params, c.image, c.label);
  for (std::size_t p = 1; p < flow.token_grads.rows(); ++p)
    for (std::size_t j = 0; j < flow.token_grads.cols(); ++j)
      CHECK(flow.token_grads(p, j) == flow.token_grads(0, j));
  CHECK(flow.token_norms.front() > 0.0);
}
