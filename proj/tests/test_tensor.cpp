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

#include "doctest.h"
#include "locat/errors.hpp"
#include "locat/kernels.hpp"
#include "locat/patch_grid.hpp"
#include "test_util.hpp"

using namespace locat;
using locat::testing::naive_matmul;
using locat::testing::random_tensor;

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.rank() == 2);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t(1, 2) == 1.5);
  CHECK(shape_string(t.shape()) == "[2x3]");
  CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1.0, 2.0}), DimensionError);
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS_AS(t.reshaped({4, 2}), DimensionError);
}

TEST_CASE("matmul variants agree with the triple loop") {
  const Tensor a = random_tensor({7, 5}, 1);
  const Tensor b = random_tensor({5, 9}, 2);
  const Tensor expect = naive_matmul(a, b);
  CHECK(testing::max_abs_diff(nk::matmul(a, b), expect) <= 1e-12);
  CHECK(testing::max_abs_diff(nk::matmul_nt(a, nk::transpose(b)), expect) <= 1e-12);
  CHECK(testing::max_abs_diff(nk::matmul_tn(nk::transpose(a), b), expect) <= 1e-12);
  CHECK_THROWS_AS(nk::matmul(a, a), DimensionError);
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
  // Large enough to cross the parallel threshold.
  const Tensor a = random_tensor({96, 64}, 3);
  const Tensor b = random_tensor({64, 80}, 4);
  CHECK(nk::matmul(a, b) == nk::ref::matmul(a, b));
  CHECK(nk::matmul_nt(a, a) == nk::ref::matmul_nt(a, a));
  CHECK(nk::matmul_tn(a, a) == nk::ref::matmul_tn(a, a));
  const Tensor logits = random_tensor({300, 128}, 5);
  CHECK(nk::softmax_rows(logits) == nk::ref::softmax_rows(logits));
  CHECK(nk::gelu(logits) == nk::ref::gelu(logits));
  const Tensor gain = random_tensor({128}, 6), shift = random_tensor({128}, 7);
  CHECK(nk::layernorm(logits, gain, shift) == nk::ref::layernorm(logits, gain, shift));
}

TEST_CASE("softmax rows sum to one and ignore row shifts") {
  Tensor z = random_tensor({6, 11}, 8, 10.0);
  const Tensor p = nk::softmax_rows(z);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double s = 0.0;
    for (double v : p.row(i)) {
      CHECK(v > 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
  Tensor shifted = z;
  for (std::size_t j = 0; j < z.cols(); ++j) shifted(2, j) += 1000.0;
  CHECK(testing::max_abs_diff(nk::softmax_rows(shifted), p) <= 1e-12);
  const Tensor bias = random_tensor({6, 11}, 9);
  CHECK(testing::max_abs_diff(nk::softmax_rows(z, bias), nk::softmax_rows(nk::add(z, bias))) <= 1e-15);
}

TEST_CASE("layernorm matches a direct computation") {
  const Tensor x = random_tensor({4, 10}, 10, 3.0);
  const Tensor gain = random_tensor({10}, 11), shift = random_tensor({10}, 12);
  const Tensor y = nk::layernorm(x, gain, shift);
  for (std::size_t i = 0; i < 4; ++i) {
    double mean = 0.0, var = 0.0;
    for (double v : x.row(i)) mean += v / 10.0;
    for (double v : x.row(i)) var += (v - mean) * (v - mean) / 10.0;
    for (std::size_t j = 0; j < 10; ++j) {
      const double expect = (x(i, j) - mean) / std::sqrt(var + nk::kLayerNormEps) * gain[j] + shift[j];
      CHECK(std::abs(y(i, j) - expect) <= 1e-12);
    }
  }
}

TEST_CASE("scalar activations") {
  CHECK(nk::gelu(0.0) == 0.0);
  CHECK(nk::gelu(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-14));
  CHECK(nk::gelu(-1.0) == doctest::Approx(-0.15865525393145707).epsilon(1e-13));
  CHECK(nk::softplus(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(nk::softplus(800.0) == 800.0);
  CHECK(nk::softplus(-800.0) >= 0.0);
  CHECK(nk::sigmoid(0.0) == 0.5);
  const double h = 1e-6;
  for (double x : {-2.0, -0.3, 0.0, 0.7, 3.0}) {
    const double fd = (nk::gelu(x + h) - nk::gelu(x - h)) / (2 * h);
    CHECK(std::abs(nk::gelu_derivative(x) - fd) <= 1e-8);
  }
}

TEST_CASE("patch grid geometry matches double loops") {
  const PatchGrid grid(3, 4);
  CHECK(grid.size() == 12);
  CHECK(grid.extent() == 4);
  for (std::size_t p = 0; p < 12; ++p) {
    CHECK(grid.coords()(p, 0) == static_cast<double>(p / 4 + 1));
    CHECK(grid.coords()(p, 1) == static_cast<double>(p % 4 + 1));
    for (std::size_t t = 0; t < 12; ++t) {
      const double di = static_cast<double>(p / 4) - static_cast<double>(t / 4);
      const double dj = static_cast<double>(p % 4) - static_cast<double>(t % 4);
      CHECK(grid.d(p, t, 0) == di * di);
      CHECK(grid.d(p, t, 1) == dj * dj);
      CHECK(grid.r(p, t) == std::sqrt(di * di + dj * dj));
      CHECK(grid.r(p, t) == grid.r(t, p));
    }
  }
  CHECK_THROWS_AS(PatchGrid(0, 3), DimensionError);
  CHECK(PatchGrid::get(3, 4).get() == PatchGrid::get(3, 4).get());
}

TEST_CASE("rng streams are reproducible and distinct") {
  Rng a(Rng::derive(7, 1)), b(Rng::derive(7, 1)), c(Rng::derive(7, 2));
  const double x = a.normal();
  CHECK(x == b.normal());
  CHECK(x != c.normal());
  Rng u(3);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    CHECK(u.below(5) < 5);
  }
}
