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

#pragma once

#include <cmath>
#include <numbers>

#include "locat/tensor.hpp"

/// Dense numeric kernels.
///
/// Every kernel in `locat::nk` splits its outer loop across OpenMP threads
/// once the problem is large enough; `locat::nk::ref` holds the serial
/// versions. Both paths share the same per-element arithmetic, so results
/// are bit-identical regardless of thread count. Reductions always run in
/// ascending index order.
namespace locat::nk {

inline constexpr double kLayerNormEps = 1e-6;

// Scalar activations.

inline double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// ln(1 + e^x) without overflow.
inline double softplus(double x) noexcept {
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

/// x * Phi(x) with the exact Gaussian CDF.
inline double gelu(double x) noexcept { return 0.5 * x * std::erfc(-x * std::numbers::sqrt2 / 2.0); }

inline double gelu_derivative(double x) noexcept {
  const double cdf = 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0);
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}

// Matrix kernels (parallel).

/// a[m x k] * b[k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// a[m x k] * b[n x k]^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// a[k x m]^T * b[k x n]
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Row-wise softmax of (logits + bias), stabilised by the per-row max.
Tensor softmax_rows(const Tensor& logits);
Tensor softmax_rows(const Tensor& logits, const Tensor& bias);

/// Per-row normalisation followed by the affine map gain * xhat + shift.
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& shift,
                 double eps = kLayerNormEps);

Tensor gelu(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Elementwise helpers.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
void add_inplace(Tensor& acc, const Tensor& b);

double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
double frobenius_norm(const Tensor& a);

/// Serial reference kernels, kept for tests and benchmarks.
namespace ref {
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& logits);
Tensor softmax_rows(const Tensor& logits, const Tensor& bias);
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& shift,
                 double eps = kLayerNormEps);
Tensor gelu(const Tensor& x);
}  // namespace ref

/// Number of OpenMP threads the parallel kernels may use (1 without OpenMP).
int max_threads() noexcept;

}  // namespace locat::nk
