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

#include "locat/kernels.hpp"

#include <algorithm>
#include <cstddef>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "locat/errors.hpp"

namespace locat::nk {
namespace {

// Below this many scalar operations the fork/join cost dominates.
constexpr std::size_t kParallelWork = 1u << 15;

template <class Body>
void for_rows(std::size_t n, std::size_t work, bool parallel, Body&& body) {
#ifdef _OPENMP
  if (parallel && work >= kParallelWork && !omp_in_parallel() && omp_get_max_threads() > 1) {
    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
    return;
  }
#else
  (void)work;
  (void)parallel;
#endif
  for (std::size_t i = 0; i < n; ++i) body(i);
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(what) + ": expected a matrix, got " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

Tensor matmul_impl(const Tensor& a, const Tensor& b, bool parallel) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ " + shape_string(a.shape()) + " * " +
                         shape_string(b.shape()));
  }
  Tensor out({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for_rows(m, m * n * k, parallel, [&](std::size_t i) {
    double* orow = po + i * n;
    // i-p-j order: each output element accumulates in ascending p.
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  });
  return out;
}

Tensor matmul_nt_impl(const Tensor& a, const Tensor& b, bool parallel) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt: inner dimensions differ " + shape_string(a.shape()) + " * " +
                         shape_string(b.shape()) + "^T");
  }
  Tensor out({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for_rows(m, m * n * k, parallel, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += pa[i * k + p] * pb[j * k + p];
      po[i * n + j] = s;
    }
  });
  return out;
}

Tensor matmul_tn_impl(const Tensor& a, const Tensor& b, bool parallel) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul_tn: inner dimensions differ " + shape_string(a.shape()) + "^T * " +
                         shape_string(b.shape()));
  }
  Tensor out({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for_rows(m, m * n * k, parallel, [&](std::size_t i) {
    double* orow = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[p * m + i];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  });
  return out;
}

Tensor softmax_impl(const Tensor& logits, const Tensor* bias, bool parallel) {
  require_matrix(logits, "softmax_rows");
  if (bias) require_same_shape(logits, *bias, "softmax_rows bias");
  const std::size_t m = logits.rows(), n = logits.cols();
  Tensor out({m, n});
  for_rows(m, m * n * 8, parallel, [&](std::size_t i) {
    auto z = logits.row(i);
    auto o = out.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = bias ? z[j] + (*bias)(i, j) : z[j];
      mx = std::max(mx, o[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(o[j] - mx);
      sum += o[j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < n; ++j) o[j] *= inv;
  });
  return out;
}

Tensor layernorm_impl(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps,
                      bool parallel) {
  require_matrix(x, "layernorm");
  const std::size_t m = x.rows(), c = x.cols();
  if (gain.size() != c || shift.size() != c) {
    throw DimensionError("layernorm: affine parameters must have " + std::to_string(c) + " entries");
  }
  if (!(eps > 0.0)) throw DomainError("layernorm: eps must be positive");
  Tensor out({m, c});
  for_rows(m, m * c * 6, parallel, [&](std::size_t i) {
    auto xr = x.row(i);
    auto o = out.row(i);
    double mean = 0.0;
    for (double v : xr) mean += v;
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (double v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) o[j] = (xr[j] - mean) * inv * gain[j] + shift[j];
  });
  return out;
}

template <class F>
Tensor map_impl(const Tensor& x, F f, bool parallel) {
  Tensor out = x;
  auto d = out.data();
  const std::size_t n = d.size();
  constexpr std::size_t kChunk = 256;
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  for_rows(chunks, n * 16, parallel, [&](std::size_t c) {
    const std::size_t end = std::min(n, (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) d[i] = f(d[i]);
  });
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, true); }
Tensor matmul_nt(const Tensor& a, const Tensor& b) { return matmul_nt_impl(a, b, true); }
Tensor matmul_tn(const Tensor& a, const Tensor& b) { return matmul_tn_impl(a, b, true); }

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor softmax_rows(const Tensor& logits) { return softmax_impl(logits, nullptr, true); }
Tensor softmax_rows(const Tensor& logits, const Tensor& bias) {
  return softmax_impl(logits, &bias, true);
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps) {
  return layernorm_impl(x, gain, shift, eps, true);
}

Tensor gelu(const Tensor& x) { return map_impl(x, [](double v) { return gelu(v); }, true); }
Tensor softplus(const Tensor& x) {
  return map_impl(x, [](double v) { return softplus(v); }, true);
}
Tensor sigmoid(const Tensor& x) { return map_impl(x, [](double v) { return sigmoid(v); }, true); }

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  add_inplace(out, b);
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (auto& v : out.data()) v *= s;
  return out;
}

void add_inplace(Tensor& acc, const Tensor& b) {
  if (acc.size() != b.size()) {
    throw DimensionError("add: shape mismatch " + shape_string(acc.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += b[i];
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double frobenius_norm(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

int max_threads() noexcept {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace ref {
Tensor matmul(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, false); }
Tensor matmul_nt(const Tensor& a, const Tensor& b) { return matmul_nt_impl(a, b, false); }
Tensor matmul_tn(const Tensor& a, const Tensor& b) { return matmul_tn_impl(a, b, false); }
Tensor softmax_rows(const Tensor& logits) { return softmax_impl(logits, nullptr, false); }
Tensor softmax_rows(const Tensor& logits, const Tensor& bias) {
  return softmax_impl(logits, &bias, false);
}
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps) {
  return layernorm_impl(x, gain, shift, eps, false);
}
Tensor gelu(const Tensor& x) { return map_impl(x, [](double v) { return nk::gelu(v); }, false); }
}  // namespace ref

}  // namespace locat::nk
