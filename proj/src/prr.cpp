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

#include "locat/prr.hpp"

#include <cmath>

#include "locat/errors.hpp"
#include "locat/kernels.hpp"

namespace locat::prr {
namespace {

std::size_t head_width(std::size_t channels, std::size_t heads) {
  if (heads == 0 || channels % heads != 0) {
    throw ConfigError("prr: " + std::to_string(heads) + " heads do not divide width " +
                      std::to_string(channels));
  }
  return channels / heads;
}

}  // namespace

std::string to_string(const PoolingKind& kind) {
  switch (kind.type) {
    case PoolingKind::Type::ClsOnly:
      return "cls";
    case PoolingKind::Type::Gap:
      return "gap";
    case PoolingKind::Type::Prr:
      return "prr";
  }
  return "?";
}

PoolingKind parse_pooling(std::string_view text) {
  if (text == "cls") return PoolingKind::cls_only();
  if (text == "gap") return PoolingKind::gap();
  if (text == "prr") return PoolingKind::refine();
  throw ConfigError("unknown pooling: " + std::string(text));
}

Tensor prr_refine(const Tensor& x, std::size_t heads) {
  if (x.rank() != 2) throw DimensionError("prr_refine: expected a token matrix");
  const std::size_t n = x.rows(), c = x.cols();
  const std::size_t d = head_width(c, heads);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor out({n, c});
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor xi({n, d});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) xi(i, j) = x(i, h * d + j);
    const Tensor attn = nk::softmax_rows(nk::scale(nk::matmul_nt(xi, xi), inv_sqrt_d));
    const Tensor refined = nk::matmul(attn, xi);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) out(i, h * d + j) = refined(i, j);
  }
  return out;
}

Tensor pool(const Tensor& x, const PoolingKind& kind, std::size_t heads) {
  if (x.rank() != 2 || x.rows() < 2) throw DimensionError("pool: expected [(1+hw) x C] tokens");
  const std::size_t c = x.cols();
  switch (kind.type) {
    case PoolingKind::Type::ClsOnly:
      return Tensor({c}, std::vector<double>(x.row(0).begin(), x.row(0).end()));
    case PoolingKind::Type::Gap: {
      Tensor out({c});
      const double inv = 1.0 / static_cast<double>(x.rows() - 1);
      for (std::size_t j = 0; j < c; ++j) {
        double s = 0.0;
        for (std::size_t i = 1; i < x.rows(); ++i) s += x(i, j);
        out[j] = s * inv;
      }
      return out;
    }
    case PoolingKind::Type::Prr: {
      const Tensor refined = prr_refine(x, kind.heads ? kind.heads : heads);
      return Tensor({c}, std::vector<double>(refined.row(0).begin(), refined.row(0).end()));
    }
  }
  throw ConfigError("pool: unknown pooling");
}

ag::Var prr_refine(ag::Var x, std::size_t heads, std::vector<Tensor>* attention) {
  const std::size_t c = x.value().cols();
  const std::size_t d = head_width(c, heads);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<ag::Var> parts;
  parts.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    ag::Var xi = heads == 1 ? x : ag::slice_cols(x, h * d, (h + 1) * d);
    ag::Var attn = ag::softmax_rows(ag::scale(ag::matmul_nt(xi, xi), inv_sqrt_d));
    if (attention) attention->push_back(attn.value());
    parts.push_back(ag::matmul(attn, xi));
  }
  return heads == 1 ? parts.front() : ag::concat_cols(parts);
}

ag::Var pool(ag::Var x, const PoolingKind& kind, std::size_t heads,
             std::vector<Tensor>* attention) {
  const std::size_t n = x.value().rows();
  if (n < 2) throw DimensionError("pool: expected [(1+hw) x C] tokens");
  switch (kind.type) {
    case PoolingKind::Type::ClsOnly:
      return ag::row(x, 0);
    case PoolingKind::Type::Gap:
      return ag::mean_rows(x, 1, n);
    case PoolingKind::Type::Prr:
      return ag::row(prr_refine(x, kind.heads ? kind.heads : heads, attention), 0);
  }
  throw ConfigError("pool: unknown pooling");
}

}  // namespace locat::prr
