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

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "locat/autograd.hpp"
#include "locat/tensor.hpp"

/// Patch representation refinement and the pooling heads it competes with.
namespace locat::prr {

struct PoolingKind {
  enum class Type { ClsOnly, Gap, Prr };

  Type type = Type::Prr;
  /// PRR head count; 0 means "use the backbone's head count".
  std::size_t heads = 0;

  static PoolingKind cls_only() { return {Type::ClsOnly, 0}; }
  static PoolingKind gap() { return {Type::Gap, 0}; }
  static PoolingKind refine(std::size_t heads = 0) { return {Type::Prr, heads}; }

  friend bool operator==(const PoolingKind&, const PoolingKind&) = default;
};

std::string to_string(const PoolingKind& kind);
/// Accepts cls | gap | prr.
PoolingKind parse_pooling(std::string_view text);

/// Parameter-free multi-head self-attention of the token sequence with
/// itself: per head, softmax(x_i x_i^T / sqrt(d)) x_i.
Tensor prr_refine(const Tensor& x, std::size_t heads);

/// Pooled [C] vector: CLS row, spatial mean, or CLS row after refinement.
Tensor pool(const Tensor& x, const PoolingKind& kind, std::size_t heads);

/// Differentiable refinement; per-head attention maps are appended to
/// `attention` when given.
ag::Var prr_refine(ag::Var x, std::size_t heads, std::vector<Tensor>* attention = nullptr);
/// Differentiable pooling; returns [1 x C].
ag::Var pool(ag::Var x, const PoolingKind& kind, std::size_t heads,
             std::vector<Tensor>* attention = nullptr);

}  // namespace locat::prr
