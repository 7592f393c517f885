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
#include <memory>

#include "locat/tensor.hpp"

namespace locat {

/// Coordinates of an h x w patch grid and the pairwise geometry between
/// patches. Token p = (i-1)*w + (j-1) sits at 1-based coordinate (i, j).
///
/// Immutable after construction. Use PatchGrid::get() to share one cached
/// instance per (h, w).
class PatchGrid {
 public:
  PatchGrid(std::size_t h, std::size_t w);

  static std::shared_ptr<const PatchGrid> get(std::size_t h, std::size_t w);

  std::size_t h() const noexcept { return h_; }
  std::size_t w() const noexcept { return w_; }
  std::size_t size() const noexcept { return h_ * w_; }
  /// max(h, w), the upper bound for predicted widths.
  std::size_t extent() const noexcept { return h_ > w_ ? h_ : w_; }

  /// [hw x 2] coordinates, row-major token order.
  const Tensor& coords() const noexcept { return coords_; }
  /// [hw x hw x 2] squared coordinate differences.
  const Tensor& sq_diff() const noexcept { return sq_diff_; }
  /// [hw x hw] Euclidean distances.
  const Tensor& distance() const noexcept { return distance_; }

  double d(std::size_t p, std::size_t t, std::size_t axis) const noexcept {
    return sq_diff_[(p * size() + t) * 2 + axis];
  }
  double r(std::size_t p, std::size_t t) const noexcept { return distance_(p, t); }

  std::size_t row_of(std::size_t p) const noexcept { return p / w_; }
  std::size_t col_of(std::size_t p) const noexcept { return p % w_; }

 private:
  std::size_t h_;
  std::size_t w_;
  Tensor coords_;
  Tensor sq_diff_;
  Tensor distance_;
};

}  // namespace locat
