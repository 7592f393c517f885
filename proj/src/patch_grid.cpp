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

#include "locat/patch_grid.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <utility>

#include "locat/errors.hpp"

namespace locat {
namespace {

std::size_t checked_area(std::size_t h, std::size_t w) {
  if (h == 0 || w == 0) {
    throw DimensionError("patch grid must be at least 1x1, got " + std::to_string(h) + "x" +
                         std::to_string(w));
  }
  return h * w;
}

}  // namespace

PatchGrid::PatchGrid(std::size_t h, std::size_t w)
    : h_(h),
      w_(w),
      coords_({checked_area(h, w), 2}),
      sq_diff_({h * w, h * w, 2}),
      distance_({h * w, h * w}) {
  const std::size_t n = size();
  for (std::size_t p = 0; p < n; ++p) {
    coords_(p, 0) = static_cast<double>(p / w_ + 1);
    coords_(p, 1) = static_cast<double>(p % w_ + 1);
  }
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t t = 0; t < n; ++t) {
      const double di = coords_(p, 0) - coords_(t, 0);
      const double dj = coords_(p, 1) - coords_(t, 1);
      sq_diff_[(p * n + t) * 2] = di * di;
      sq_diff_[(p * n + t) * 2 + 1] = dj * dj;
      distance_(p, t) = std::sqrt(di * di + dj * dj);
    }
  }
}

std::shared_ptr<const PatchGrid> PatchGrid::get(std::size_t h, std::size_t w) {
  static std::mutex mu;
  static std::map<std::pair<std::size_t, std::size_t>, std::shared_ptr<const PatchGrid>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[{h, w}];
  if (!slot) slot = std::make_shared<const PatchGrid>(h, w);
  return slot;
}

}  // namespace locat
