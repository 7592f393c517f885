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
#include <vector>

#include "locat/tensor.hpp"

namespace locat::optim {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

/// One parameter tensor under optimisation.
struct Slot {
  Tensor* value = nullptr;
  bool decay = true;
};

/// AdamW with bias-corrected moments. Weight decay multiplies the weights
/// by (1 - lr * weight_decay) before the Adam step and never enters the
/// moment estimates.
class AdamW {
 public:
  AdamW(std::vector<Slot> slots, AdamWConfig cfg = {});

  /// grads[i] must match the shape of slot i.
  void step(const std::vector<Tensor>& grads, double lr);

  std::size_t steps() const noexcept { return t_; }
  const Tensor& first_moment(std::size_t i) const { return m_.at(i); }
  const Tensor& second_moment(std::size_t i) const { return v_.at(i); }
  const AdamWConfig& config() const noexcept { return cfg_; }

 private:
  std::vector<Slot> slots_;
  AdamWConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

/// Piecewise-linear schedule: 0 at step 0, base at step `warmup_steps`,
/// 0 at step `total_steps`.
double triangular_lr(std::size_t step, std::size_t total_steps, std::size_t warmup_steps,
                     double base);

/// floor(fraction * total_steps).
std::size_t warmup_steps(double fraction, std::size_t total_steps);

}  // namespace locat::optim
