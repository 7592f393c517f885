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
#include "locat/optim.hpp"

#include <cmath>
#include <string>

#include "locat/errors.hpp"

namespace locat::optim {

AdamW::AdamW(std::vector<Slot> slots, AdamWConfig cfg) : slots_(std::move(slots)), cfg_(cfg) {
  if (!(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0 && cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0)) {
    throw ConfigError("AdamW: betas must lie in [0, 1)");
  }
  if (!(cfg_.eps > 0.0) || !(cfg_.weight_decay >= 0.0)) {
    throw ConfigError("AdamW: eps must be > 0 and weight_decay >= 0");
  }
  for (const auto& s : slots_) {
    if (s.value == nullptr) throw ConfigError("AdamW: null parameter slot");
    m_.emplace_back(s.value->shape(), 0.0);
    v_.emplace_back(s.value->shape(), 0.0);
  }
}

void AdamW::step(const std::vector<Tensor>& grads, double lr) {
  if (grads.size() != slots_.size()) {
    throw DimensionError("AdamW: expected " + std::to_string(slots_.size()) + " gradients, got " +
                         std::to_string(grads.size()));
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != slots_[i].value->shape()) {
      throw DimensionError("AdamW: gradient " + std::to_string(i) + " has shape " +
                           shape_string(grads[i].shape()) + ", parameter is " +
                           shape_string(slots_[i].value->shape()));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    auto theta = slots_[i].value->data();
    auto g = grads[i].data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    const double decay = slots_[i].decay ? 1.0 - lr * cfg_.weight_decay : 1.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      theta[j] *= decay;
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      theta[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.eps);
    }
  }
}

double triangular_lr(std::size_t step, std::size_t total_steps, std::size_t warmup_steps,
                     double base) {
  if (total_steps == 0 || warmup_steps >= total_steps) {
    throw ConfigError("triangular_lr: need warmup_steps < total_steps");
  }
  if (step >= total_steps) return 0.0;
  if (step < warmup_steps) {
    return base * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  return base * static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps - warmup_steps);
}

std::size_t warmup_steps(double fraction, std::size_t total_steps) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("warmup fraction must lie in [0, 1)");
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(total_steps)));
}

}  // namespace locat::optim
