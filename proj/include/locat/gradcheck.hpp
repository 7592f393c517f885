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
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "locat/checkpoint.hpp"
#include "locat/config.hpp"
#include "locat/model.hpp"
#include "locat/tensor.hpp"

namespace locat::grad {

inline constexpr double kDefaultStep = 1e-4;
inline constexpr double kRelativeFloor = 1e-8;

/// |a - b| / max(|a|, |b|, 1e-8).
double relative_error(double a, double b);

/// Central differences (f(x + h) - f(x - h)) / 2h for every entry of x.
Tensor finite_diff(const std::function<double(const Tensor&)>& f, const Tensor& x,
                   double step = kDefaultStep);

/// Cross-entropy of one image under the model.
double model_loss(const ModelConfig& cfg, const ModelParams& params, const Tensor& image,
                  std::size_t label);

/// Analytic gradients of model_loss, named as in ModelParams::for_each.
std::vector<NamedTensor> model_gradients(const ModelConfig& cfg, const ModelParams& params,
                                         const Tensor& image, std::size_t label,
                                         double* loss = nullptr);

/// Central-difference gradients of model_loss; never touches a tape.
std::vector<NamedTensor> model_finite_diff(const ModelConfig& cfg, const ModelParams& params,
                                           const Tensor& image, std::size_t label,
                                           double step = kDefaultStep);

struct GradRow {
  std::string parameter;
  double max_rel_err = 0.0;
  double max_abs_grad = 0.0;
};

struct GradReport {
  std::vector<GradRow> rows;

  double max_rel_err() const;
  /// Header `parameter,max_rel_err,max_abs_grad`.
  void write_csv(std::ostream& out) const;
};

GradReport compare(const std::vector<NamedTensor>& analytic, const std::vector<NamedTensor>& numeric);

/// A seeded model instance with every parameter perturbed away from its
/// initial value, plus a random image and label.
struct GradcheckCase {
  ModelConfig cfg;
  ModelParams params;
  Tensor image;
  std::size_t label = 0;
};

GradcheckCase make_case(const ModelConfig& cfg, std::uint64_t seed);

GradReport gradcheck(const GradcheckCase& c, double step = kDefaultStep);

/// Gradient norms of the locality heads per layer and of the pooling input
/// tokens per spatial position.
struct FlowReport {
  std::vector<double> w_sigma;  // ||dL/dW^sigma_l||
  std::vector<double> b_sigma;
  std::vector<double> w_alpha;  // ||dL/dW^alpha_l||; 0 when absent
  std::vector<double> b_alpha;
  Tensor token_grads;           // [hw x C]
  std::vector<double> token_norms;
};

FlowReport gradient_flow_probe(const ModelConfig& cfg, const ModelParams& params,
                               const Tensor& image, std::size_t label);

}  // namespace locat::grad
