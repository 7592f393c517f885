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

#include "locat/patch_grid.hpp"
#include "locat/tensor.hpp"

/// Gaussian-augmented attention: a per-query locality kernel added to the
/// attention logits of the spatial tokens.
namespace locat::gaug {

/// Shape of the locality kernel G.
struct KernelKind {
  enum class Type { Gaussian, IsotropicGaussian, FixedWidth, Laplace, InverseDistance };

  Type type = Type::Gaussian;
  /// Standard deviation used by FixedWidth; the variance on both axes is sigma^2.
  double fixed_sigma = 1.0;

  static KernelKind gaussian() { return {Type::Gaussian, 1.0}; }
  static KernelKind isotropic() { return {Type::IsotropicGaussian, 1.0}; }
  static KernelKind fixed_width(double sigma);
  static KernelKind laplace() { return {Type::Laplace, 1.0}; }
  static KernelKind inverse_distance() { return {Type::InverseDistance, 1.0}; }

  /// Number of columns of the learned width head (0 for FixedWidth).
  std::size_t width_outputs() const noexcept;

  friend bool operator==(const KernelKind&, const KernelKind&) = default;
};

/// How rows of the kernel are scaled before being added to the logits.
enum class ScalingKind { Learned, None, Auto };

/// Which activations feed the width head.
enum class SigmaSource { Query, Input };

std::string to_string(const KernelKind& kind);
std::string to_string(ScalingKind kind);
std::string to_string(SigmaSource source);
/// Accepts gaussian | isotropic | fixed[:sigma] | laplace | inverse.
KernelKind parse_kernel(std::string_view text);
/// Accepts learned | none | auto.
ScalingKind parse_scaling(std::string_view text);
/// Accepts query | input.
SigmaSource parse_sigma_source(std::string_view text);

/// Learnable width and scaling heads of one encoder layer, shared by all of
/// its attention heads. `w_sigma` predicts Sigma for the Gaussian kernels,
/// gamma for Laplace and lambda for InverseDistance. Absent heads are empty.
struct LocalityHeadParams {
  Tensor w_sigma;  // [in x width_outputs]
  Tensor b_sigma;  // [width_outputs]
  Tensor w_alpha;  // [d x 1]
  Tensor b_alpha;  // [1]

  std::size_t parameter_count() const noexcept {
    return w_sigma.size() + b_sigma.size() + w_alpha.size() + b_alpha.size();
  }
};

/// Everything the locality path computed for one head, kept for analysis.
struct GaugEval {
  Tensor sigma;         // [hw x 2] variances (Gaussian kinds) or [hw x 1] gamma / lambda
  Tensor alpha;         // [hw] row scales actually applied to G
  Tensor kernel;        // [hw x hw]
  Tensor supplement;    // [(1+hw) x (1+hw)]
  Tensor attn_weights;  // [(1+hw) x (1+hw)], post-softmax
};

/// Lower bound applied to predicted scales before they divide anything.
inline constexpr double kMinScale = 1e-12;
/// Floor added to the predicted Laplace rate.
inline constexpr double kLaplaceFloor = 1e-3;

/// Sigmoid scaled to (0, M) and shifted so f(0) = 1; identically 1 for M = 1.
/// Never below kMinScale.
double bounded_width(double x, double max_width);
/// df/dx expressed through the output value y = f(x).
double bounded_width_derivative(double y, double max_width);
Tensor bounded_width(const Tensor& raw, double max_width);

/// Predicted variances [hw x 2] for the Gaussian kinds, from q_sp (Query)
/// or from the normalised spatial input x_sp (Input). The isotropic head
/// predicts one column which is duplicated.
Tensor predict_sigma(const Tensor& q_sp, const LocalityHeadParams& params, const PatchGrid& grid,
                     const KernelKind& kind = KernelKind::gaussian(),
                     SigmaSource source = SigmaSource::Query, const Tensor* x_sp = nullptr);

/// Kernel scale for any kind: Sigma [hw x 2] for Gaussian kinds (constant
/// for FixedWidth), gamma [hw x 1] for Laplace, lambda [hw x 1] for
/// InverseDistance.
Tensor predict_scale(const Tensor& source_rows, const LocalityHeadParams& params,
                     const PatchGrid& grid, const KernelKind& kind);

/// G[hw x hw] from per-patch scales. Gaussian / IsotropicGaussian /
/// FixedWidth take variances ([hw x 2], or [hw x 1] for isotropic);
/// Laplace takes gamma and InverseDistance takes lambda ([hw x 1]).
/// FixedWidth ignores `scale`.
Tensor kernel_matrix(const Tensor& scale, const PatchGrid& grid, const KernelKind& kind);

/// alpha = softplus(q_sp W^alpha + b), one entry per spatial token.
Tensor predict_alpha(const Tensor& q_sp, const LocalityHeadParams& params);

/// Spatial part of the parameter-free row scale: row mean over spatial
/// columns of r u^T / sqrt(d). Returns [hw].
Tensor auto_alpha_bar(const Tensor& q, const Tensor& k);
/// diag([0, alpha_bar]) applied to G and padded; [(1+hw) x (1+hw)].
Tensor auto_alpha(const Tensor& q, const Tensor& k, const Tensor& kernel);

/// [[0, 0^T], [0, diag(alpha) G]]
Tensor supplement_matrix(const Tensor& alpha, const Tensor& kernel);

/// Rescales variances predicted on `trained` for use on `target`, per axis
/// by the ratio of grid extents.
Tensor rescale_variance(const Tensor& sigma, const PatchGrid& trained, const PatchGrid& target);

}  // namespace locat::gaug
