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

#include "locat/gaug.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "locat/errors.hpp"
#include "locat/kernels.hpp"

namespace locat::gaug {
namespace {

Tensor affine_rows(const Tensor& x, const Tensor& w, const Tensor& b, const char* what) {
  if (w.empty()) throw ConfigError(std::string(what) + ": head is not configured");
  if (x.rank() != 2 || x.cols() != w.rows()) {
    throw DimensionError(std::string(what) + ": input width " + std::to_string(x.cols()) +
                         " does not match head width " + std::to_string(w.rows()));
  }
  Tensor out = nk::matmul(x, w);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += b[j];
  return out;
}

void require_positive_scales(const Tensor& scale, const char* what) {
  for (double v : scale.data()) {
    if (!(v >= kMinScale)) {
      std::ostringstream os;
      os << what << ": kernel scale must be >= " << kMinScale << ", got " << v;
      throw DomainError(os.str());
    }
  }
}

Tensor duplicate_column(const Tensor& col) {
  Tensor out({col.rows(), 2});
  for (std::size_t i = 0; i < col.rows(); ++i) out(i, 0) = out(i, 1) = col[i];
  return out;
}

}  // namespace

KernelKind KernelKind::fixed_width(double sigma) {
  if (!(sigma > 0.0)) throw DomainError("fixed kernel width must be positive");
  return {Type::FixedWidth, sigma};
}

std::size_t KernelKind::width_outputs() const noexcept {
  switch (type) {
    case Type::Gaussian:
      return 2;
    case Type::FixedWidth:
      return 0;
    default:
      return 1;
  }
}

std::string to_string(const KernelKind& kind) {
  switch (kind.type) {
    case KernelKind::Type::Gaussian:
      return "gaussian";
    case KernelKind::Type::IsotropicGaussian:
      return "isotropic";
    case KernelKind::Type::FixedWidth: {
      std::ostringstream os;
      os.precision(17);
      os << "fixed:" << kind.fixed_sigma;
      return os.str();
    }
    case KernelKind::Type::Laplace:
      return "laplace";
    case KernelKind::Type::InverseDistance:
      return "inverse";
  }
  return "?";
}

std::string to_string(ScalingKind kind) {
  switch (kind) {
    case ScalingKind::Learned:
      return "learned";
    case ScalingKind::None:
      return "none";
    case ScalingKind::Auto:
      return "auto";
  }
  return "?";
}

std::string to_string(SigmaSource source) {
  return source == SigmaSource::Query ? "query" : "input";
}

KernelKind parse_kernel(std::string_view text) {
  if (text == "gaussian") return KernelKind::gaussian();
  if (text == "isotropic") return KernelKind::isotropic();
  if (text == "laplace") return KernelKind::laplace();
  if (text == "inverse") return KernelKind::inverse_distance();
  if (text == "fixed") return KernelKind::fixed_width(1.0);
  if (text.starts_with("fixed:")) {
    const std::string value(text.substr(6));
    std::size_t used = 0;
    double sigma = 0.0;
    try {
      sigma = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != value.size() || value.empty()) throw ConfigError("bad fixed kernel width: " + value);
    return KernelKind::fixed_width(sigma);
  }
  throw ConfigError("unknown kernel: " + std::string(text));
}

ScalingKind parse_scaling(std::string_view text) {
  if (text == "learned") return ScalingKind::Learned;
  if (text == "none") return ScalingKind::None;
  if (text == "auto") return ScalingKind::Auto;
  throw ConfigError("unknown scaling: " + std::string(text));
}

SigmaSource parse_sigma_source(std::string_view text) {
  if (text == "query") return SigmaSource::Query;
  if (text == "input") return SigmaSource::Input;
  throw ConfigError("unknown sigma source: " + std::string(text));
}

double bounded_width(double x, double max_width) {
  if (!(max_width >= 1.0)) throw DomainError("bounded_width: maximum must be >= 1");
  if (max_width == 1.0) return 1.0;
  const double rest = max_width - 1.0;
  // M * sigmoid(x - ln(M - 1)), arranged so that x = 0 gives M / M exactly.
  if (x >= 0.0) return max_width / (1.0 + rest * std::exp(-x));
  const double e = std::exp(x);
  // Deep in the lower tail the width is held at kMinScale.
  return std::max(max_width * e / (e + rest), kMinScale);
}

double bounded_width_derivative(double y, double max_width) {
  if (max_width == 1.0 || y <= kMinScale) return 0.0;
  return y * (1.0 - y / max_width);
}

Tensor bounded_width(const Tensor& raw, double max_width) {
  Tensor out = raw;
  for (auto& v : out.data()) v = bounded_width(v, max_width);
  return out;
}

Tensor predict_sigma(const Tensor& q_sp, const LocalityHeadParams& params, const PatchGrid& grid,
                     const KernelKind& kind, SigmaSource source, const Tensor* x_sp) {
  if (kind.type != KernelKind::Type::Gaussian && kind.type != KernelKind::Type::IsotropicGaussian) {
    throw ConfigError("predict_sigma: kernel " + to_string(kind) + " has no variance head");
  }
  const Tensor* rows = &q_sp;
  if (source == SigmaSource::Input) {
    if (!x_sp) throw ConfigError("predict_sigma: input source requires the spatial input rows");
    rows = x_sp;
  }
  if (rows->rows() != grid.size()) {
    throw DimensionError("predict_sigma: " + std::to_string(rows->rows()) +
                         " spatial rows for a grid of " + std::to_string(grid.size()));
  }
  if (params.w_sigma.cols() != kind.width_outputs()) {
    throw DimensionError("predict_sigma: width head has " + std::to_string(params.w_sigma.cols()) +
                         " outputs, kernel needs " + std::to_string(kind.width_outputs()));
  }
  Tensor sigma =
      bounded_width(affine_rows(*rows, params.w_sigma, params.b_sigma, "predict_sigma"),
                    static_cast<double>(grid.extent()));
  return kind.type == KernelKind::Type::IsotropicGaussian ? duplicate_column(sigma) : sigma;
}

Tensor predict_scale(const Tensor& source_rows, const LocalityHeadParams& params,
                     const PatchGrid& grid, const KernelKind& kind) {
  switch (kind.type) {
    case KernelKind::Type::Gaussian:
    case KernelKind::Type::IsotropicGaussian:
      return predict_sigma(source_rows, params, grid, kind);
    case KernelKind::Type::FixedWidth:
      return Tensor({grid.size(), 2}, kind.fixed_sigma * kind.fixed_sigma);
    case KernelKind::Type::Laplace: {
      Tensor gamma = affine_rows(source_rows, params.w_sigma, params.b_sigma, "predict_scale");
      for (auto& v : gamma.data()) v = nk::softplus(v) + kLaplaceFloor;
      return gamma;
    }
    case KernelKind::Type::InverseDistance:
      return bounded_width(affine_rows(source_rows, params.w_sigma, params.b_sigma, "predict_scale"),
                           static_cast<double>(grid.extent()));
  }
  throw ConfigError("predict_scale: unknown kernel");
}

Tensor kernel_matrix(const Tensor& scale, const PatchGrid& grid, const KernelKind& kind) {
  const std::size_t n = grid.size();
  Tensor sigma;
  const Tensor* s = &scale;
  if (kind.type == KernelKind::Type::FixedWidth) {
    if (!(kind.fixed_sigma > 0.0)) throw DomainError("kernel_matrix: fixed width must be positive");
    sigma = Tensor({n, 2}, kind.fixed_sigma * kind.fixed_sigma);
    s = &sigma;
  } else if (kind.type == KernelKind::Type::IsotropicGaussian && scale.cols() == 1) {
    sigma = duplicate_column(scale);
    s = &sigma;
  }
  const bool gaussian_family = kind.type == KernelKind::Type::Gaussian ||
                               kind.type == KernelKind::Type::IsotropicGaussian ||
                               kind.type == KernelKind::Type::FixedWidth;
  const std::size_t expected_cols = gaussian_family ? 2 : 1;
  if (s->rank() != 2 || s->rows() != n || s->cols() != expected_cols) {
    throw DimensionError("kernel_matrix: scale must be [" + std::to_string(n) + "x" +
                         std::to_string(expected_cols) + "], got " + shape_string(s->shape()));
  }
  require_positive_scales(*s, "kernel_matrix");

  Tensor g({n, n});
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n * n >= 4096)
  for (std::ptrdiff_t ip = 0; ip < count; ++ip) {
    const auto p = static_cast<std::size_t>(ip);
    for (std::size_t t = 0; t < n; ++t) {
      double v = 0.0;
      switch (kind.type) {
        case KernelKind::Type::Gaussian:
        case KernelKind::Type::IsotropicGaussian:
        case KernelKind::Type::FixedWidth:
          v = std::exp(-0.5 * (grid.d(p, t, 0) / (*s)(p, 0) + grid.d(p, t, 1) / (*s)(p, 1)));
          break;
        case KernelKind::Type::Laplace:
          v = std::exp(-(*s)(p, 0) * grid.r(p, t));
          break;
        case KernelKind::Type::InverseDistance:
          v = 1.0 / (1.0 + grid.r(p, t) / (*s)(p, 0));
          break;
      }
      g(p, t) = v;
    }
  }
  return g;
}

Tensor predict_alpha(const Tensor& q_sp, const LocalityHeadParams& params) {
  Tensor raw = affine_rows(q_sp, params.w_alpha, params.b_alpha, "predict_alpha");
  for (auto& v : raw.data()) v = nk::softplus(v);
  return raw.reshaped({raw.rows()});
}

Tensor auto_alpha_bar(const Tensor& q, const Tensor& k) {
  if (q.rank() != 2 || q.shape() != k.shape() || q.rows() < 2) {
    throw DimensionError("auto_alpha: q and k must share a [(1+hw) x d] shape with hw >= 1");
  }
  const std::size_t n = q.rows();
  const std::size_t hw = n - 1;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  std::vector<double> r(n), u(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0, sk = 0.0;
    for (std::size_t c = 0; c < q.cols(); ++c) {
      sq += q(i, c) * q(i, c);
      sk += k(i, c) * k(i, c);
    }
    r[i] = std::sqrt(sq);
    u[i] = std::sqrt(sk);
  }
  Tensor bar({hw});
  for (std::size_t i = 1; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 1; j < n; ++j) s += r[i] * u[j] * inv_sqrt_d;
    bar[i - 1] = s / static_cast<double>(hw);
  }
  return bar;
}

Tensor auto_alpha(const Tensor& q, const Tensor& k, const Tensor& kernel) {
  return supplement_matrix(auto_alpha_bar(q, k), kernel);
}

Tensor supplement_matrix(const Tensor& alpha, const Tensor& kernel) {
  const std::size_t n = kernel.rows();
  if (kernel.rank() != 2 || kernel.cols() != n || alpha.size() != n) {
    throw DimensionError("supplement_matrix: alpha " + shape_string(alpha.shape()) +
                         " incompatible with kernel " + shape_string(kernel.shape()));
  }
  Tensor s({n + 1, n + 1});
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t t = 0; t < n; ++t) s(p + 1, t + 1) = alpha[p] * kernel(p, t);
  return s;
}

Tensor rescale_variance(const Tensor& sigma, const PatchGrid& trained, const PatchGrid& target) {
  if (sigma.rank() != 2 || sigma.cols() != 2) {
    throw DimensionError("rescale_variance: expected [hw x 2] variances");
  }
  const double ratio_h = static_cast<double>(target.h()) / static_cast<double>(trained.h());
  const double ratio_w = static_cast<double>(target.w()) / static_cast<double>(trained.w());
  Tensor out = sigma;
  for (std::size_t p = 0; p < out.rows(); ++p) {
    out(p, 0) *= ratio_h;
    out(p, 1) *= ratio_w;
  }
  return out;
}

}  // namespace locat::gaug
