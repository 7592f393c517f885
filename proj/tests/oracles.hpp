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

#include <algorithm>
#include <cmath>
#include <vector>

#include "locat/model.hpp"
#include "locat/rng.hpp"
#include "locat/tensor.hpp"

// Independent scalar-loop references.
namespace locat::testing {

/// One-head layer on a 2x2 grid with nonzero biases.
inline LayerParams single_head_layer(std::size_t c, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.image_size = 4;
  cfg.patch_size = 2;
  cfg.embed_dim = c;
  cfg.depth = 1;
  cfg.heads = 1;
  cfg.seed = seed;
  LayerParams L = init_params(cfg).layers[0];
  Rng rng(seed + 99);
  for (Tensor* t : {&L.bo, &L.locality.b_sigma, &L.locality.b_alpha})
    for (auto& v : t->data()) v = rng.normal(0.0, 0.3);
  return L;
}

inline double softplus(double x) { return x > 30 ? x : std::log1p(std::exp(x)); }

inline double width(double x, double m) { return m / (1.0 + (m - 1.0) * std::exp(-x)); }

/// Scalar loops over one head, one CLS token and a 2x2 grid.
inline Tensor oracle_attention(const Tensor& x, const LayerParams& L) {
  const std::size_t n = x.rows(), c = x.cols(), d = L.wq.cols();
  std::vector<std::vector<double>> q(n, std::vector<double>(d)), k = q, v = q;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t m = 0; m < c; ++m) {
        q[i][j] += x(i, m) * L.wq(m, j);
        k[i][j] += x(i, m) * L.wk(m, j);
        v[i][j] += x(i, m) * L.wv(m, j);
      }
  const double gx[4] = {1, 1, 2, 2}, gy[4] = {1, 2, 1, 2};
  std::vector<std::vector<double>> s(n, std::vector<double>(n, 0.0));
  for (std::size_t p = 0; p < 4; ++p) {
    double raw0 = L.locality.b_sigma[0], raw1 = L.locality.b_sigma[1], raw_a = L.locality.b_alpha[0];
    for (std::size_t j = 0; j < d; ++j) {
      raw0 += q[p + 1][j] * L.locality.w_sigma(j, 0);
      raw1 += q[p + 1][j] * L.locality.w_sigma(j, 1);
      raw_a += q[p + 1][j] * L.locality.w_alpha(j, 0);
    }
    const double s0 = width(raw0, 2.0), s1 = width(raw1, 2.0), alpha = softplus(raw_a);
    for (std::size_t t = 0; t < 4; ++t) {
      const double di = gx[p] - gx[t], dj = gy[p] - gy[t];
      s[p + 1][t + 1] = alpha * std::exp(-0.5 * (di * di / s0 + dj * dj / s1));
    }
  }
  Tensor out({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> a(n);
    double mx = -1e300;
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t m = 0; m < d; ++m) dot += q[i][m] * k[j][m];
      a[j] = dot / std::sqrt(static_cast<double>(d)) + s[i][j];
      mx = std::max(mx, a[j]);
    }
    double z = 0.0;
    for (auto& w : a) z += (w = std::exp(w - mx));
    std::vector<double> mixed(d, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t m = 0; m < d; ++m) mixed[m] += a[j] / z * v[j][m];
    for (std::size_t o = 0; o < c; ++o) {
      double y = L.bo[o];
      for (std::size_t m = 0; m < d; ++m) y += mixed[m] * L.wo(m, o);
      out(i, o) = y;
    }
  }
  return out;
}

inline double loop_cosine(const Tensor& x, std::size_t a, std::size_t b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t j = 0; j < x.cols(); ++j) {
    ab += x(a, j) * x(b, j);
    aa += x(a, j) * x(a, j);
    bb += x(b, j) * x(b, j);
  }
  return (aa == 0 || bb == 0) ? 0.0 : ab / std::sqrt(aa * bb);
}

/// Mean over patches of the mean cosine to each existing 8-neighbour.
inline double loop_locality(const Tensor& f, int h, int w) {
  double total = 0.0;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double s = 0.0;
      int n = 0;
      for (int a = i - 1; a <= i + 1; ++a)
        for (int b = j - 1; b <= j + 1; ++b)
          if ((a != i || b != j) && a >= 0 && b >= 0 && a < h && b < w) {
            s += loop_cosine(f, static_cast<std::size_t>(i * w + j), static_cast<std::size_t>(a * w + b));
            ++n;
          }
      total += n ? s / n : 0.0;
    }
  return total / (h * w);
}

inline double loop_cls_similarity(const Tensor& x) {
  double s = 0.0;
  for (std::size_t p = 1; p < x.rows(); ++p) s += loop_cosine(x, p, 0);
  return s / static_cast<double>(x.rows() - 1);
}

/// Linear interpolation between closest ranks of a sorted sample.
inline double sorted_percentile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace locat::testing
