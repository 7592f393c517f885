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
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "locat/gaug.hpp"
#include "locat/model.hpp"
#include "locat/patch_grid.hpp"
#include "locat/tensor.hpp"

namespace locat::analytics {

/// Cosine similarity; 0 when either vector has zero norm.
double cosine(std::span<const double> a, std::span<const double> b);

/// Mean over patches of the average cosine similarity between a patch and
/// the neighbours that exist in its 3x3 window. `features` is [hw x C].
double locality_score(const Tensor& features, const PatchGrid& grid);

/// Mean cosine similarity between each spatial row and row 0 of
/// [(1+hw) x C] tokens.
double cls_similarity(const Tensor& x);

/// Percentile of sorted values by linear interpolation between closest
/// ranks; q in [0, 1].
double percentile(std::span<const double> sorted, double q);

struct SigmaSummary {
  double mean = 0.0;
  double median = 0.0;
  double p10 = 0.0;
  double p30 = 0.0;
  double p70 = 0.0;
  double p90 = 0.0;
};

SigmaSummary summarize(std::vector<double> values);

struct LayerStats {
  std::size_t layer = 0;
  double locality_score = 0.0;
  double cls_similarity = 0.0;
  /// Standard deviations sqrt(Sigma); absent for kernels without variances.
  std::optional<SigmaSummary> sigma;
};

/// `traces[l]` holds every head evaluation of layer l (across heads and
/// images). Only Gaussian-family evaluations ([hw x 2] variances) count.
std::vector<LayerStats> sigma_statistics(const std::vector<std::vector<gaug::GaugEval>>& traces);

/// Locality and CLS similarity of every layer output x^(l), averaged over
/// images, plus sigma statistics pooled over heads and images.
std::vector<LayerStats> layer_statistics(std::span<const Trace> traces, const PatchGrid& grid);

/// CSV with header `layer,metric,value`, one row per statistic.
void write_stats_csv(std::ostream& out, std::span<const LayerStats> stats);

/// Selects an attention map: an encoder layer or the refinement step.
struct AttentionSource {
  bool refinement = false;
  std::size_t layer = 0;

  /// Accepts a layer index or "prr".
  static AttentionSource parse(const std::string& text);
};

/// Attention of one token over the spatial grid, [h x w], CLS column dropped.
struct AttentionMap {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<double> weights;
};

/// `head` selects one head; by default heads are averaged.
AttentionMap attention_map(const Trace& trace, const PatchGrid& grid, std::size_t token_index,
                           const AttentionSource& source,
                           std::optional<std::size_t> head = std::nullopt);

std::string to_csv(const AttentionMap& map);
/// Binary P5 image, min-max normalised to 0..255; constant maps become 0.
std::vector<std::uint8_t> to_pgm(const AttentionMap& map);
AttentionMap parse_csv_map(const std::string& csv);

/// Writes `<prefix>.csv` and `<prefix>.pgm`.
void export_attention(const Trace& trace, const PatchGrid& grid, std::size_t token_index,
                      const AttentionSource& source, const std::filesystem::path& prefix,
                      std::optional<std::size_t> head = std::nullopt);

}  // namespace locat::analytics
