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

#include "locat/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "locat/config.hpp"
#include "locat/errors.hpp"

namespace locat::analytics {

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

double locality_score(const Tensor& features, const PatchGrid& grid) {
  if (features.rank() != 2 || features.rows() != grid.size()) {
    throw DimensionError("locality_score: expected [" + std::to_string(grid.size()) +
                         " x C] features, got " + shape_string(features.shape()));
  }
  const auto h = static_cast<std::ptrdiff_t>(grid.h());
  const auto w = static_cast<std::ptrdiff_t>(grid.w());
  double total = 0.0;
  for (std::ptrdiff_t i = 0; i < h; ++i) {
    for (std::ptrdiff_t j = 0; j < w; ++j) {
      const auto p = static_cast<std::size_t>(i * w + j);
      double sum = 0.0;
      int count = 0;
      for (std::ptrdiff_t di = -1; di <= 1; ++di) {
        for (std::ptrdiff_t dj = -1; dj <= 1; ++dj) {
          if (di == 0 && dj == 0) continue;
          const std::ptrdiff_t ni = i + di, nj = j + dj;
          if (ni < 0 || nj < 0 || ni >= h || nj >= w) continue;
          sum += cosine(features.row(p), features.row(static_cast<std::size_t>(ni * w + nj)));
          ++count;
        }
      }
      // A 1x1 grid has no neighbours; the patch contributes 0.
      total += count ? sum / count : 0.0;
    }
  }
  return total / static_cast<double>(grid.size());
}

double cls_similarity(const Tensor& x) {
  if (x.rank() != 2 || x.rows() < 2) throw DimensionError("cls_similarity: expected [(1+hw) x C]");
  double total = 0.0;
  for (std::size_t p = 1; p < x.rows(); ++p) total += cosine(x.row(p), x.row(0));
  return total / static_cast<double>(x.rows() - 1);
}

double percentile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DimensionError("percentile: empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("percentile: q must lie in [0, 1]");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

SigmaSummary summarize(std::vector<double> values) {
  if (values.empty()) throw DimensionError("summarize: empty sample");
  std::sort(values.begin(), values.end());
  SigmaSummary s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  s.median = percentile(values, 0.5);
  s.p10 = percentile(values, 0.1);
  s.p30 = percentile(values, 0.3);
  s.p70 = percentile(values, 0.7);
  s.p90 = percentile(values, 0.9);
  return s;
}

std::vector<LayerStats> sigma_statistics(const std::vector<std::vector<gaug::GaugEval>>& traces) {
  if (traces.empty()) throw DimensionError("sigma_statistics: no layers");
  std::vector<LayerStats> out;
  for (std::size_t l = 0; l < traces.size(); ++l) {
    LayerStats ls;
    ls.layer = l;
    std::vector<double> stds;
    for (const auto& eval : traces[l]) {
      if (eval.sigma.rank() != 2 || eval.sigma.cols() != 2) continue;
      for (double v : eval.sigma.data()) stds.push_back(std::sqrt(v));
    }
    if (!stds.empty()) ls.sigma = summarize(std::move(stds));
    out.push_back(std::move(ls));
  }
  return out;
}

std::vector<LayerStats> layer_statistics(std::span<const Trace> traces, const PatchGrid& grid) {
  if (traces.empty()) throw DimensionError("layer_statistics: no traces");
  const std::size_t depth = traces.front().layers.size();
  std::vector<std::vector<gaug::GaugEval>> per_layer(depth);
  std::vector<double> locality(depth, 0.0), cls(depth, 0.0);
  for (const auto& trace : traces) {
    if (trace.layers.size() != depth) throw DimensionError("layer_statistics: ragged traces");
    for (std::size_t l = 0; l < depth; ++l) {
      const Tensor& x = trace.layers[l].output;
      Tensor spatial({x.rows() - 1, x.cols()});
      std::copy(x.data().begin() + static_cast<std::ptrdiff_t>(x.cols()), x.data().end(),
                spatial.data().begin());
      locality[l] += locality_score(spatial, grid);
      cls[l] += cls_similarity(x);
      for (const auto& eval : trace.layers[l].heads) per_layer[l].push_back(eval);
    }
  }
  std::vector<LayerStats> stats = sigma_statistics(per_layer);
  for (std::size_t l = 0; l < depth; ++l) {
    stats[l].locality_score = locality[l] / static_cast<double>(traces.size());
    stats[l].cls_similarity = cls[l] / static_cast<double>(traces.size());
  }
  return stats;
}

void write_stats_csv(std::ostream& out, std::span<const LayerStats> stats) {
  out << "layer,metric,value\n";
  for (const auto& s : stats) {
    auto row = [&](const char* metric, double v) {
      out << s.layer << ',' << metric << ',' << format_double(v) << '\n';
    };
    row("locality_score", s.locality_score);
    row("cls_similarity", s.cls_similarity);
    if (s.sigma) {
      row("sigma_mean", s.sigma->mean);
      row("sigma_median", s.sigma->median);
      row("sigma_p10", s.sigma->p10);
      row("sigma_p30", s.sigma->p30);
      row("sigma_p70", s.sigma->p70);
      row("sigma_p90", s.sigma->p90);
    }
  }
}

AttentionSource AttentionSource::parse(const std::string& text) {
  if (text == "prr") return {true, 0};
  return {false, parse_size("layer", text)};
}

AttentionMap attention_map(const Trace& trace, const PatchGrid& grid, std::size_t token_index,
                           const AttentionSource& source, std::optional<std::size_t> head) {
  std::vector<const Tensor*> maps;
  if (source.refinement) {
    if (trace.prr_attention.empty()) throw RangeError("attention map: model has no refinement step");
    for (const auto& m : trace.prr_attention) maps.push_back(&m);
  } else {
    if (source.layer >= trace.layers.size()) {
      throw RangeError("attention map: layer " + std::to_string(source.layer) + " out of range [0, " +
                       std::to_string(trace.layers.size()) + ")");
    }
    for (const auto& e : trace.layers[source.layer].heads) maps.push_back(&e.attn_weights);
  }
  if (token_index > grid.size()) {
    throw RangeError("attention map: token " + std::to_string(token_index) + " out of range [0, " +
                     std::to_string(grid.size()) + "]");
  }
  if (head) {
    if (*head >= maps.size()) throw RangeError("attention map: head out of range");
    maps = {maps[*head]};
  }
  AttentionMap out{grid.h(), grid.w(), std::vector<double>(grid.size(), 0.0)};
  for (const Tensor* m : maps) {
    for (std::size_t t = 0; t < grid.size(); ++t) out.weights[t] += (*m)(token_index, t + 1);
  }
  for (auto& v : out.weights) v /= static_cast<double>(maps.size());
  return out;
}

std::string to_csv(const AttentionMap& map) {
  std::string out;
  for (std::size_t i = 0; i < map.h; ++i) {
    for (std::size_t j = 0; j < map.w; ++j) {
      if (j) out += ',';
      out += format_double(map.weights[i * map.w + j]);
    }
    out += '\n';
  }
  return out;
}

AttentionMap parse_csv_map(const std::string& csv) {
  AttentionMap map;
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream cells(line);
    std::string cell;
    std::size_t cols = 0;
    while (std::getline(cells, cell, ',')) {
      map.weights.push_back(parse_double("attention csv", cell));
      ++cols;
    }
    if (map.h == 0) map.w = cols;
    if (cols != map.w) throw FormatError("attention csv: ragged rows");
    ++map.h;
  }
  return map;
}

std::vector<std::uint8_t> to_pgm(const AttentionMap& map) {
  const std::string header =
      "P5\n" + std::to_string(map.w) + " " + std::to_string(map.h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const auto [lo_it, hi_it] = std::minmax_element(map.weights.begin(), map.weights.end());
  const double lo = *lo_it, hi = *hi_it;
  for (double v : map.weights) {
    const double scaled = hi > lo ? 255.0 * (v - lo) / (hi - lo) : 0.0;
    out.push_back(static_cast<std::uint8_t>(std::lround(scaled)));
  }
  return out;
}

void export_attention(const Trace& trace, const PatchGrid& grid, std::size_t token_index,
                      const AttentionSource& source, const std::filesystem::path& prefix,
                      std::optional<std::size_t> head) {
  const AttentionMap map = attention_map(trace, grid, token_index, source, head);
  auto with_ext = [&prefix](const char* ext) {
    std::filesystem::path p = prefix;
    p += ext;
    return p;
  };
  {
    std::ofstream csv(with_ext(".csv"));
    if (!csv) throw FormatError("cannot write " + with_ext(".csv").string());
    csv << to_csv(map);
  }
  std::ofstream pgm(with_ext(".pgm"), std::ios::binary);
  if (!pgm) throw FormatError("cannot write " + with_ext(".pgm").string());
  const auto bytes = to_pgm(map);
  pgm.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace locat::analytics
