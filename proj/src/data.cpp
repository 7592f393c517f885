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
#include "locat/data.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "locat/errors.hpp"
#include "locat/rng.hpp"

namespace locat::data {
namespace {

// Streams below 2^32 are per-sample; task-level draws use the top range.
constexpr std::uint64_t kMotifStream = 0xffff'ffff'0000'0000ULL;
constexpr std::uint64_t kPlacementStream = 0xffff'fffe'0000'0000ULL;

std::size_t motif_width(const SyntheticTask& t) { return 2 * t.patch_size; }

/// Grid cell (row, col) of the left patch of each class motif.
std::vector<std::pair<std::size_t, std::size_t>> placements(const SyntheticTask& t) {
  std::vector<std::pair<std::size_t, std::size_t>> cells;
  for (std::size_t r = 0; r < t.grid; ++r)
    for (std::size_t c = 0; c + 1 < t.grid; ++c) cells.emplace_back(r, c);
  Rng rng(Rng::derive(t.seed, kPlacementStream));
  for (std::size_t i = cells.size(); i > 1; --i) std::swap(cells[i - 1], cells[rng.below(i)]);
  cells.resize(t.num_classes);
  return cells;
}

std::vector<double> signs(std::uint64_t seed, std::uint64_t stream, std::size_t n) {
  Rng rng(Rng::derive(seed, stream));
  std::vector<double> out(n);
  for (auto& v : out) v = rng.uniform() < 0.5 ? -1.0 : 1.0;
  return out;
}

}  // namespace

void SyntheticTask::validate() const {
  if (grid < 2 || patch_size < 2 || channels == 0) throw ConfigError("task: grid and patch_size must be >= 2");
  if (num_classes < 2) throw ConfigError("task: num_classes must be >= 2");
  if (!(noise_level >= 0.0)) throw ConfigError("task: noise_level must be >= 0");
  if (kind == TaskKind::LocalMotifClassification && num_classes > grid * (grid - 1)) {
    throw ConfigError("task: at most " + std::to_string(grid * (grid - 1)) +
                      " motif classes fit a " + std::to_string(grid) + "x" + std::to_string(grid) + " grid");
  }
}

TaskKind parse_task_kind(std::string_view text) {
  if (text == "motif") return TaskKind::LocalMotifClassification;
  if (text == "dense") return TaskKind::DensePatchLabels;
  throw ConfigError("unknown task kind '" + std::string(text) + "' (expected motif|dense)");
}

std::vector<double> motif_values(const SyntheticTask& task, std::size_t label) {
  if (label >= task.num_classes) throw RangeError("motif_values: label out of range");
  const std::size_t n = task.kind == TaskKind::LocalMotifClassification
                            ? 2 * motif_width(task) * task.channels
                            : task.patch_size * task.patch_size * task.channels;
  auto v = signs(task.seed, kMotifStream + label, n);
  for (auto& x : v) x *= task.amplitude;
  return v;
}

std::vector<bool> motif_footprint(const SyntheticTask& task, std::size_t label) {
  if (task.kind != TaskKind::LocalMotifClassification) {
    throw ConfigError("motif_footprint: only defined for the motif task");
  }
  const std::size_t side = task.image_size();
  std::vector<bool> mask(side * side, false);
  const auto [r, c] = placements(task).at(label);
  const std::size_t y0 = r * task.patch_size + task.patch_size / 2 - 1;
  const std::size_t x0 = c * task.patch_size;
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < motif_width(task); ++x) mask[(y0 + y) * side + x0 + x] = true;
  return mask;
}

Sample generate_sample(const SyntheticTask& task, std::uint64_t index) {
  task.validate();
  const std::size_t side = task.image_size(), ch = task.channels, p = task.patch_size;
  Sample s;
  s.image = Tensor({side, side, ch});
  Rng rng(Rng::derive(task.seed, index));

  if (task.kind == TaskKind::LocalMotifClassification) {
    s.label = static_cast<std::size_t>(index % task.num_classes);
    const auto motif = motif_values(task, s.label);
    const auto [r, c] = placements(task)[s.label];
    const std::size_t y0 = r * p + p / 2 - 1, x0 = c * p, mw = motif_width(task);
    for (std::size_t y = 0; y < 2; ++y)
      for (std::size_t x = 0; x < mw; ++x)
        for (std::size_t k = 0; k < ch; ++k)
          s.image[((y0 + y) * side + x0 + x) * ch + k] = motif[(y * mw + x) * ch + k];
  } else {
    const std::size_t blocks = (task.grid + 1) / 2;
    std::vector<std::size_t> block_label(blocks * blocks);
    for (auto& b : block_label) b = static_cast<std::size_t>(rng.below(task.num_classes));
    std::vector<std::vector<double>> motifs(task.num_classes);
    for (std::size_t k = 0; k < task.num_classes; ++k) motifs[k] = motif_values(task, k);
    s.patch_labels.resize(task.grid * task.grid);
    for (std::size_t r = 0; r < task.grid; ++r)
      for (std::size_t c = 0; c < task.grid; ++c) {
        const std::size_t lab = block_label[(r / 2) * blocks + c / 2];
        s.patch_labels[r * task.grid + c] = lab;
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t x = 0; x < p; ++x)
            for (std::size_t k = 0; k < ch; ++k)
              s.image[((r * p + y) * side + c * p + x) * ch + k] = motifs[lab][(y * p + x) * ch + k];
      }
    s.label = s.patch_labels[0];
  }
  if (task.noise_level > 0.0) {
    for (auto& v : s.image.data()) v += task.noise_level * rng.normal();
  }
  return s;
}

std::vector<Sample> generate_dataset(const SyntheticTask& task, std::size_t n,
                                     std::uint64_t first_index) {
  if (n == 0) throw DomainError("generate_dataset: n must be > 0");
  task.validate();
  std::vector<Sample> out(n);
#pragma omp parallel for schedule(static) if (n >= 64)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    out[static_cast<std::size_t>(i)] = generate_sample(task, first_index + static_cast<std::uint64_t>(i));
  }
  return out;
}

}  // namespace locat::data
