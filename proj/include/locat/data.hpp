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
#include <string_view>
#include <vector>

#include "locat/tensor.hpp"

namespace locat::data {

enum class TaskKind { LocalMotifClassification, DensePatchLabels };

/// Synthetic image task on a g x g grid of patch_size pixel patches.
///
/// LocalMotifClassification plants a fixed 2 x (2 * patch_size) pixel motif
/// per class, straddling two horizontally adjacent patches at a
/// class-specific grid location. DensePatchLabels assigns a class to every
/// 2 x 2 block of patches and draws each patch of the block with that
/// class's patch motif. Both add noise_level * N(0, 1) to every pixel.
struct SyntheticTask {
  TaskKind kind = TaskKind::LocalMotifClassification;
  std::size_t grid = 4;
  std::size_t patch_size = 4;
  std::size_t channels = 1;
  std::size_t num_classes = 4;
  double noise_level = 1.0;
  double amplitude = 1.0;
  std::uint64_t seed = 0;

  std::size_t image_size() const noexcept { return grid * patch_size; }
  void validate() const;
};

TaskKind parse_task_kind(std::string_view text);

struct Sample {
  Tensor image;                             // [H x W x channels]
  std::size_t label = 0;                    // classification label
  std::vector<std::size_t> patch_labels;    // row-major grid labels (dense task)
};

/// Pure function of (task, index).
Sample generate_sample(const SyntheticTask& task, std::uint64_t index);

/// Samples first_index, ..., first_index + n - 1.
std::vector<Sample> generate_dataset(const SyntheticTask& task, std::size_t n,
                                     std::uint64_t first_index = 0);

/// Pixel mask [H x W] with 1 inside the class motif footprint.
std::vector<bool> motif_footprint(const SyntheticTask& task, std::size_t label);
/// Noise-free class motif values over the footprint, row-major over the
/// 2 x (2 * patch_size) window and channels.
std::vector<double> motif_values(const SyntheticTask& task, std::size_t label);

}  // namespace locat::data
