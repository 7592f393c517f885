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
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "locat/gaug.hpp"
#include "locat/prr.hpp"

namespace locat {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Parses `key = value` lines; `#` starts a comment, blank lines are
/// skipped. Duplicate keys and lines without '=' are FormatErrors.
KeyValues parse_key_values(std::string_view text);
KeyValues read_key_values(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& kv);

// Typed value parsing; the key is used in error messages.
std::size_t parse_size(std::string_view key, std::string_view value);
std::uint64_t parse_u64(std::string_view key, std::string_view value);
double parse_double(std::string_view key, std::string_view value);
bool parse_bool(std::string_view key, std::string_view value);
std::string format_double(double v);

/// Architecture of a ViT with optional locality attention.
struct ModelConfig {
  std::size_t image_size = 16;
  std::size_t patch_size = 4;
  std::size_t channels = 1;
  std::size_t embed_dim = 32;
  std::size_t depth = 4;
  std::size_t heads = 2;
  double mlp_ratio = 4.0;
  std::size_t num_classes = 4;
  prr::PoolingKind pooling = prr::PoolingKind::refine();
  bool locat_enabled = true;
  gaug::KernelKind kernel = gaug::KernelKind::gaussian();
  gaug::ScalingKind scaling = gaug::ScalingKind::Learned;
  gaug::SigmaSource sigma_source = gaug::SigmaSource::Query;
  bool use_pos_embed = true;
  bool final_norm = true;
  std::uint64_t seed = 0;
  double stochastic_depth_rate = 0.0;

  std::size_t grid_side() const noexcept { return image_size / patch_size; }
  std::size_t num_patches() const noexcept { return grid_side() * grid_side(); }
  std::size_t head_dim() const noexcept { return embed_dim / heads; }
  std::size_t mlp_hidden() const noexcept;
  std::size_t patch_dim() const noexcept { return patch_size * patch_size * channels; }
  std::size_t prr_heads() const noexcept { return pooling.heads ? pooling.heads : heads; }

  /// Throws ConfigError on inconsistent geometry or rates.
  void validate() const;

  /// Applies one key; returns false if the key is not a model key.
  bool apply(std::string_view key, std::string_view value);
  KeyValues to_key_values() const;
  static ModelConfig from_key_values(const KeyValues& kv);

  /// Vanilla ViT with the same geometry: no locality heads, CLS pooling.
  ModelConfig vanilla() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Desk-scale defaults: 16x16 images, patch 4, C = 32, 4 layers, 2 heads.
ModelConfig desk_config();
/// Small model used for gradient checks: 3x3 grid, C = 16, 2 layers, 2 heads.
ModelConfig gradcheck_config();

}  // namespace locat
