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

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "locat/config.hpp"
#include "locat/model.hpp"
#include "locat/tensor.hpp"

namespace locat {

/// Checkpoint layout, all integers little-endian:
///
///   "LCAT"                       4 bytes
///   version                      u32 (currently 1)
///   config length, config text   u32, UTF-8 `key = value` lines
///   tensor count                 u32
///   per tensor:
///     name length, name          u32, UTF-8
///     rank, dims                 u32, rank x u64
///     data                       row-major IEEE-754 binary64
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct CheckpointData {
  std::string config_text;
  std::vector<NamedTensor> tensors;
};

/// Throws FormatError on duplicate tensor names.
std::vector<std::uint8_t> encode_checkpoint(const CheckpointData& data);
/// Throws FormatError naming the offending field.
CheckpointData decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointData& data);
CheckpointData read_checkpoint_file(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const ModelParams& params);
/// Validates magic, version and every tensor shape against the stored config.
std::pair<ModelConfig, ModelParams> load_checkpoint(const std::filesystem::path& path);

}  // namespace locat
