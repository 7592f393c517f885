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
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "locat/config.hpp"
#include "locat/data.hpp"
#include "locat/model.hpp"

namespace locat::train {

/// A training run. The model seed drives initialisation, shuffling and
/// stochastic depth; data_seed fixes the synthetic datasets so that runs
/// with different model seeds see the same images.
struct RunConfig {
  ModelConfig model = desk_config();
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double base_lr = 1e-3;
  double warmup = 0.1;  // fraction of all steps
  double weight_decay = 0.05;
  std::size_t train_samples = 256;
  std::size_t val_samples = 128;
  double noise = 1.0;
  std::uint64_t data_seed = 1234;

  // Dense probe.
  std::size_t probe_train_samples = 192;
  std::size_t probe_test_samples = 128;
  std::size_t probe_steps = 300;
  double probe_lr = 0.01;
  double probe_noise = 1.5;
  bool probe_post_refine = false;

  std::filesystem::path out_dir;

  void validate() const;
  bool apply(std::string_view key, std::string_view value);
  KeyValues to_key_values() const;
  /// Unknown keys are ConfigErrors.
  static RunConfig from_key_values(const KeyValues& kv);

  /// Classification task matching the model geometry.
  data::SyntheticTask motif_task() const;
  /// Dense labelling task matching the model geometry.
  data::SyntheticTask dense_task() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

void write_metrics_csv(std::ostream& out, std::span<const EpochMetrics> metrics);

/// Mean cross-entropy and its gradient over `samples[indices]`, one entry
/// per parameter in ModelParams::for_each order. Per-sample passes may run
/// concurrently; the sum is taken in ascending position order.
struct BatchGradient {
  double loss = 0.0;
  std::vector<Tensor> grads;
};

BatchGradient batch_gradient(const ModelConfig& cfg, const ModelParams& params,
                             std::span<const data::Sample> samples,
                             std::span<const std::size_t> indices,
                             std::uint64_t drop_path_seed = 0);

/// Fraction of samples whose argmax logit equals the label.
double accuracy(const ModelConfig& cfg, const ModelParams& params,
                std::span<const data::Sample> samples);

struct TrainResult {
  ModelParams params;
  std::vector<EpochMetrics> metrics;
};

/// Trains on samples [0, train_samples) of `task` and validates on the next
/// val_samples indices. With a non-empty out_dir, writes metrics.csv and
/// checkpoint.lcat there. A non-finite loss or gradient raises NumericError
/// after saving the parameters of the last good step as last_good.lcat.
TrainResult train(const RunConfig& rc, const data::SyntheticTask& task);
TrainResult train(const RunConfig& rc);

/// Spatial token features [hw x C] of every sample: the pooling input
/// (after the final norm) or, with post_refine, the refined tokens.
std::vector<Tensor> spatial_features(const ModelConfig& cfg, const ModelParams& params,
                                     std::span<const data::Sample> samples, bool post_refine);

struct LinearProbeConfig {
  std::size_t steps = 300;
  double lr = 0.01;
  double weight_decay = 0.0;
};

/// Trains a linear map (weights and bias) on rows of `train_x` [N x F] with
/// full-batch AdamW and returns its accuracy on `test_x`.
double linear_probe(const Tensor& train_x, std::span<const std::size_t> train_y,
                    const Tensor& test_x, std::span<const std::size_t> test_y,
                    std::size_t num_classes, const LinearProbeConfig& cfg);

/// Per-patch accuracy of a linear probe on frozen backbone features.
/// Throws DimensionError when the task grid differs from the model grid.
double dense_probe(const ModelConfig& cfg, const ModelParams& params,
                   const data::SyntheticTask& task, const RunConfig& rc);

}  // namespace locat::train
