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

#include "locat/train.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <string>

#include "locat/checkpoint.hpp"
#include "locat/errors.hpp"
#include "locat/kernels.hpp"
#include "locat/optim.hpp"
#include "locat/prr.hpp"
#include "locat/rng.hpp"

namespace locat::train {
namespace {

constexpr std::uint64_t kShuffleStream = 0x5348'5546ULL;
constexpr std::uint64_t kDropStream = 0x4452'4f50ULL;

std::vector<const Tensor*> param_list(const ModelParams& params) {
  std::vector<const Tensor*> out;
  params.for_each([&out](const std::string&, const Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<optim::Slot> slots(ModelParams& params) {
  std::vector<optim::Slot> out;
  params.for_each([&out](const std::string& name, Tensor& t) {
    out.push_back({&t, t.rank() >= 2 && name != "pos_embed"});
  });
  return out;
}

/// Runs body(i) for i in [0, n), possibly concurrently, and rethrows the
/// first exception by index.
template <class F>
void parallel_for(std::size_t n, F&& body) {
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic) if (n > 1)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  if (epochs == 0 || batch_size == 0 || train_samples == 0 || val_samples == 0) {
    throw ConfigError("epochs, batch_size, train_samples and val_samples must be > 0");
  }
  if (!(base_lr > 0.0)) throw ConfigError("base_lr must be > 0");
  if (!(warmup >= 0.0 && warmup < 1.0)) throw ConfigError("warmup must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(noise >= 0.0) || !(probe_noise >= 0.0)) throw ConfigError("noise must be >= 0");
  if (probe_train_samples == 0 || probe_test_samples == 0 || probe_steps == 0 || !(probe_lr > 0.0)) {
    throw ConfigError("probe sample counts, steps and lr must be > 0");
  }
}

bool RunConfig::apply(std::string_view key, std::string_view value) {
  if (model.apply(key, value)) return true;
  if (key == "epochs") {
    epochs = parse_size(key, value);
  } else if (key == "batch_size") {
    batch_size = parse_size(key, value);
  } else if (key == "base_lr") {
    base_lr = parse_double(key, value);
  } else if (key == "warmup") {
    warmup = parse_double(key, value);
  } else if (key == "weight_decay") {
    weight_decay = parse_double(key, value);
  } else if (key == "train_samples") {
    train_samples = parse_size(key, value);
  } else if (key == "val_samples") {
    val_samples = parse_size(key, value);
  } else if (key == "noise") {
    noise = parse_double(key, value);
  } else if (key == "data_seed") {
    data_seed = parse_u64(key, value);
  } else if (key == "probe_train_samples") {
    probe_train_samples = parse_size(key, value);
  } else if (key == "probe_test_samples") {
    probe_test_samples = parse_size(key, value);
  } else if (key == "probe_steps") {
    probe_steps = parse_size(key, value);
  } else if (key == "probe_lr") {
    probe_lr = parse_double(key, value);
  } else if (key == "probe_noise") {
    probe_noise = parse_double(key, value);
  } else if (key == "probe_features") {
    if (value == "pre") {
      probe_post_refine = false;
    } else if (value == "post") {
      probe_post_refine = true;
    } else {
      throw ConfigError("probe_features: expected pre|post, got '" + std::string(value) + "'");
    }
  } else if (key == "out") {
    out_dir = std::string(value);
  } else {
    return false;
  }
  return true;
}

KeyValues RunConfig::to_key_values() const {
  KeyValues kv = model.to_key_values();
  const KeyValues run = {
      {"epochs", std::to_string(epochs)},
      {"batch_size", std::to_string(batch_size)},
      {"base_lr", format_double(base_lr)},
      {"warmup", format_double(warmup)},
      {"weight_decay", format_double(weight_decay)},
      {"train_samples", std::to_string(train_samples)},
      {"val_samples", std::to_string(val_samples)},
      {"noise", format_double(noise)},
      {"data_seed", std::to_string(data_seed)},
      {"probe_train_samples", std::to_string(probe_train_samples)},
      {"probe_test_samples", std::to_string(probe_test_samples)},
      {"probe_steps", std::to_string(probe_steps)},
      {"probe_lr", format_double(probe_lr)},
      {"probe_noise", format_double(probe_noise)},
      {"probe_features", probe_post_refine ? "post" : "pre"},
  };
  kv.insert(kv.end(), run.begin(), run.end());
  if (!out_dir.empty()) kv.emplace_back("out", out_dir.string());
  return kv;
}

RunConfig RunConfig::from_key_values(const KeyValues& kv) {
  RunConfig rc;
  for (const auto& [k, v] : kv) {
    if (!rc.apply(k, v)) throw ConfigError("unknown config key '" + k + "'");
  }
  rc.validate();
  return rc;
}

data::SyntheticTask RunConfig::motif_task() const {
  data::SyntheticTask t;
  t.kind = data::TaskKind::LocalMotifClassification;
  t.grid = model.grid_side();
  t.patch_size = model.patch_size;
  t.channels = model.channels;
  t.num_classes = model.num_classes;
  t.noise_level = noise;
  t.seed = data_seed;
  return t;
}

data::SyntheticTask RunConfig::dense_task() const {
  data::SyntheticTask t = motif_task();
  t.kind = data::TaskKind::DensePatchLabels;
  t.noise_level = probe_noise;
  t.seed = Rng::derive(data_seed, 1);
  return t;
}

void write_metrics_csv(std::ostream& out, std::span<const EpochMetrics> metrics) {
  out << "epoch,lr,train_loss,val_accuracy\n";
  for (const auto& m : metrics) {
    out << m.epoch << ',' << format_double(m.lr) << ',' << format_double(m.train_loss) << ','
        << format_double(m.val_accuracy) << '\n';
  }
}

BatchGradient batch_gradient(const ModelConfig& cfg, const ModelParams& params,
                             std::span<const data::Sample> samples,
                             std::span<const std::size_t> indices, std::uint64_t drop_path_seed) {
  if (indices.empty()) throw DimensionError("batch_gradient: empty batch");
  const auto plist = param_list(params);
  std::vector<std::vector<Tensor>> per(indices.size());
  std::vector<double> losses(indices.size(), 0.0);
  const bool drop = cfg.stochastic_depth_rate > 0.0;

  parallel_for(indices.size(), [&](std::size_t i) {
    const data::Sample& s = samples[indices[i]];
    ag::Graph g;
    Rng rng(Rng::derive(drop_path_seed, i));
    ForwardOptions opts;
    if (drop) opts.drop_path_rng = &rng;
    const GraphOutput out = forward_graph(g, cfg, params, s.image, opts);
    const ag::Var loss = ag::cross_entropy(out.logits, s.label);
    g.backward(loss);
    losses[i] = loss.value()[0];
    per[i].reserve(plist.size());
    for (const Tensor* p : plist) {
      per[i].push_back(g.grad_of(*p));
      if (!per[i].back().all_finite()) throw NumericError("non-finite gradient in batch");
    }
  });

  BatchGradient out;
  out.grads = std::move(per[0]);
  out.loss = losses[0];
  for (std::size_t i = 1; i < indices.size(); ++i) {
    out.loss += losses[i];
    for (std::size_t k = 0; k < plist.size(); ++k) nk::add_inplace(out.grads[k], per[i][k]);
  }
  const double inv = 1.0 / static_cast<double>(indices.size());
  out.loss *= inv;
  for (auto& gr : out.grads) gr = nk::scale(gr, inv);
  return out;
}

double accuracy(const ModelConfig& cfg, const ModelParams& params,
                std::span<const data::Sample> samples) {
  std::vector<int> hit(samples.size(), 0);
  parallel_for(samples.size(), [&](std::size_t i) {
    const Tensor logits = forward(samples[i].image, cfg, params).logits;
    hit[i] = argmax(logits.data()) == samples[i].label ? 1 : 0;
  });
  return static_cast<double>(std::accumulate(hit.begin(), hit.end(), 0)) /
         static_cast<double>(samples.size());
}

TrainResult train(const RunConfig& rc, const data::SyntheticTask& task) {
  rc.validate();
  if (task.image_size() != rc.model.image_size || task.patch_size != rc.model.patch_size ||
      task.channels != rc.model.channels) {
    throw DimensionError("train: task geometry does not match the model");
  }
  if (task.num_classes > rc.model.num_classes) {
    throw ConfigError("train: task has more classes than the model head");
  }
  const auto train_set = data::generate_dataset(task, rc.train_samples, 0);
  const auto val_set = data::generate_dataset(task, rc.val_samples, rc.train_samples);

  TrainResult result;
  result.params = init_params(rc.model);
  optim::AdamW opt(slots(result.params), {.weight_decay = rc.weight_decay});

  const std::size_t per_epoch = (rc.train_samples + rc.batch_size - 1) / rc.batch_size;
  const std::size_t total = per_epoch * rc.epochs;
  const std::size_t warm = optim::warmup_steps(rc.warmup, total);
  const std::uint64_t seed = rc.model.seed;

  if (!rc.out_dir.empty()) std::filesystem::create_directories(rc.out_dir);
  std::vector<std::size_t> order(rc.train_samples);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < rc.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(Rng::derive(Rng::derive(seed, kShuffleStream), epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double loss_sum = 0.0;
    double lr = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
      const std::size_t lo = b * rc.batch_size;
      const std::size_t hi = std::min(lo + rc.batch_size, order.size());
      lr = optim::triangular_lr(step, total, warm, rc.base_lr);
      try {
        BatchGradient bg = batch_gradient(rc.model, result.params, train_set,
                                          std::span(order).subspan(lo, hi - lo),
                                          Rng::derive(Rng::derive(seed, kDropStream), step));
        if (!std::isfinite(bg.loss)) throw NumericError("non-finite training loss");
        opt.step(bg.grads, lr);
        loss_sum += bg.loss * static_cast<double>(hi - lo);
      } catch (const NumericError& e) {
        if (!rc.out_dir.empty()) save_checkpoint(rc.out_dir / "last_good.lcat", rc.model, result.params);
        throw NumericError(std::string(e.what()) + " at step " + std::to_string(step));
      }
    }
    result.metrics.push_back({epoch, lr, loss_sum / static_cast<double>(rc.train_samples),
                              accuracy(rc.model, result.params, val_set)});
  }

  if (!rc.out_dir.empty()) {
    save_checkpoint(rc.out_dir / "checkpoint.lcat", rc.model, result.params);
    std::ofstream csv(rc.out_dir / "metrics.csv");
    if (!csv) throw FormatError("cannot write " + (rc.out_dir / "metrics.csv").string());
    write_metrics_csv(csv, result.metrics);
  }
  return result;
}

TrainResult train(const RunConfig& rc) { return train(rc, rc.motif_task()); }

std::vector<Tensor> spatial_features(const ModelConfig& cfg, const ModelParams& params,
                                     std::span<const data::Sample> samples, bool post_refine) {
  std::vector<Tensor> out(samples.size());
  const std::size_t hw = cfg.num_patches();
  parallel_for(samples.size(), [&](std::size_t i) {
    const ForwardResult r = forward(samples[i].image, cfg, params, true);
    Tensor tokens = r.trace->tokens;
    if (post_refine) tokens = prr::prr_refine(tokens, cfg.prr_heads());
    Tensor f({hw, tokens.cols()});
    std::copy(tokens.data().begin() + static_cast<std::ptrdiff_t>(tokens.cols()), tokens.data().end(),
              f.data().begin());
    out[i] = std::move(f);
  });
  return out;
}

double linear_probe(const Tensor& train_x, std::span<const std::size_t> train_y,
                    const Tensor& test_x, std::span<const std::size_t> test_y,
                    std::size_t num_classes, const LinearProbeConfig& cfg) {
  if (train_x.rank() != 2 || test_x.rank() != 2 || train_x.cols() != test_x.cols()) {
    throw DimensionError("linear_probe: feature matrices must be [N x F] with equal F");
  }
  if (train_y.size() != train_x.rows() || test_y.size() != test_x.rows()) {
    throw DimensionError("linear_probe: label count does not match feature rows");
  }
  const std::size_t n = train_x.rows(), f = train_x.cols();
  Tensor w({f, num_classes}, 0.0), b({num_classes}, 0.0);
  optim::AdamW opt({{&w, true}, {&b, false}}, {.weight_decay = cfg.weight_decay});
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    Tensor z = nk::matmul(train_x, w);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < num_classes; ++k) z(i, k) += b[k];
    Tensor p = nk::softmax_rows(z);
    for (std::size_t i = 0; i < n; ++i) p(i, train_y[i]) -= 1.0;
    Tensor gw = nk::scale(nk::matmul_tn(train_x, p), 1.0 / static_cast<double>(n));
    Tensor gb({num_classes}, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < num_classes; ++k) gb[k] += p(i, k) / static_cast<double>(n);
    opt.step({gw, gb}, cfg.lr);
  }
  Tensor z = nk::matmul(test_x, w);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test_x.rows(); ++i) {
    auto row = z.row(i);
    for (std::size_t k = 0; k < num_classes; ++k) row[k] += b[k];
    if (argmax(row) == test_y[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(test_x.rows());
}

double dense_probe(const ModelConfig& cfg, const ModelParams& params,
                   const data::SyntheticTask& task, const RunConfig& rc) {
  if (task.kind != data::TaskKind::DensePatchLabels) {
    throw ConfigError("dense_probe: task must be the dense labelling task");
  }
  if (task.grid != cfg.grid_side() || task.patch_size != cfg.patch_size ||
      task.channels != cfg.channels) {
    throw DimensionError("dense_probe: task grid " + std::to_string(task.grid) + "x" +
                         std::to_string(task.grid) + " does not match model grid " +
                         std::to_string(cfg.grid_side()) + "x" + std::to_string(cfg.grid_side()));
  }
  const auto train_set = data::generate_dataset(task, rc.probe_train_samples, 0);
  const auto test_set = data::generate_dataset(task, rc.probe_test_samples, rc.probe_train_samples);

  auto stack = [&](const std::vector<data::Sample>& set, Tensor& x, std::vector<std::size_t>& y) {
    const auto feats = spatial_features(cfg, params, set, rc.probe_post_refine);
    const std::size_t hw = cfg.num_patches(), c = cfg.embed_dim;
    x = Tensor({set.size() * hw, c});
    y.clear();
    for (std::size_t i = 0; i < set.size(); ++i) {
      std::copy(feats[i].data().begin(), feats[i].data().end(),
                x.data().begin() + static_cast<std::ptrdiff_t>(i * hw * c));
      y.insert(y.end(), set[i].patch_labels.begin(), set[i].patch_labels.end());
    }
  };
  Tensor train_x, test_x;
  std::vector<std::size_t> train_y, test_y;
  stack(train_set, train_x, train_y);
  stack(test_set, test_x, test_y);
  return linear_probe(train_x, train_y, test_x, test_y, task.num_classes,
                      {.steps = rc.probe_steps, .lr = rc.probe_lr, .weight_decay = 0.0});
}

}  // namespace locat::train
