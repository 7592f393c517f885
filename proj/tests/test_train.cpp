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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "doctest.h"
#include "locat/checkpoint.hpp"
#include "locat/data.hpp"
#include "locat/errors.hpp"
#include "locat/kernels.hpp"
#include "locat/optim.hpp"
#include "locat/train.hpp"
#include "test_util.hpp"

using namespace locat;

namespace {

train::RunConfig small_run() {
  train::RunConfig rc;
  rc.model.depth = 2;
  rc.epochs = 2;
  rc.batch_size = 8;
  rc.train_samples = 32;
  rc.val_samples = 16;
  rc.probe_train_samples = 16;
  rc.probe_test_samples = 16;
  rc.probe_steps = 50;
  return rc;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("synthetic samples are pure functions of seed and index") {
  data::SyntheticTask t;
  const auto a = data::generate_sample(t, 17), b = data::generate_sample(t, 17);
  CHECK(a.image == b.image);
  CHECK(a.label == b.label);
  CHECK_FALSE(data::generate_sample(t, 18).image == a.image);
  const auto set = data::generate_dataset(t, 20, 10);
  CHECK(set[7].image == data::generate_sample(t, 17).image);
  CHECK_THROWS_AS(data::generate_dataset(t, 0), DomainError);
  data::SyntheticTask big = t;
  big.num_classes = 13;
  CHECK_THROWS_AS(data::generate_sample(big, 0), ConfigError);
}

TEST_CASE("noise-free samples of a class are identical") {
  data::SyntheticTask t;
  t.noise_level = 0.0;
  const auto a = data::generate_sample(t, 1), b = data::generate_sample(t, 1 + t.num_classes);
  CHECK(a.label == b.label);
  CHECK(a.image == b.image);
  // The motif sits exactly on its footprint.
  const auto mask = data::motif_footprint(t, a.label);
  for (std::size_t i = 0; i < mask.size(); ++i) CHECK((a.image[i] != 0.0) == mask[i]);
}

TEST_CASE("class-conditional means differ only inside the motif footprint") {
  data::SyntheticTask t;
  t.seed = 5;
  const std::size_t per_class = 1000;
  const double tol = 3.0 * t.noise_level / std::sqrt(static_cast<double>(per_class));
  const auto set = data::generate_dataset(t, per_class * t.num_classes);
  const std::size_t pixels = set[0].image.size();
  for (std::size_t k = 0; k < t.num_classes; ++k) {
    std::vector<double> mean(pixels, 0.0);
    for (const auto& s : set)
      if (s.label == k)
        for (std::size_t i = 0; i < pixels; ++i) mean[i] += s.image[i] / per_class;
    const auto mask = data::motif_footprint(t, k);
    const auto motif = data::motif_values(t, k);
    double off_sq = 0.0;
    std::size_t off = 0, m = 0;
    for (std::size_t i = 0; i < pixels; ++i) {
      if (mask[i]) {
        CHECK(std::abs(mean[i] - motif[m++]) <= 5.0 * tol / 3.0);
      } else {
        off_sq += mean[i] * mean[i];
        ++off;
      }
    }
    CHECK(std::sqrt(off_sq / static_cast<double>(off)) <= tol);
  }
}

TEST_CASE("dense labels come in 2x2 patch blocks") {
  data::SyntheticTask t;
  t.kind = data::TaskKind::DensePatchLabels;
  t.noise_level = 0.0;
  const auto s = data::generate_sample(t, 3);
  REQUIRE(s.patch_labels.size() == 16);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c)
      CHECK(s.patch_labels[r * 4 + c] == s.patch_labels[(r / 2 * 2) * 4 + c / 2 * 2]);
  // Equal labels draw identical noise-free patches.
  const auto a = data::motif_values(t, s.patch_labels[0]);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) CHECK(s.image[y * 16 + x] == a[y * 4 + x]);
}

TEST_CASE("adamw matches a hand-computed step") {
  Tensor theta({1}, 2.0);
  optim::AdamW opt({{&theta, true}}, {.weight_decay = 0.1});
  opt.step({Tensor({1}, 0.5)}, 0.01);
  // decay, then m_hat = g, v_hat = g^2
  const double expect = 2.0 * (1.0 - 0.01 * 0.1) - 0.01 * 0.5 / (0.5 + 1e-8);
  CHECK(theta[0] == doctest::Approx(expect).epsilon(1e-15));
  CHECK(opt.first_moment(0)[0] == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(opt.second_moment(0)[0] == doctest::Approx(0.00025).epsilon(1e-15));

  opt.step({Tensor({1}, -1.0)}, 0.01);
  const double m = 0.9 * 0.05 + 0.1 * -1.0, v = 0.999 * 0.00025 + 0.001 * 1.0;
  const double expect2 = expect * (1.0 - 0.001) -
                         0.01 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
  CHECK(theta[0] == doctest::Approx(expect2).epsilon(1e-14));
}

TEST_CASE("adamw without decay is adam, and decay never enters the moments") {
  Tensor a({3}, std::vector<double>{1.0, -2.0, 0.5}), b = a, c = a;
  optim::AdamW with_decay({{&a, true}}, {.weight_decay = 0.3});
  optim::AdamW no_decay({{&b, true}}, {.weight_decay = 0.0});
  optim::AdamW excluded({{&c, false}}, {.weight_decay = 0.3});
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    Tensor g({3});
    for (auto& v : g.data()) v = rng.normal();
    with_decay.step({g}, 0.05);
    no_decay.step({g}, 0.05);
    excluded.step({g}, 0.05);
  }
  CHECK(with_decay.first_moment(0) == no_decay.first_moment(0));
  CHECK(with_decay.second_moment(0) == no_decay.second_moment(0));
  CHECK(excluded.first_moment(0) == no_decay.first_moment(0));
  CHECK(c == b);
  CHECK_FALSE(a == b);
  CHECK_THROWS_AS(with_decay.step({Tensor({2}, 0.0)}, 0.1), DimensionError);
}

TEST_CASE("triangular schedule knots") {
  CHECK(optim::triangular_lr(0, 100, 10, 1e-3) == 0.0);
  CHECK(optim::triangular_lr(10, 100, 10, 1e-3) == 1e-3);
  CHECK(optim::triangular_lr(5, 100, 10, 1e-3) == doctest::Approx(5e-4));
  CHECK(optim::triangular_lr(99, 100, 10, 1e-3) == doctest::Approx(1e-3 / 90));
  CHECK(optim::triangular_lr(100, 100, 10, 1e-3) == 0.0);
  CHECK(optim::triangular_lr(0, 100, 0, 1e-3) == 1e-3);
  double prev = 0.0;
  for (std::size_t t = 0; t <= 10; ++t) {
    const double lr = optim::triangular_lr(t, 100, 10, 1.0);
    CHECK(lr >= prev);
    prev = lr;
  }
  for (std::size_t t = 11; t <= 100; ++t) {
    const double lr = optim::triangular_lr(t, 100, 10, 1.0);
    CHECK(lr < prev);
    prev = lr;
  }
  CHECK(optim::warmup_steps(0.1, 95) == 9);
  CHECK_THROWS_AS(optim::warmup_steps(1.0, 10), ConfigError);
}

TEST_CASE("batch gradient is the ordered mean of per-sample gradients") {
  const auto rc = small_run();
  const ModelParams params = init_params(rc.model);
  const auto set = data::generate_dataset(rc.motif_task(), 4);
  const std::vector<std::size_t> idx = {2, 0, 3};
  const auto bg = train::batch_gradient(rc.model, params, set, idx);
  std::vector<Tensor> expect;
  double loss = 0.0;
  for (std::size_t i : idx) {
    const auto one = train::batch_gradient(rc.model, params, set, std::vector<std::size_t>{i});
    loss += one.loss;
    if (expect.empty()) {
      expect = one.grads;
    } else {
      for (std::size_t k = 0; k < expect.size(); ++k) nk::add_inplace(expect[k], one.grads[k]);
    }
  }
  CHECK(bg.loss == doctest::Approx(loss / 3.0).epsilon(1e-14));
  for (std::size_t k = 0; k < expect.size(); ++k) CHECK(bg.grads[k] == nk::scale(expect[k], 1.0 / 3.0));
}

TEST_CASE("a single motif sample can be overfit") {
  train::RunConfig rc = small_run();
  rc.model.depth = 2;
  const auto set = data::generate_dataset(rc.motif_task(), 1);
  ModelParams params = init_params(rc.model);
  std::vector<optim::Slot> slots;
  params.for_each([&slots](const std::string&, Tensor& t) { slots.push_back({&t, t.rank() >= 2}); });
  optim::AdamW opt(slots, {.weight_decay = 0.0});
  double loss = 1e9;
  const std::vector<std::size_t> idx = {0};
  std::size_t step = 0;
  for (; step < 500 && loss >= 0.01; ++step) {
    const auto bg = train::batch_gradient(rc.model, params, set, idx);
    loss = bg.loss;
    opt.step(bg.grads, 1e-3);
  }
  CHECK(loss < 0.01);
  MESSAGE("overfit reached loss " << loss << " after " << step << " steps");
}

TEST_CASE("training is deterministic and writes its artefacts") {
  auto rc = small_run();
  const auto base = std::filesystem::temp_directory_path() / "locat_test_train";
  std::filesystem::remove_all(base);
  rc.out_dir = base / "a";
  const auto a = train::train(rc);
  rc.out_dir = base / "b";
  const auto b = train::train(rc);
  CHECK(slurp(base / "a" / "checkpoint.lcat") == slurp(base / "b" / "checkpoint.lcat"));
  CHECK(slurp(base / "a" / "metrics.csv") == slurp(base / "b" / "metrics.csv"));
  CHECK(slurp(base / "a" / "metrics.csv").starts_with("epoch,lr,train_loss,val_accuracy\n"));
  REQUIRE(a.metrics.size() == 2);
  CHECK(a.metrics[0].train_loss > 0.0);
  const auto [cfg, params] = load_checkpoint(base / "a" / "checkpoint.lcat");
  CHECK(cfg == rc.model);
  CHECK(params.head_w == b.params.head_w);
  std::filesystem::remove_all(base);
}

TEST_CASE("run config keys") {
  const auto rc = train::RunConfig::from_key_values(
      parse_key_values("epochs = 3\nbase_lr = 0.002\nkernel = laplace\nprobe_features = post\n"));
  CHECK(rc.epochs == 3);
  CHECK(rc.base_lr == 0.002);
  CHECK(rc.model.kernel == gaug::KernelKind::laplace());
  CHECK(rc.probe_post_refine);
  CHECK(train::RunConfig::from_key_values(parse_key_values(format_key_values(rc.to_key_values()))).epochs == 3);
  CHECK_THROWS_WITH_AS(train::RunConfig::from_key_values({{"epoch", "3"}}), doctest::Contains("epoch"), ConfigError);
  CHECK_THROWS_AS(train::RunConfig::from_key_values({{"warmup", "1.0"}}), ConfigError);
  CHECK_THROWS_AS(train::RunConfig::from_key_values({{"base_lr", "0"}}), ConfigError);
}

TEST_CASE("linear probe on oracle features is perfect") {
  const std::size_t k = 4, n = 64;
  Tensor x({n, k}, 0.0), y_test({n, k}, 0.0);
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = (i * 7) % k;
    x(i, labels[i]) = 1.0;
    y_test(i, labels[i]) = 1.0;
  }
  CHECK(train::linear_probe(x, labels, y_test, labels, k, {}) == 1.0);
}

TEST_CASE("dense probe on a random backbone beats chance") {
  auto rc = small_run();
  rc.probe_train_samples = 64;
  rc.probe_test_samples = 32;
  rc.probe_steps = 200;
  const ModelParams params = init_params(rc.model);
  const double acc = train::dense_probe(rc.model, params, rc.dense_task(), rc);
  CHECK(acc >= 1.0 / static_cast<double>(rc.model.num_classes) - 0.05);
  MESSAGE("random-backbone patch accuracy " << acc);

  data::SyntheticTask wrong = rc.dense_task();
  wrong.grid = 3;
  CHECK_THROWS_AS(train::dense_probe(rc.model, params, wrong, rc), DimensionError);
}
