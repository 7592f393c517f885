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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "locat/errors.hpp"
#include "locat/kernels.hpp"
#include "locat/model.hpp"
#include "locat/prr.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace locat;
using locat::testing::max_abs_diff;
using locat::testing::random_tensor;

namespace {

AttentionSpec one_head() {
  AttentionSpec spec;
  spec.heads = 1;
  return spec;
}

}  // namespace

TEST_CASE("locality parameter counts") {
  ModelConfig cfg;
  cfg.image_size = 224;
  cfg.patch_size = 16;
  cfg.channels = 3;
  cfg.embed_dim = 192;
  cfg.heads = 3;
  cfg.depth = 12;
  CHECK(count_locat_params(cfg) == 2340);
  ModelConfig iso = cfg;
  iso.kernel = gaug::KernelKind::isotropic();
  CHECK(count_locat_params(iso) == 1560);
  ModelConfig none = cfg;
  none.scaling = gaug::ScalingKind::None;
  CHECK(count_locat_params(none) == 1560);
  ModelConfig fixed = cfg;
  fixed.kernel = gaug::KernelKind::fixed_width(1.0);
  fixed.scaling = gaug::ScalingKind::None;
  CHECK(count_locat_params(fixed) == 0);
  CHECK(count_locat_params(cfg.vanilla()) == 0);

  const ModelConfig desk = desk_config();
  const ModelParams p = init_params(desk);
  const ModelParams v = init_params(desk.vanilla());
  CHECK(p.parameter_count() - v.parameter_count() == count_locat_params(desk));
}

TEST_CASE("single-head attention matches the scalar-loop oracle") {
  const auto grid = PatchGrid::get(2, 2);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const LayerParams L = testing::single_head_layer(6, seed);
    const Tensor x = random_tensor({5, 6}, 500 + seed);
    const auto [out, evals] = gaug_attention(x, L, *grid, one_head());
    CHECK(max_abs_diff(out, testing::oracle_attention(x, L)) <= 1e-10);
    REQUIRE(evals.size() == 1);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(evals[0].supplement(0, i) == 0.0);
      CHECK(evals[0].supplement(i, 0) == 0.0);
      double s = 0.0;
      for (double w : evals[0].attn_weights.row(i)) s += w;
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("zero locality scale reproduces vanilla attention exactly") {
  const auto grid = PatchGrid::get(3, 3);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ModelConfig cfg = desk_config();
    cfg.image_size = 12;
    cfg.seed = seed;
    const LayerParams L = init_params(cfg).layers[0];
    const Tensor x = random_tensor({10, cfg.embed_dim}, 700 + seed);
    AttentionSpec vanilla = AttentionSpec::from(cfg);
    vanilla.locat = false;
    AttentionSpec zero = AttentionSpec::from(cfg);
    zero.alpha_override = 0.0;
    CHECK(gaug_attention(x, L, *grid, zero).first == gaug_attention(x, L, *grid, vanilla).first);
  }
}

TEST_CASE("strongly negative alpha pre-activation approaches vanilla attention") {
  const auto grid = PatchGrid::get(3, 3);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ModelConfig cfg = desk_config();
    cfg.image_size = 12;
    cfg.seed = seed;
    LayerParams L = init_params(cfg).layers[0];
    L.locality.w_alpha = Tensor(L.locality.w_alpha.shape(), 0.0);
    L.locality.b_alpha = Tensor({1}, -20.0);
    const Tensor x = random_tensor({10, cfg.embed_dim}, 800 + seed);
    AttentionSpec vanilla = AttentionSpec::from(cfg);
    vanilla.locat = false;
    const Tensor a = gaug_attention(x, L, *grid, AttentionSpec::from(cfg)).first;
    const Tensor b = gaug_attention(x, L, *grid, vanilla).first;
    CHECK(max_abs_diff(a, b) <= 1e-6);
    CHECK(max_abs_diff(a, b) > 0.0);
  }
}

TEST_CASE("refinement is permutation equivariant") {
  const Tensor x = random_tensor({17, 32}, 900);
  std::vector<std::size_t> perm(17);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(901);
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  Tensor px({17, 32});
  for (std::size_t i = 0; i < 17; ++i)
    for (std::size_t j = 0; j < 32; ++j) px(i, j) = x(perm[i], j);
  for (std::size_t heads : {1, 2, 4}) {
    const Tensor y = prr::prr_refine(x, heads), py = prr::prr_refine(px, heads);
    double worst = 0.0;
    for (std::size_t i = 0; i < 17; ++i)
      for (std::size_t j = 0; j < 32; ++j) worst = std::max(worst, std::abs(py(i, j) - y(perm[i], j)));
    CHECK(worst <= 1e-12);
  }
  CHECK_THROWS_AS(prr::prr_refine(x, 3), ConfigError);
}

TEST_CASE("pooling variants") {
  const Tensor x = random_tensor({5, 4}, 910);
  const Tensor cls = prr::pool(x, prr::PoolingKind::cls_only(), 1);
  const Tensor gap = prr::pool(x, prr::PoolingKind::gap(), 1);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(cls[j] == x(0, j));
    CHECK(gap[j] == doctest::Approx((x(1, j) + x(2, j) + x(3, j) + x(4, j)) / 4.0).epsilon(1e-14));
  }
  const Tensor refined = prr::prr_refine(x, 2);
  const Tensor pooled = prr::pool(x, prr::PoolingKind::refine(), 2);
  for (std::size_t j = 0; j < 4; ++j) CHECK(pooled[j] == refined(0, j));
}

TEST_CASE("patch extraction and model forward") {
  Tensor image({4, 4, 1});
  for (std::size_t i = 0; i < 16; ++i) image[i] = static_cast<double>(i);
  const Tensor patches = extract_patches(image, 2);
  CHECK(patches.shape() == Shape{4, 4});
  CHECK(patches.row(1)[0] == 2.0);
  CHECK(patches.row(1)[3] == 7.0);
  CHECK(patches.row(2)[0] == 8.0);
  CHECK_THROWS_AS(extract_patches(image, 3), DimensionError);

  const ModelConfig cfg = desk_config();
  const ModelParams params = init_params(cfg);
  const Tensor img = random_tensor({16, 16, 1}, 920);
  const ForwardResult a = forward(img, cfg, params, true);
  const ForwardResult b = forward(img, cfg, params);
  CHECK(a.logits.shape() == Shape{cfg.num_classes});
  CHECK(a.logits == b.logits);
  REQUIRE(a.trace.has_value());
  CHECK(a.trace->layers.size() == cfg.depth);
  CHECK(a.trace->layers[0].heads.size() == cfg.heads);
  CHECK(a.trace->prr_attention.size() == cfg.prr_heads());
  CHECK_THROWS_AS(forward(random_tensor({12, 12, 1}, 1), cfg, params), DimensionError);
}

TEST_CASE("every kernel and scaling variant runs") {
  for (const char* kernel : {"gaussian", "isotropic", "fixed:1.5", "laplace", "inverse"})
    for (const char* scaling : {"learned", "none", "auto"})
      for (const char* source : {"query", "input"}) {
        ModelConfig cfg = desk_config();
        cfg.apply("kernel", kernel);
        cfg.apply("scaling", scaling);
        cfg.apply("sigma_source", source);
        const ModelParams p = init_params(cfg);
        validate_params(cfg, p);
        const Tensor logits = forward(random_tensor({16, 16, 1}, 930), cfg, p).logits;
        CHECK(logits.all_finite());
      }
}

TEST_CASE("parameter validation names the offending tensor") {
  const ModelConfig cfg = desk_config();
  ModelParams p = init_params(cfg);
  p.layers[1].wq = Tensor({3, 3}, 0.0);
  CHECK_THROWS_WITH_AS(validate_params(cfg, p), doctest::Contains("blocks.1.attn.wq"), DimensionError);
  const ModelParams q = init_params(cfg);
  CHECK_THROWS_AS(validate_params(cfg.vanilla(), q), DimensionError);
}

TEST_CASE("initialisation is seeded") {
  ModelConfig cfg = desk_config();
  const ModelParams a = init_params(cfg), b = init_params(cfg);
  cfg.seed = 1;
  const ModelParams c = init_params(cfg);
  CHECK(a.head_w == b.head_w);
  CHECK_FALSE(a.head_w == c.head_w);
}
