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
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "doctest.h"
#include "locat/analytics.hpp"
#include "locat/errors.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace locat;
using namespace locat::analytics;
using locat::testing::random_tensor;

using locat::testing::loop_cosine;

TEST_CASE("locality score matches a neighbour loop") {
  const PatchGrid grid(6, 6);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Tensor f = random_tensor({36, 8}, 40 + seed);
    CHECK(std::abs(locality_score(f, grid) - testing::loop_locality(f, 6, 6)) <= 1e-10);
  }
}

TEST_CASE("locality score of special feature maps") {
  const PatchGrid grid(4, 4);
  CHECK(locality_score(Tensor({16, 3}, 2.0), grid) == doctest::Approx(1.0).epsilon(1e-14));
  // 2x2 checkerboard: two edge neighbours opposite, one diagonal neighbour equal.
  const Tensor board({4, 1}, std::vector<double>{1.0, -1.0, -1.0, 1.0});
  CHECK(locality_score(board, PatchGrid(2, 2)) == doctest::Approx(-1.0 / 3.0).epsilon(1e-14));
  // Orthogonal checkerboard: edge neighbours contribute 0, the diagonal 1.
  const Tensor ortho({4, 2}, std::vector<double>{1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0});
  CHECK(locality_score(ortho, PatchGrid(2, 2)) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(locality_score(ortho, PatchGrid(2, 2)) == doctest::Approx(testing::loop_locality(ortho, 2, 2)).epsilon(1e-14));
  Tensor zeros({16, 3}, 0.0);
  CHECK(locality_score(zeros, grid) == 0.0);
  CHECK_THROWS_AS(locality_score(Tensor({15, 3}, 1.0), grid), DimensionError);
}

TEST_CASE("CLS similarity matches a loop") {
  const Tensor x = random_tensor({37, 8}, 50);
  double s = 0.0;
  for (std::size_t p = 1; p < 37; ++p) s += loop_cosine(x, p, 0);
  CHECK(std::abs(cls_similarity(x) - s / 36.0) <= 1e-10);
}

TEST_CASE("percentiles interpolate between ranks") {
  const std::vector<double> v = {1.0, 2.0, 3.0, 4.0};
  CHECK(percentile(v, 0.5) == 2.5);
  CHECK(percentile(v, 0.0) == 1.0);
  CHECK(percentile(v, 1.0) == 4.0);
  CHECK(percentile(v, 0.1) == doctest::Approx(1.3));
  CHECK_THROWS_AS(percentile(v, 1.5), DomainError);
}

TEST_CASE("sigma statistics report standard deviations") {
  gaug::GaugEval e;
  e.sigma = Tensor({2, 2}, std::vector<double>{1.0, 4.0, 9.0, 16.0});
  const auto stats = sigma_statistics({{e}});
  REQUIRE(stats[0].sigma.has_value());
  CHECK(stats[0].sigma->median == 2.5);
  CHECK(stats[0].sigma->mean == 2.5);

  // Random variances against a sort oracle.
  Rng rng(60);
  std::vector<std::vector<gaug::GaugEval>> layers(1);
  std::vector<double> all;
  for (int h = 0; h < 3; ++h) {
    gaug::GaugEval ev;
    ev.sigma = Tensor({36, 2});
    for (auto& v : ev.sigma.data()) {
      v = rng.uniform(0.1, 6.0);
      all.push_back(std::sqrt(v));
    }
    layers[0].push_back(ev);
  }
  std::sort(all.begin(), all.end());
  const auto s = sigma_statistics(layers)[0].sigma.value();
  auto oracle = [&all](double q) {
    const double pos = q * static_cast<double>(all.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    return all[lo] + (pos - static_cast<double>(lo)) * (all[std::min(lo + 1, all.size() - 1)] - all[lo]);
  };
  double mean = 0.0;
  for (double v : all) mean += v / static_cast<double>(all.size());
  CHECK(std::abs(s.mean - mean) <= 1e-10);
  CHECK(std::abs(s.median - oracle(0.5)) <= 1e-10);
  CHECK(std::abs(s.p10 - oracle(0.1)) <= 1e-10);
  CHECK(std::abs(s.p30 - oracle(0.3)) <= 1e-10);
  CHECK(std::abs(s.p70 - oracle(0.7)) <= 1e-10);
  CHECK(std::abs(s.p90 - oracle(0.9)) <= 1e-10);

  gaug::GaugEval laplace;
  laplace.sigma = Tensor({4, 1}, 1.0);
  CHECK_FALSE(sigma_statistics({{laplace}})[0].sigma.has_value());
}

TEST_CASE("stats CSV layout") {
  LayerStats s;
  s.layer = 2;
  s.locality_score = 0.5;
  s.cls_similarity = 0.25;
  std::ostringstream out;
  write_stats_csv(out, std::vector<LayerStats>{s});
  CHECK(out.str() == "layer,metric,value\n2,locality_score,0.5\n2,cls_similarity,0.25\n");
}

TEST_CASE("attention maps export to CSV and PGM") {
  AttentionMap m{2, 3, {0.1, 0.2, 0.3, 0.4, 0.5, 0.7}};
  const AttentionMap back = parse_csv_map(to_csv(m));
  CHECK(back.h == 2);
  CHECK(back.w == 3);
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(back.weights[i] - m.weights[i]) <= 1e-9);

  const auto pgm = to_pgm(m);
  const std::string header = "P5\n3 2\n255\n";
  REQUIRE(pgm.size() == header.size() + 6);
  CHECK(std::string(pgm.begin(), pgm.begin() + static_cast<std::ptrdiff_t>(header.size())) == header);
  CHECK(pgm[header.size()] == 0);
  CHECK(pgm.back() == 255);

  const auto flat = to_pgm(AttentionMap{1, 2, {0.5, 0.5}});
  CHECK(flat[flat.size() - 1] == 0);
  CHECK(flat[flat.size() - 2] == 0);
}

TEST_CASE("attention maps come from a traced forward pass") {
  const ModelConfig cfg = desk_config();
  const ModelParams params = init_params(cfg);
  const auto trace = *forward(random_tensor({16, 16, 1}, 70), cfg, params, true).trace;
  const auto grid = PatchGrid::get(4, 4);
  const AttentionMap m = attention_map(trace, *grid, 5, AttentionSource::parse("1"));
  double s = 0.0;
  for (double v : m.weights) s += v;
  const double cls_col = 0.5 * (trace.layers[1].heads[0].attn_weights(5, 0) +
                                trace.layers[1].heads[1].attn_weights(5, 0));
  CHECK(std::abs(s + cls_col - 1.0) <= 1e-12);
  const AttentionMap h1 = attention_map(trace, *grid, 5, AttentionSource::parse("1"), 1);
  CHECK(h1.weights[3] == trace.layers[1].heads[1].attn_weights(5, 4));
  CHECK_NOTHROW(attention_map(trace, *grid, 0, AttentionSource::parse("prr")));
  CHECK_THROWS_AS(attention_map(trace, *grid, 0, AttentionSource::parse("7")), RangeError);
  CHECK_THROWS_AS(attention_map(trace, *grid, 17, AttentionSource::parse("0")), RangeError);

  const auto prefix = std::filesystem::temp_directory_path() / "locat_test_attn";
  export_attention(trace, *grid, 5, AttentionSource::parse("prr"), prefix);
  std::ifstream csv(prefix.string() + ".csv");
  const std::string text((std::istreambuf_iterator<char>(csv)), std::istreambuf_iterator<char>());
  CHECK(parse_csv_map(text).weights.size() == 16);
  CHECK(std::filesystem::file_size(prefix.string() + ".pgm") == std::string("P5\n4 4\n255\n").size() + 16);
}

TEST_CASE("layer statistics over traces") {
  const ModelConfig cfg = desk_config();
  const ModelParams params = init_params(cfg);
  std::vector<Trace> traces;
  for (std::uint64_t s = 0; s < 3; ++s) traces.push_back(*forward(random_tensor({16, 16, 1}, 80 + s), cfg, params, true).trace);
  const auto stats = layer_statistics(traces, *PatchGrid::get(4, 4));
  REQUIRE(stats.size() == cfg.depth);
  for (const auto& s : stats) {
    CHECK(s.sigma.has_value());
    CHECK(s.sigma->p10 <= s.sigma->median);
    CHECK(s.sigma->median <= s.sigma->p90);
    CHECK(s.sigma->p90 <= 2.0 + 1e-12);  // sqrt of max(h, w) = 4
  }
}
