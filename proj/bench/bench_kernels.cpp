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

// Parallel kernels against their serial references, plus one batch gradient.

#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "locat/data.hpp"
#include "locat/kernels.hpp"
#include "locat/model.hpp"
#include "locat/rng.hpp"
#include "locat/train.hpp"

namespace {

using locat::Tensor;

Tensor noise(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  locat::Rng rng(seed);
  Tensor t({rows, cols});
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

template <Tensor (*Fn)(const Tensor&, const Tensor&)>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = noise(n, n, 1), b = noise(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul<locat::nk::matmul>)->Name("matmul/parallel")->Arg(64)->Arg(192);
BENCHMARK(BM_Matmul<locat::nk::ref::matmul>)->Name("matmul/ref")->Arg(64)->Arg(192);

template <Tensor (*Fn)(const Tensor&)>
void BM_Rows(benchmark::State& state) {
  const Tensor x = noise(static_cast<std::size_t>(state.range(0)), 192, 3);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(x));
}
BENCHMARK(BM_Rows<locat::nk::softmax_rows>)->Name("softmax/parallel")->Arg(197);
BENCHMARK(BM_Rows<locat::nk::ref::softmax_rows>)->Name("softmax/ref")->Arg(197);
BENCHMARK(BM_Rows<locat::nk::gelu>)->Name("gelu/parallel")->Arg(197);
BENCHMARK(BM_Rows<locat::nk::ref::gelu>)->Name("gelu/ref")->Arg(197);

template <Tensor (*Fn)(const Tensor&, const Tensor&, const Tensor&, double)>
void BM_LayerNorm(benchmark::State& state) {
  const Tensor x = noise(static_cast<std::size_t>(state.range(0)), 192, 4);
  const Tensor gain({192}, 1.0), shift({192}, 0.0);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(x, gain, shift, locat::nk::kLayerNormEps));
}
BENCHMARK(BM_LayerNorm<locat::nk::layernorm>)->Name("layernorm/parallel")->Arg(197);
BENCHMARK(BM_LayerNorm<locat::nk::ref::layernorm>)->Name("layernorm/ref")->Arg(197);

void BM_BatchGradient(benchmark::State& state) {
  const locat::train::RunConfig rc;
  const auto params = locat::init_params(rc.model);
  const auto samples = locat::data::generate_dataset(rc.motif_task(), rc.batch_size);
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (auto _ : state) benchmark::DoNotOptimize(locat::train::batch_gradient(rc.model, params, samples, idx));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(idx.size()));
}
BENCHMARK(BM_BatchGradient)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
