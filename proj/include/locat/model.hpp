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
#include <optional>
#include <string>
#include <vector>

#include "locat/autograd.hpp"
#include "locat/config.hpp"
#include "locat/gaug.hpp"
#include "locat/patch_grid.hpp"
#include "locat/rng.hpp"
#include "locat/tensor.hpp"

namespace locat {

/// Weights of one pre-norm encoder block. Projections for all heads are
/// stored side by side: head h owns columns [h*d, (h+1)*d) of wq/wk/wv.
struct LayerParams {
  Tensor norm1_gain, norm1_shift;
  Tensor wq, wk, wv;  // [C x H*d]
  Tensor wo;          // [H*d x C]
  Tensor bo;          // [C]
  gaug::LocalityHeadParams locality;
  Tensor norm2_gain, norm2_shift;
  Tensor fc1_w, fc1_b;  // [C x hidden], [hidden]
  Tensor fc2_w, fc2_b;  // [hidden x C], [C]
};

struct ModelParams {
  Tensor patch_w, patch_b;  // [p*p*ch x C], [C]
  Tensor cls_token;         // [C]
  Tensor pos_embed;         // [(1+hw) x C], empty without positional embeddings
  std::vector<LayerParams> layers;
  Tensor norm_gain, norm_shift;  // empty without the final norm
  Tensor head_w, head_b;         // [C x K], [K]

  /// Visits every present tensor with a stable dotted name, in a fixed order.
  template <class F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  std::size_t parameter_count() const;

 private:
  template <class Self, class F>
  static void visit(Self& self, F& f);
};

/// Seeded initialisation: CLS token and positional embeddings ~ N(0, 0.02),
/// projections ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0, norm gains 1.
ModelParams init_params(const ModelConfig& cfg);

/// Checks that every tensor has the shape the config implies.
void validate_params(const ModelConfig& cfg, const ModelParams& params);

/// Parameters added by the locality heads over the vanilla model.
std::size_t count_locat_params(const ModelConfig& cfg);

/// Attention settings of one layer, derived from a ModelConfig.
struct AttentionSpec {
  std::size_t heads = 1;
  bool locat = true;
  gaug::KernelKind kernel = gaug::KernelKind::gaussian();
  gaug::ScalingKind scaling = gaug::ScalingKind::Learned;
  gaug::SigmaSource sigma_source = gaug::SigmaSource::Query;
  /// Replaces every row scale alpha by this constant when set.
  std::optional<double> alpha_override;

  static AttentionSpec from(const ModelConfig& cfg);
};

struct ForwardOptions {
  bool capture = false;
  std::optional<double> alpha_override;
  /// Enables stochastic depth when non-null and the configured rate is > 0.
  Rng* drop_path_rng = nullptr;
};

struct LayerTrace {
  Tensor output;                       // x^(l)
  std::vector<gaug::GaugEval> heads;  // attention maps (and locality terms if enabled)
};

struct Trace {
  Tensor embeddings;  // x^(0)
  std::vector<LayerTrace> layers;
  Tensor tokens;                      // sequence handed to the pooling head
  std::vector<Tensor> prr_attention;  // one map per refinement head
};

/// Differentiable attention over normalised tokens `xn` [(1+hw) x C].
ag::Var attention(ag::Var xn, const LayerParams& layer, const AttentionSpec& spec,
                  const PatchGrid& grid, std::vector<gaug::GaugEval>* capture = nullptr);

/// Plain-value attention; returns the output and one GaugEval per head.
std::pair<Tensor, std::vector<gaug::GaugEval>> gaug_attention(const Tensor& x,
                                                             const LayerParams& layer,
                                                             const PatchGrid& grid,
                                                             const AttentionSpec& spec);

/// [hw x p*p*ch] flattened non-overlapping patches of an [H x W x ch] image.
Tensor extract_patches(const Tensor& image, std::size_t patch_size);

ag::Var patch_embed(ag::Graph& g, const Tensor& image, const ModelConfig& cfg,
                    const ModelParams& params);
Tensor patch_embed(const Tensor& image, const ModelConfig& cfg, const ModelParams& params);

ag::Var encoder_layer(ag::Var x, const LayerParams& layer, const ModelConfig& cfg,
                      const PatchGrid& grid, const ForwardOptions& opts,
                      std::vector<gaug::GaugEval>* capture = nullptr);
Tensor encoder_layer(const Tensor& x, const LayerParams& layer, const ModelConfig& cfg,
                     const PatchGrid& grid);

struct GraphOutput {
  ag::Var logits;  // [1 x K]
  ag::Var tokens;  // pooling input, [(1+hw) x C]
  ag::Var pooled;  // [1 x C]
};

GraphOutput forward_graph(ag::Graph& g, const ModelConfig& cfg, const ModelParams& params,
                          const Tensor& image, const ForwardOptions& opts = {},
                          Trace* trace = nullptr);

struct ForwardResult {
  Tensor logits;  // [K]
  std::optional<Trace> trace;
};

ForwardResult forward(const Tensor& image, const ModelConfig& cfg, const ModelParams& params,
                      bool capture = false);

// ---------------------------------------------------------------------------

template <class Self, class F>
void ModelParams::visit(Self& self, F& f) {
  auto emit = [&f](const std::string& name, auto& t) {
    if (!t.empty()) f(name, t);
  };
  emit("patch_embed.weight", self.patch_w);
  emit("patch_embed.bias", self.patch_b);
  emit("cls_token", self.cls_token);
  emit("pos_embed", self.pos_embed);
  for (std::size_t l = 0; l < self.layers.size(); ++l) {
    auto& L = self.layers[l];
    const std::string p = "blocks." + std::to_string(l) + ".";
    emit(p + "norm1.gain", L.norm1_gain);
    emit(p + "norm1.shift", L.norm1_shift);
    emit(p + "attn.wq", L.wq);
    emit(p + "attn.wk", L.wk);
    emit(p + "attn.wv", L.wv);
    emit(p + "attn.wo", L.wo);
    emit(p + "attn.bo", L.bo);
    emit(p + "attn.locality.w_sigma", L.locality.w_sigma);
    emit(p + "attn.locality.b_sigma", L.locality.b_sigma);
    emit(p + "attn.locality.w_alpha", L.locality.w_alpha);
    emit(p + "attn.locality.b_alpha", L.locality.b_alpha);
    emit(p + "norm2.gain", L.norm2_gain);
    emit(p + "norm2.shift", L.norm2_shift);
    emit(p + "mlp.fc1.weight", L.fc1_w);
    emit(p + "mlp.fc1.bias", L.fc1_b);
    emit(p + "mlp.fc2.weight", L.fc2_w);
    emit(p + "mlp.fc2.bias", L.fc2_b);
  }
  emit("norm.gain", self.norm_gain);
  emit("norm.shift", self.norm_shift);
  emit("head.weight", self.head_w);
  emit("head.bias", self.head_b);
}

}  // namespace locat
