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

#include "locat/model.hpp"

#include <cmath>
#include <string_view>

#include "locat/errors.hpp"
#include "locat/kernels.hpp"
#include "locat/prr.hpp"

namespace locat {
namespace {

using gaug::KernelKind;
using gaug::ScalingKind;
using gaug::SigmaSource;

std::size_t width_head_inputs(const ModelConfig& cfg) {
  return cfg.sigma_source == SigmaSource::Input ? cfg.embed_dim : cfg.head_dim();
}

/// Every tensor at its configured shape, zero-filled.
ModelParams blank_params(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t c = cfg.embed_dim;
  const std::size_t hd = cfg.heads * cfg.head_dim();
  const std::size_t hidden = cfg.mlp_hidden();
  ModelParams p;
  p.patch_w = Tensor({cfg.patch_dim(), c});
  p.patch_b = Tensor({c});
  p.cls_token = Tensor({c});
  if (cfg.use_pos_embed) p.pos_embed = Tensor({1 + cfg.num_patches(), c});
  p.layers.resize(cfg.depth);
  for (auto& L : p.layers) {
    L.norm1_gain = Tensor({c});
    L.norm1_shift = Tensor({c});
    L.wq = Tensor({c, hd});
    L.wk = Tensor({c, hd});
    L.wv = Tensor({c, hd});
    L.wo = Tensor({hd, c});
    L.bo = Tensor({c});
    if (cfg.locat_enabled) {
      if (const std::size_t k = cfg.kernel.width_outputs(); k > 0) {
        L.locality.w_sigma = Tensor({width_head_inputs(cfg), k});
        L.locality.b_sigma = Tensor({k});
      }
      if (cfg.scaling == ScalingKind::Learned) {
        L.locality.w_alpha = Tensor({cfg.head_dim(), 1});
        L.locality.b_alpha = Tensor({1});
      }
    }
    L.norm2_gain = Tensor({c});
    L.norm2_shift = Tensor({c});
    L.fc1_w = Tensor({c, hidden});
    L.fc1_b = Tensor({hidden});
    L.fc2_w = Tensor({hidden, c});
    L.fc2_b = Tensor({c});
  }
  if (cfg.final_norm) {
    p.norm_gain = Tensor({c});
    p.norm_shift = Tensor({c});
  }
  p.head_w = Tensor({c, cfg.num_classes});
  p.head_b = Tensor({cfg.num_classes});
  return p;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

ag::Var affine(ag::Var x, const Tensor& w, const Tensor& b) {
  ag::Graph& g = *x.graph;
  return ag::add_row(ag::matmul(x, g.param(w)), g.param(b));
}

struct KernelTerms {
  ag::Var kernel;
  Tensor scale;  // Sigma / gamma / lambda, for capture
};

KernelTerms locality_kernel(ag::Var src, const gaug::LocalityHeadParams& loc,
                            const KernelKind& kind, const PatchGrid& grid) {
  ag::Graph& g = *src.graph;
  const double extent = static_cast<double>(grid.extent());
  switch (kind.type) {
    case KernelKind::Type::Gaussian: {
      ag::Var sigma = ag::bounded_width(affine(src, loc.w_sigma, loc.b_sigma), extent);
      return {ag::gaussian_kernel(sigma, grid), sigma.value()};
    }
    case KernelKind::Type::IsotropicGaussian: {
      ag::Var s1 = ag::bounded_width(affine(src, loc.w_sigma, loc.b_sigma), extent);
      const ag::Var both[] = {s1, s1};
      ag::Var sigma = ag::concat_cols(both);
      return {ag::gaussian_kernel(sigma, grid), sigma.value()};
    }
    case KernelKind::Type::FixedWidth: {
      Tensor sigma({grid.size(), 2}, kind.fixed_sigma * kind.fixed_sigma);
      return {g.constant(gaug::kernel_matrix(sigma, grid, kind)), sigma};
    }
    case KernelKind::Type::Laplace: {
      ag::Var gamma =
          ag::add_scalar(ag::softplus(affine(src, loc.w_sigma, loc.b_sigma)), gaug::kLaplaceFloor);
      return {ag::laplace_kernel(gamma, grid), gamma.value()};
    }
    case KernelKind::Type::InverseDistance: {
      ag::Var lambda = ag::bounded_width(affine(src, loc.w_sigma, loc.b_sigma), extent);
      return {ag::inverse_distance_kernel(lambda, grid), lambda.value()};
    }
  }
  throw ConfigError("unknown kernel kind");
}

ag::Var layer_norm(ag::Var x, const Tensor& gain, const Tensor& shift) {
  ag::Graph& g = *x.graph;
  return ag::layernorm(x, g.param(gain), g.param(shift), nk::kLayerNormEps);
}

ag::Var maybe_drop(ag::Var branch, const ModelConfig& cfg, const ForwardOptions& opts) {
  const double rate = cfg.stochastic_depth_rate;
  if (!opts.drop_path_rng || rate <= 0.0) return branch;
  if (opts.drop_path_rng->uniform() < rate) return ag::scale(branch, 0.0);
  return ag::scale(branch, 1.0 / (1.0 - rate));
}

}  // namespace

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&n](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

ModelParams init_params(const ModelConfig& cfg) {
  ModelParams p = blank_params(cfg);
  Rng rng(cfg.seed);
  p.for_each([&rng](const std::string& name, Tensor& t) {
    if (name == "cls_token" || name == "pos_embed") {
      for (auto& v : t.data()) v = rng.normal(0.0, 0.02);
    } else if (ends_with(name, ".gain")) {
      for (auto& v : t.data()) v = 1.0;
    } else if (t.rank() == 2) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(t.rows()));
      for (auto& v : t.data()) v = rng.uniform(-bound, bound);
    }
    // biases and shifts stay zero
  });
  return p;
}

void validate_params(const ModelConfig& cfg, const ModelParams& params) {
  const ModelParams expected = blank_params(cfg);
  std::vector<std::pair<std::string, Shape>> want, have;
  expected.for_each([&want](const std::string& n, const Tensor& t) { want.emplace_back(n, t.shape()); });
  params.for_each([&have](const std::string& n, const Tensor& t) { have.emplace_back(n, t.shape()); });
  for (std::size_t i = 0; i < std::max(want.size(), have.size()); ++i) {
    if (i >= have.size()) throw DimensionError("missing parameter " + want[i].first);
    if (i >= want.size()) throw DimensionError("unexpected parameter " + have[i].first);
    if (want[i].first != have[i].first) {
      throw DimensionError("parameter " + have[i].first + " where " + want[i].first + " was expected");
    }
    if (want[i].second != have[i].second) {
      throw DimensionError("parameter " + have[i].first + " has shape " +
                           shape_string(have[i].second) + ", config implies " +
                           shape_string(want[i].second));
    }
  }
}

std::size_t count_locat_params(const ModelConfig& cfg) {
  if (!cfg.locat_enabled) return 0;
  const std::size_t width_outputs = cfg.kernel.width_outputs();
  std::size_t per_layer = width_outputs * width_head_inputs(cfg) + width_outputs;
  if (cfg.scaling == ScalingKind::Learned) per_layer += cfg.head_dim() + 1;
  return cfg.depth * per_layer;
}

AttentionSpec AttentionSpec::from(const ModelConfig& cfg) {
  AttentionSpec s;
  s.heads = cfg.heads;
  s.locat = cfg.locat_enabled;
  s.kernel = cfg.kernel;
  s.scaling = cfg.scaling;
  s.sigma_source = cfg.sigma_source;
  return s;
}

ag::Var attention(ag::Var xn, const LayerParams& layer, const AttentionSpec& spec,
                  const PatchGrid& grid, std::vector<gaug::GaugEval>* capture) {
  ag::Graph& g = *xn.graph;
  const std::size_t n = xn.value().rows();
  const std::size_t heads = spec.heads;
  if (heads == 0 || layer.wq.cols() % heads != 0) {
    throw ConfigError("attention: projection width is not divisible by the head count");
  }
  const std::size_t d = layer.wq.cols() / heads;
  if (n != grid.size() + 1) {
    throw DimensionError("attention: " + std::to_string(n) + " tokens for a " +
                         std::to_string(grid.h()) + "x" + std::to_string(grid.w()) +
                         " grid (expected 1 + " + std::to_string(grid.size()) + ")");
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const bool has_width_head = spec.kernel.width_outputs() > 0;

  ag::Var q_all = ag::matmul(xn, g.param(layer.wq));
  ag::Var k_all = ag::matmul(xn, g.param(layer.wk));
  ag::Var v_all = ag::matmul(xn, g.param(layer.wv));

  // The input-driven width head sees the same rows for every head.
  std::optional<KernelTerms> shared_kernel;
  if (spec.locat && (spec.sigma_source == SigmaSource::Input || !has_width_head)) {
    shared_kernel = locality_kernel(ag::slice_rows(xn, 1, n), layer.locality, spec.kernel, grid);
  }

  std::vector<ag::Var> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    auto head_slice = [&](ag::Var all) {
      return heads == 1 ? all : ag::slice_cols(all, h * d, (h + 1) * d);
    };
    ag::Var q = head_slice(q_all);
    ag::Var k = head_slice(k_all);
    ag::Var v = head_slice(v_all);
    ag::Var logits = ag::scale(ag::matmul_nt(q, k), inv_sqrt_d);

    gaug::GaugEval eval;
    ag::Var weights;
    if (!spec.locat) {
      weights = ag::softmax_rows(logits);
    } else {
      ag::Var q_sp = ag::slice_rows(q, 1, n);
      KernelTerms terms =
          shared_kernel ? *shared_kernel : locality_kernel(q_sp, layer.locality, spec.kernel, grid);
      ag::Var supplement;
      if (spec.alpha_override) {
        ag::Var alpha = g.constant(Tensor({grid.size(), 1}, *spec.alpha_override));
        supplement = ag::supplement(alpha, terms.kernel);
        if (capture) eval.alpha = alpha.value().reshaped({grid.size()});
      } else {
        switch (spec.scaling) {
          case ScalingKind::Learned: {
            ag::Var alpha = ag::softplus(affine(q_sp, layer.locality.w_alpha, layer.locality.b_alpha));
            supplement = ag::supplement(alpha, terms.kernel);
            if (capture) eval.alpha = alpha.value().reshaped({grid.size()});
            break;
          }
          case ScalingKind::None:
            supplement = ag::supplement_unscaled(terms.kernel);
            if (capture) eval.alpha = Tensor({grid.size()}, 1.0);
            break;
          case ScalingKind::Auto: {
            ag::Var alpha = ag::auto_alpha_bar(q, k);
            supplement = ag::supplement(alpha, terms.kernel);
            if (capture) eval.alpha = alpha.value().reshaped({grid.size()});
            break;
          }
        }
      }
      weights = ag::softmax_rows(logits, supplement);
      if (capture) {
        eval.sigma = terms.scale;
        eval.kernel = terms.kernel.value();
        eval.supplement = supplement.value();
      }
    }
    if (capture) {
      eval.attn_weights = weights.value();
      capture->push_back(std::move(eval));
    }
    outputs.push_back(ag::matmul(weights, v));
  }
  ag::Var z = heads == 1 ? outputs.front() : ag::concat_cols(outputs);
  return affine(z, layer.wo, layer.bo);
}

std::pair<Tensor, std::vector<gaug::GaugEval>> gaug_attention(const Tensor& x,
                                                             const LayerParams& layer,
                                                             const PatchGrid& grid,
                                                             const AttentionSpec& spec) {
  ag::Graph g(false);
  std::vector<gaug::GaugEval> evals;
  ag::Var out = attention(g.constant(x), layer, spec, grid, &evals);
  return {out.value(), std::move(evals)};
}

Tensor extract_patches(const Tensor& image, std::size_t patch_size) {
  if (image.rank() != 3) {
    throw DimensionError("image must be [H x W x channels], got " + shape_string(image.shape()));
  }
  const std::size_t hp = image.dim(0), wp = image.dim(1), ch = image.dim(2);
  if (patch_size == 0 || hp % patch_size != 0 || wp % patch_size != 0) {
    throw DimensionError("image " + shape_string(image.shape()) + " is not divisible into " +
                         std::to_string(patch_size) + "-pixel patches");
  }
  const std::size_t gh = hp / patch_size, gw = wp / patch_size;
  const std::size_t pd = patch_size * patch_size * ch;
  Tensor out({gh * gw, pd});
  for (std::size_t pi = 0; pi < gh; ++pi)
    for (std::size_t pj = 0; pj < gw; ++pj)
      for (std::size_t y = 0; y < patch_size; ++y)
        for (std::size_t x = 0; x < patch_size; ++x)
          for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t src = ((pi * patch_size + y) * wp + (pj * patch_size + x)) * ch + c;
            out(pi * gw + pj, (y * patch_size + x) * ch + c) = image[src];
          }
  return out;
}

ag::Var patch_embed(ag::Graph& g, const Tensor& image, const ModelConfig& cfg,
                    const ModelParams& params) {
  if (image.rank() != 3 || image.dim(0) != cfg.image_size || image.dim(1) != cfg.image_size ||
      image.dim(2) != cfg.channels) {
    throw DimensionError("image shape " + shape_string(image.shape()) + " does not match config [" +
                         std::to_string(cfg.image_size) + "x" + std::to_string(cfg.image_size) +
                         "x" + std::to_string(cfg.channels) + "]");
  }
  ag::Var patches = g.constant(extract_patches(image, cfg.patch_size));
  ag::Var tokens = affine(patches, params.patch_w, params.patch_b);
  const ag::Var rows[] = {g.param(params.cls_token), tokens};
  ag::Var x = ag::concat_rows(rows);
  if (cfg.use_pos_embed) x = ag::add(x, g.param(params.pos_embed));
  return x;
}

Tensor patch_embed(const Tensor& image, const ModelConfig& cfg, const ModelParams& params) {
  ag::Graph g(false);
  return patch_embed(g, image, cfg, params).value();
}

ag::Var encoder_layer(ag::Var x, const LayerParams& layer, const ModelConfig& cfg,
                      const PatchGrid& grid, const ForwardOptions& opts,
                      std::vector<gaug::GaugEval>* capture) {
  AttentionSpec spec = AttentionSpec::from(cfg);
  spec.alpha_override = opts.alpha_override;
  ag::Graph& g = *x.graph;

  ag::Var attn = attention(layer_norm(x, layer.norm1_gain, layer.norm1_shift), layer, spec, grid,
                           capture);
  ag::Var x1 = ag::add(x, maybe_drop(attn, cfg, opts));

  ag::Var h = layer_norm(x1, layer.norm2_gain, layer.norm2_shift);
  h = ag::gelu(ag::add_row(ag::matmul(h, g.param(layer.fc1_w)), g.param(layer.fc1_b)));
  h = ag::add_row(ag::matmul(h, g.param(layer.fc2_w)), g.param(layer.fc2_b));
  return ag::add(x1, maybe_drop(h, cfg, opts));
}

Tensor encoder_layer(const Tensor& x, const LayerParams& layer, const ModelConfig& cfg,
                     const PatchGrid& grid) {
  ag::Graph g(false);
  return encoder_layer(g.constant(x), layer, cfg, grid, ForwardOptions{}).value();
}

GraphOutput forward_graph(ag::Graph& g, const ModelConfig& cfg, const ModelParams& params,
                          const Tensor& image, const ForwardOptions& opts, Trace* trace) {
  if (params.layers.size() != cfg.depth) throw DimensionError("parameter depth differs from config");
  const auto grid = PatchGrid::get(cfg.grid_side(), cfg.grid_side());
  const bool capture = opts.capture && trace != nullptr;

  ag::Var x = patch_embed(g, image, cfg, params);
  if (capture) {
    trace->embeddings = x.value();
    trace->layers.clear();
    trace->prr_attention.clear();
  }
  for (const auto& layer : params.layers) {
    LayerTrace lt;
    x = encoder_layer(x, layer, cfg, *grid, opts, capture ? &lt.heads : nullptr);
    if (capture) {
      lt.output = x.value();
      trace->layers.push_back(std::move(lt));
    }
  }
  ag::Var tokens = cfg.final_norm ? layer_norm(x, params.norm_gain, params.norm_shift) : x;
  ag::Var pooled =
      prr::pool(tokens, cfg.pooling, cfg.heads, capture ? &trace->prr_attention : nullptr);
  ag::Var logits = affine(pooled, params.head_w, params.head_b);
  if (capture) trace->tokens = tokens.value();
  return {logits, tokens, pooled};
}

ForwardResult forward(const Tensor& image, const ModelConfig& cfg, const ModelParams& params,
                      bool capture) {
  ag::Graph g(false);
  ForwardResult result;
  Trace trace;
  ForwardOptions opts;
  opts.capture = capture;
  GraphOutput out = forward_graph(g, cfg, params, image, opts, capture ? &trace : nullptr);
  result.logits = out.logits.value().reshaped({cfg.num_classes});
  if (capture) result.trace = std::move(trace);
  return result;
}

}  // namespace locat
