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

#include "locat/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include "locat/autograd.hpp"
#include "locat/errors.hpp"
#include "locat/kernels.hpp"
#include "locat/rng.hpp"

namespace locat::grad {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), kRelativeFloor});
}

Tensor finite_diff(const std::function<double(const Tensor&)>& f, const Tensor& x, double step) {
  if (!(step > 0.0)) throw DomainError("finite_diff: step must be > 0");
  Tensor probe = x;
  Tensor out(x.shape(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = f(probe);
    probe[i] = x[i] - step;
    const double down = f(probe);
    probe[i] = x[i];
    out[i] = (up - down) / (2.0 * step);
  }
  return out;
}

double model_loss(const ModelConfig& cfg, const ModelParams& params, const Tensor& image,
                  std::size_t label) {
  ag::Graph g(false);
  const GraphOutput out = forward_graph(g, cfg, params, image);
  return ag::cross_entropy(out.logits, label).value()[0];
}

std::vector<NamedTensor> model_gradients(const ModelConfig& cfg, const ModelParams& params,
                                         const Tensor& image, std::size_t label, double* loss) {
  ag::Graph g;
  const GraphOutput out = forward_graph(g, cfg, params, image);
  const ag::Var l = ag::cross_entropy(out.logits, label);
  g.backward(l);
  if (loss) *loss = l.value()[0];
  std::vector<NamedTensor> grads;
  params.for_each([&](const std::string& name, const Tensor& t) { grads.push_back({name, g.grad_of(t)}); });
  return grads;
}

std::vector<NamedTensor> model_finite_diff(const ModelConfig& cfg, const ModelParams& params,
                                           const Tensor& image, std::size_t label, double step) {
  if (!(step > 0.0)) throw DomainError("finite_diff: step must be > 0");
  std::vector<NamedTensor> grads;
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  params.for_each([&](const std::string& name, const Tensor& t) {
    for (std::size_t j = 0; j < t.size(); ++j) coords.emplace_back(grads.size(), j);
    grads.push_back({name, Tensor(t.shape(), 0.0)});
  });

  std::exception_ptr error;
#pragma omp parallel
  {
    ModelParams local = params;
    std::vector<Tensor*> tensors;
    local.for_each([&tensors](const std::string&, Tensor& t) { tensors.push_back(&t); });
#pragma omp for schedule(dynamic, 16)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(coords.size()); ++k) {
      const auto [ti, j] = coords[static_cast<std::size_t>(k)];
      Tensor& t = *tensors[ti];
      const double orig = t[j];
      try {
        t[j] = orig + step;
        const double up = model_loss(cfg, local, image, label);
        t[j] = orig - step;
        const double down = model_loss(cfg, local, image, label);
        grads[ti].value[j] = (up - down) / (2.0 * step);
      } catch (...) {
#pragma omp critical
        if (!error) error = std::current_exception();
      }
      t[j] = orig;
    }
  }
  if (error) std::rethrow_exception(error);
  return grads;
}

double GradReport::max_rel_err() const {
  double m = 0.0;
  for (const auto& r : rows) m = std::max(m, r.max_rel_err);
  return m;
}

void GradReport::write_csv(std::ostream& out) const {
  out << "parameter,max_rel_err,max_abs_grad\n";
  for (const auto& r : rows) {
    out << r.parameter << ',' << format_double(r.max_rel_err) << ',' << format_double(r.max_abs_grad)
        << '\n';
  }
}

GradReport compare(const std::vector<NamedTensor>& analytic, const std::vector<NamedTensor>& numeric) {
  if (analytic.size() != numeric.size()) throw DimensionError("compare: gradient lists differ in length");
  GradReport report;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const auto& a = analytic[i];
    const auto& n = numeric[i];
    if (a.name != n.name || a.value.shape() != n.value.shape()) {
      throw DimensionError("compare: mismatched entry '" + a.name + "' vs '" + n.name + "'");
    }
    GradRow row{a.name, 0.0, 0.0};
    for (std::size_t j = 0; j < a.value.size(); ++j) {
      row.max_rel_err = std::max(row.max_rel_err, relative_error(a.value[j], n.value[j]));
      row.max_abs_grad = std::max(row.max_abs_grad, std::abs(a.value[j]));
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

GradcheckCase make_case(const ModelConfig& cfg, std::uint64_t seed) {
  GradcheckCase c;
  c.cfg = cfg;
  c.cfg.seed = seed;
  c.params = init_params(c.cfg);
  Rng rng(Rng::derive(seed, 0x6772'6164ULL));
  c.params.for_each([&rng](const std::string&, Tensor& t) {
    for (auto& v : t.data()) v += rng.normal(0.0, 0.1);
  });
  c.image = Tensor({cfg.image_size, cfg.image_size, cfg.channels});
  for (auto& v : c.image.data()) v = rng.normal();
  c.label = static_cast<std::size_t>(rng.below(cfg.num_classes));
  return c;
}

GradReport gradcheck(const GradcheckCase& c, double step) {
  const auto analytic = model_gradients(c.cfg, c.params, c.image, c.label);
  const auto numeric = model_finite_diff(c.cfg, c.params, c.image, c.label, step);
  return compare(analytic, numeric);
}

FlowReport gradient_flow_probe(const ModelConfig& cfg, const ModelParams& params,
                               const Tensor& image, std::size_t label) {
  ag::Graph g;
  const GraphOutput out = forward_graph(g, cfg, params, image);
  g.backward(ag::cross_entropy(out.logits, label));
  FlowReport r;
  auto norm = [&g](const Tensor& t) { return t.empty() ? 0.0 : nk::frobenius_norm(g.grad_of(t)); };
  for (const auto& layer : params.layers) {
    r.w_sigma.push_back(norm(layer.locality.w_sigma));
    r.b_sigma.push_back(norm(layer.locality.b_sigma));
    r.w_alpha.push_back(norm(layer.locality.w_alpha));
    r.b_alpha.push_back(norm(layer.locality.b_alpha));
  }
  const Tensor* tg = g.grad(out.tokens);
  const Tensor& tokens = out.tokens.value();
  const std::size_t hw = tokens.rows() - 1, c = tokens.cols();
  r.token_grads = Tensor({hw, c}, 0.0);
  if (tg) std::copy(tg->data().begin() + static_cast<std::ptrdiff_t>(c), tg->data().end(),
                    r.token_grads.data().begin());
  for (std::size_t p = 0; p < hw; ++p) {
    double s = 0.0;
    for (double v : r.token_grads.row(p)) s += v * v;
    r.token_norms.push_back(std::sqrt(s));
  }
  return r;
}

}  // namespace locat::grad
