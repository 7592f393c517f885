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

#include "locat/autograd.hpp"

#include <cmath>
#include <string>

#include "locat/errors.hpp"
#include "locat/kernels.hpp"

namespace locat::ag {

const Tensor& Var::value() const {
  if (!valid()) throw Error("ag::Var: empty handle");
  return graph->value(*this);
}

Graph::Node& Graph::node(Var v) {
  if (v.graph != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw Error("ag::Graph: variable does not belong to this graph");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Graph::Node& Graph::node(Var v) const {
  if (v.graph != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw Error("ag::Graph: variable does not belong to this graph");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

Var Graph::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("constant: non-finite value");
  Node n;
  n.owned = std::move(value);
  n.op = "constant";
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Graph::param(const Tensor& value) {
  if (auto it = params_.find(&value); it != params_.end()) return {this, it->second};
  if (!value.all_finite()) throw NumericError("param: non-finite value");
  Node n;
  n.borrowed = &value;
  n.op = "param";
  n.requires_grad = record_;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size() - 1);
  params_.emplace(&value, id);
  return {this, id};
}

const Tensor& Graph::value(Var v) const { return node(v).value(); }

bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

Var Graph::record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(fn));
}

Var Graph::record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs_grad = false;
  for (const Var& in : inputs) needs_grad = needs_grad || node(in).requires_grad;
  if (!value.all_finite()) throw NumericError(std::string(op) + ": non-finite output");
  Node n;
  n.owned = std::move(value);
  n.op = op;
  n.requires_grad = record_ && needs_grad;
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

void Graph::accumulate(Var v, const Tensor& g) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  if (g.size() != n.value().size()) {
    throw DimensionError(std::string("backward into ") + n.op + ": gradient shape " +
                         shape_string(g.shape()) + " vs value " + shape_string(n.value().shape()));
  }
  if (!n.grad) {
    n.grad = g.shape() == n.value().shape() ? g : g.reshaped(n.value().shape());
  } else {
    nk::add_inplace(*n.grad, g);
  }
}

void Graph::backward(Var loss) {
  if (value(loss).size() != 1) throw DimensionError("backward: loss must be a scalar");
  backward(loss, Tensor(value(loss).shape(), 1.0));
}

void Graph::backward(Var out, const Tensor& seed) {
  if (!record_) throw Error("backward: graph was built without recording");
  for (auto& n : nodes_) n.grad.reset();
  Node& root = node(out);
  if (seed.size() != root.value().size()) throw DimensionError("backward: seed shape mismatch");
  if (!root.requires_grad) return;
  root.grad = seed.reshaped(root.value().shape());
  for (int id = out.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.grad || !n.backward) continue;
    if (!n.grad->all_finite()) throw NumericError(std::string(n.op) + ": non-finite gradient");
    n.backward(*this, *n.grad);
  }
}

const Tensor* Graph::grad(Var v) const {
  const Node& n = node(v);
  return n.grad ? &*n.grad : nullptr;
}

Tensor Graph::grad_of(const Tensor& param) const {
  auto it = params_.find(&param);
  if (it != params_.end()) {
    const Node& n = nodes_[static_cast<std::size_t>(it->second)];
    if (n.grad) return *n.grad;
  }
  return param.empty() ? Tensor() : Tensor(param.shape(), 0.0);
}

bool Graph::has_param(const Tensor& param) const { return params_.contains(&param); }

namespace {

Graph& graph_of(Var a) {
  if (!a.valid()) throw Error("ag: empty variable");
  return *a.graph;
}

Graph& graph_of(Var a, Var b) {
  if (a.graph != b.graph) throw Error("ag: variables from different graphs");
  return graph_of(a);
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  return g.record("matmul", nk::matmul(a.value(), b.value()), {a, b},
                  [a, b](Graph& gr, const Tensor& go) {
                    if (gr.requires_grad(a)) gr.accumulate(a, nk::matmul_nt(go, b.value()));
                    if (gr.requires_grad(b)) gr.accumulate(b, nk::matmul_tn(a.value(), go));
                  });
}

Var matmul_nt(Var a, Var b) {
  Graph& g = graph_of(a, b);
  return g.record("matmul_nt", nk::matmul_nt(a.value(), b.value()), {a, b},
                  [a, b](Graph& gr, const Tensor& go) {
                    if (gr.requires_grad(a)) gr.accumulate(a, nk::matmul(go, b.value()));
                    if (gr.requires_grad(b)) gr.accumulate(b, nk::matmul_tn(go, a.value()));
                  });
}

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  return g.record("add", nk::add(a.value(), b.value()), {a, b},
                  [a, b](Graph& gr, const Tensor& go) {
                    gr.accumulate(a, go);
                    gr.accumulate(b, go);
                  });
}

Var add_row(Var a, Var bias) {
  Graph& g = graph_of(a, bias);
  const Tensor& x = a.value();
  const Tensor& b = bias.value();
  require_matrix(x, "add_row");
  if (b.size() != x.cols()) {
    throw DimensionError("add_row: bias of " + std::to_string(b.size()) + " for " +
                         std::to_string(x.cols()) + " columns");
  }
  Tensor out = x;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += b[j];
  return g.record("add_row", std::move(out), {a, bias}, [a, bias](Graph& gr, const Tensor& go) {
    gr.accumulate(a, go);
    if (gr.requires_grad(bias)) {
      Tensor gb(bias.value().shape(), 0.0);
      for (std::size_t i = 0; i < go.rows(); ++i)
        for (std::size_t j = 0; j < go.cols(); ++j) gb[j] += go(i, j);
      gr.accumulate(bias, gb);
    }
  });
}

Var scale(Var a, double s) {
  Graph& g = graph_of(a);
  return g.record("scale", nk::scale(a.value(), s), {a},
                  [a, s](Graph& gr, const Tensor& go) { gr.accumulate(a, nk::scale(go, s)); });
}

Var add_scalar(Var a, double s) {
  Graph& g = graph_of(a);
  Tensor out = a.value();
  for (auto& v : out.data()) v += s;
  return g.record("add_scalar", std::move(out), {a},
                  [a](Graph& gr, const Tensor& go) { gr.accumulate(a, go); });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  require_matrix(x, "slice_rows");
  if (begin >= end || end > x.rows()) throw RangeError("slice_rows: bad row range");
  const std::size_t c = x.cols();
  Tensor out({end - begin, c});
  std::copy(x.data().begin() + begin * c, x.data().begin() + end * c, out.data().begin());
  return g.record("slice_rows", std::move(out), {a}, [a, begin, c](Graph& gr, const Tensor& go) {
    Tensor ga(a.value().shape(), 0.0);
    std::copy(go.data().begin(), go.data().end(), ga.data().begin() + begin * c);
    gr.accumulate(a, ga);
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  require_matrix(x, "slice_cols");
  if (begin >= end || end > x.cols()) throw RangeError("slice_cols: bad column range");
  Tensor out({x.rows(), end - begin});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = x(i, j);
  return g.record("slice_cols", std::move(out), {a}, [a, begin](Graph& gr, const Tensor& go) {
    Tensor ga(a.value().shape(), 0.0);
    for (std::size_t i = 0; i < go.rows(); ++i)
      for (std::size_t j = 0; j < go.cols(); ++j) ga(i, begin + j) = go(i, j);
    gr.accumulate(a, ga);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: nothing to concatenate");
  Graph& g = graph_of(parts.front());
  const std::size_t c = parts.front().value().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.graph != &g) throw Error("ag: variables from different graphs");
    if (p.value().cols() != c) throw DimensionError("concat_rows: column counts differ");
    rows += p.value().rows();
  }
  Tensor out({rows, c});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + offset);
    offset += p.value().size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return g.record("concat_rows", std::move(out), parts, [inputs](Graph& gr, const Tensor& go) {
    std::size_t off = 0;
    for (const Var& p : inputs) {
      const std::size_t n = p.value().size();
      if (gr.requires_grad(p)) {
        Tensor gp(p.value().shape());
        std::copy(go.data().begin() + off, go.data().begin() + off + n, gp.data().begin());
        gr.accumulate(p, gp);
      }
      off += n;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
  Graph& g = graph_of(parts.front());
  const std::size_t r = parts.front().value().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.graph != &g) throw Error("ag: variables from different graphs");
    require_matrix(p.value(), "concat_cols");
    if (p.value().rows() != r) throw DimensionError("concat_cols: row counts differ");
    cols += p.value().cols();
  }
  Tensor out({r, cols});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, offset + j) = v(i, j);
    offset += v.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return g.record("concat_cols", std::move(out), parts, [inputs](Graph& gr, const Tensor& go) {
    std::size_t off = 0;
    for (const Var& p : inputs) {
      const Tensor& v = p.value();
      if (gr.requires_grad(p)) {
        Tensor gp(v.shape());
        for (std::size_t i = 0; i < v.rows(); ++i)
          for (std::size_t j = 0; j < v.cols(); ++j) gp(i, j) = go(i, off + j);
        gr.accumulate(p, gp);
      }
      off += v.cols();
    }
  });
}

Var row(Var a, std::size_t i) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  require_matrix(x, "row");
  if (i >= x.rows()) throw RangeError("row: index out of range");
  Tensor out({1, x.cols()});
  std::copy(x.row(i).begin(), x.row(i).end(), out.data().begin());
  return g.record("row", std::move(out), {a}, [a, i](Graph& gr, const Tensor& go) {
    Tensor ga(a.value().shape(), 0.0);
    std::copy(go.data().begin(), go.data().end(), ga.row(i).begin());
    gr.accumulate(a, ga);
  });
}

Var mean_rows(Var a, std::size_t begin, std::size_t end) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  require_matrix(x, "mean_rows");
  if (begin >= end || end > x.rows()) throw RangeError("mean_rows: bad row range");
  const double inv = 1.0 / static_cast<double>(end - begin);
  Tensor out({1, x.cols()});
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += x(i, j);
    out[j] = s * inv;
  }
  return g.record("mean_rows", std::move(out), {a}, [a, begin, end, inv](Graph& gr, const Tensor& go) {
    Tensor ga(a.value().shape(), 0.0);
    for (std::size_t i = begin; i < end; ++i)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) = go[j] * inv;
    gr.accumulate(a, ga);
  });
}

Var layernorm(Var x, Var gain, Var shift, double eps) {
  Graph& g = graph_of(x, gain);
  graph_of(x, shift);
  return g.record(
      "layernorm", nk::layernorm(x.value(), gain.value(), shift.value(), eps), {x, gain, shift},
      [x, gain, shift, eps](Graph& gr, const Tensor& go) {
        const Tensor& xv = x.value();
        const Tensor& gv = gain.value();
        const std::size_t m = xv.rows(), c = xv.cols();
        const double inv_c = 1.0 / static_cast<double>(c);
        Tensor gx(xv.shape()), ggain(gv.shape(), 0.0), gshift(gv.shape(), 0.0);
        std::vector<double> xhat(c), dxhat(c);
        for (std::size_t i = 0; i < m; ++i) {
          auto xr = xv.row(i);
          double mean = 0.0;
          for (double v : xr) mean += v;
          mean *= inv_c;
          double var = 0.0;
          for (double v : xr) var += (v - mean) * (v - mean);
          var *= inv_c;
          const double inv = 1.0 / std::sqrt(var + eps);
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            xhat[j] = (xr[j] - mean) * inv;
            dxhat[j] = go(i, j) * gv[j];
            ggain[j] += go(i, j) * xhat[j];
            gshift[j] += go(i, j);
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xhat[j];
          }
          mean_d *= inv_c;
          mean_dx *= inv_c;
          for (std::size_t j = 0; j < c; ++j) gx(i, j) = inv * (dxhat[j] - mean_d - xhat[j] * mean_dx);
        }
        gr.accumulate(x, gx);
        gr.accumulate(gain, ggain);
        gr.accumulate(shift, gshift);
      });
}

Var gelu(Var a) {
  Graph& g = graph_of(a);
  return g.record("gelu", nk::gelu(a.value()), {a}, [a](Graph& gr, const Tensor& go) {
    Tensor ga = go;
    const Tensor& x = a.value();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= nk::gelu_derivative(x[i]);
    gr.accumulate(a, ga);
  });
}

Var softplus(Var a) {
  Graph& g = graph_of(a);
  return g.record("softplus", nk::softplus(a.value()), {a}, [a](Graph& gr, const Tensor& go) {
    Tensor ga = go;
    const Tensor& x = a.value();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= nk::sigmoid(x[i]);
    gr.accumulate(a, ga);
  });
}

Var sigmoid(Var a) {
  Graph& g = graph_of(a);
  Tensor y = nk::sigmoid(a.value());
  Tensor saved = g.recording() ? y : Tensor();
  return g.record("sigmoid", std::move(y), {a}, [a, saved](Graph& gr, const Tensor& go) {
    Tensor ga = go;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= saved[i] * (1.0 - saved[i]);
    gr.accumulate(a, ga);
  });
}

Var bounded_width(Var a, double max_width) {
  Graph& g = graph_of(a);
  Tensor y = gaug::bounded_width(a.value(), max_width);
  Tensor saved = g.recording() ? y : Tensor();
  return g.record("bounded_width", std::move(y), {a},
                  [a, max_width, saved](Graph& gr, const Tensor& go) {
                    Tensor ga = go;
                    for (std::size_t i = 0; i < ga.size(); ++i)
                      ga[i] *= gaug::bounded_width_derivative(saved[i], max_width);
                    gr.accumulate(a, ga);
                  });
}

namespace {

// y o (g - <g, y>) per row.
Tensor softmax_backward(const Tensor& y, const Tensor& go) {
  Tensor gz(y.shape());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < y.cols(); ++j) dot += go(i, j) * y(i, j);
    for (std::size_t j = 0; j < y.cols(); ++j) gz(i, j) = y(i, j) * (go(i, j) - dot);
  }
  return gz;
}

}  // namespace

Var softmax_rows(Var logits) {
  Graph& g = graph_of(logits);
  Tensor y = nk::softmax_rows(logits.value());
  Tensor saved = g.recording() ? y : Tensor();
  return g.record("softmax_rows", std::move(y), {logits},
                  [logits, saved](Graph& gr, const Tensor& go) {
                    gr.accumulate(logits, softmax_backward(saved, go));
                  });
}

Var softmax_rows(Var logits, Var bias) {
  Graph& g = graph_of(logits, bias);
  Tensor y = nk::softmax_rows(logits.value(), bias.value());
  Tensor saved = g.recording() ? y : Tensor();
  return g.record("softmax_rows", std::move(y), {logits, bias},
                  [logits, bias, saved](Graph& gr, const Tensor& go) {
                    Tensor gz = softmax_backward(saved, go);
                    gr.accumulate(logits, gz);
                    gr.accumulate(bias, gz);
                  });
}

Var gaussian_kernel(Var sigma, const PatchGrid& grid) {
  Graph& g = graph_of(sigma);
  Tensor kernel = gaug::kernel_matrix(sigma.value(), grid, gaug::KernelKind::gaussian());
  Tensor saved = g.recording() ? kernel : Tensor();
  const PatchGrid* gp = &grid;
  return g.record("gaussian_kernel", std::move(kernel), {sigma},
                  [sigma, saved, gp](Graph& gr, const Tensor& go) {
                    const Tensor& s = sigma.value();
                    const std::size_t n = gp->size();
                    Tensor gs(s.shape(), 0.0);
                    for (std::size_t p = 0; p < n; ++p) {
                      double a0 = 0.0, a1 = 0.0;
                      for (std::size_t t = 0; t < n; ++t) {
                        const double w = go(p, t) * saved(p, t);
                        a0 += w * gp->d(p, t, 0);
                        a1 += w * gp->d(p, t, 1);
                      }
                      gs(p, 0) = 0.5 * a0 / (s(p, 0) * s(p, 0));
                      gs(p, 1) = 0.5 * a1 / (s(p, 1) * s(p, 1));
                    }
                    gr.accumulate(sigma, gs);
                  });
}

Var laplace_kernel(Var gamma, const PatchGrid& grid) {
  Graph& g = graph_of(gamma);
  Tensor kernel = gaug::kernel_matrix(gamma.value(), grid, gaug::KernelKind::laplace());
  Tensor saved = g.recording() ? kernel : Tensor();
  const PatchGrid* gp = &grid;
  return g.record("laplace_kernel", std::move(kernel), {gamma},
                  [gamma, saved, gp](Graph& gr, const Tensor& go) {
                    const std::size_t n = gp->size();
                    Tensor gg(gamma.value().shape(), 0.0);
                    for (std::size_t p = 0; p < n; ++p) {
                      double acc = 0.0;
                      for (std::size_t t = 0; t < n; ++t) acc -= go(p, t) * saved(p, t) * gp->r(p, t);
                      gg[p] = acc;
                    }
                    gr.accumulate(gamma, gg);
                  });
}

Var inverse_distance_kernel(Var lambda, const PatchGrid& grid) {
  Graph& g = graph_of(lambda);
  Tensor kernel = gaug::kernel_matrix(lambda.value(), grid, gaug::KernelKind::inverse_distance());
  Tensor saved = g.recording() ? kernel : Tensor();
  const PatchGrid* gp = &grid;
  return g.record("inverse_distance_kernel", std::move(kernel), {lambda},
                  [lambda, saved, gp](Graph& gr, const Tensor& go) {
                    const Tensor& l = lambda.value();
                    const std::size_t n = gp->size();
                    Tensor gl(l.shape(), 0.0);
                    for (std::size_t p = 0; p < n; ++p) {
                      double acc = 0.0;
                      for (std::size_t t = 0; t < n; ++t)
                        acc += go(p, t) * saved(p, t) * saved(p, t) * gp->r(p, t);
                      gl[p] = acc / (l[p] * l[p]);
                    }
                    gr.accumulate(lambda, gl);
                  });
}

Var supplement(Var alpha, Var kernel) {
  Graph& g = graph_of(alpha, kernel);
  return g.record("supplement", gaug::supplement_matrix(alpha.value(), kernel.value()),
                  {alpha, kernel}, [alpha, kernel](Graph& gr, const Tensor& go) {
                    const Tensor& a = alpha.value();
                    const Tensor& k = kernel.value();
                    const std::size_t n = k.rows();
                    if (gr.requires_grad(alpha)) {
                      Tensor ga(a.shape(), 0.0);
                      for (std::size_t p = 0; p < n; ++p) {
                        double acc = 0.0;
                        for (std::size_t t = 0; t < n; ++t) acc += go(p + 1, t + 1) * k(p, t);
                        ga[p] = acc;
                      }
                      gr.accumulate(alpha, ga);
                    }
                    if (gr.requires_grad(kernel)) {
                      Tensor gk(k.shape());
                      for (std::size_t p = 0; p < n; ++p)
                        for (std::size_t t = 0; t < n; ++t) gk(p, t) = go(p + 1, t + 1) * a[p];
                      gr.accumulate(kernel, gk);
                    }
                  });
}

Var supplement_unscaled(Var kernel) {
  Graph& g = graph_of(kernel);
  const Tensor ones({kernel.value().rows()}, 1.0);
  return g.record("supplement", gaug::supplement_matrix(ones, kernel.value()), {kernel},
                  [kernel](Graph& gr, const Tensor& go) {
                    const std::size_t n = kernel.value().rows();
                    Tensor gk({n, n});
                    for (std::size_t p = 0; p < n; ++p)
                      for (std::size_t t = 0; t < n; ++t) gk(p, t) = go(p + 1, t + 1);
                    gr.accumulate(kernel, gk);
                  });
}

Var auto_alpha_bar(Var q, Var k) {
  Graph& g = graph_of(q, k);
  Tensor bar = gaug::auto_alpha_bar(q.value(), k.value());
  const std::size_t hw = bar.size();
  return g.record("auto_alpha", bar.reshaped({hw, 1}), {q, k}, [q, k](Graph& gr, const Tensor& go) {
    const Tensor& qv = q.value();
    const Tensor& kv = k.value();
    const std::size_t n = qv.rows(), d = qv.cols(), hw = n - 1;
    const double c = 1.0 / (std::sqrt(static_cast<double>(d)) * static_cast<double>(hw));
    std::vector<double> r(n), u(n);
    for (std::size_t i = 0; i < n; ++i) {
      double sq = 0.0, sk = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        sq += qv(i, j) * qv(i, j);
        sk += kv(i, j) * kv(i, j);
      }
      r[i] = std::sqrt(sq);
      u[i] = std::sqrt(sk);
    }
    // bar_i = c * r_i * sum_j u_j over spatial i, j.
    double u_sum = 0.0, gr_sum = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
      u_sum += u[i];
      gr_sum += go[i - 1] * r[i];
    }
    if (gr.requires_grad(q)) {
      Tensor gq(qv.shape(), 0.0);
      for (std::size_t i = 1; i < n; ++i) {
        if (r[i] == 0.0) continue;
        const double dr = go[i - 1] * c * u_sum;
        for (std::size_t j = 0; j < d; ++j) gq(i, j) = dr * qv(i, j) / r[i];
      }
      gr.accumulate(q, gq);
    }
    if (gr.requires_grad(k)) {
      Tensor gk(kv.shape(), 0.0);
      const double du = c * gr_sum;
      for (std::size_t i = 1; i < n; ++i) {
        if (u[i] == 0.0) continue;
        for (std::size_t j = 0; j < d; ++j) gk(i, j) = du * kv(i, j) / u[i];
      }
      gr.accumulate(k, gk);
    }
  });
}

Var cross_entropy(Var logits, std::size_t label) {
  Graph& g = graph_of(logits);
  const Tensor& z = logits.value();
  if (label >= z.size()) throw RangeError("cross_entropy: label out of range");
  double mx = z[0];
  for (double v : z.data()) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : z.data()) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  return g.record("cross_entropy", Tensor({1, 1}, lse - z[label]), {logits},
                  [logits, label, lse](Graph& gr, const Tensor& go) {
                    const Tensor& zv = logits.value();
                    Tensor gz(zv.shape());
                    for (std::size_t j = 0; j < zv.size(); ++j)
                      gz[j] = go[0] * (std::exp(zv[j] - lse) - (j == label ? 1.0 : 0.0));
                    gr.accumulate(logits, gz);
                  });
}

Var sum(Var a) {
  Graph& g = graph_of(a);
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return g.record("sum", Tensor({1, 1}, s), {a}, [a](Graph& gr, const Tensor& go) {
    gr.accumulate(a, Tensor(a.value().shape(), go[0]));
  });
}

Var dot(Var a, const Tensor& weights) {
  Graph& g = graph_of(a);
  if (weights.size() != a.value().size()) throw DimensionError("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += a.value()[i] * weights[i];
  return g.record("dot", Tensor({1, 1}, s), {a}, [a, weights](Graph& gr, const Tensor& go) {
    gr.accumulate(a, nk::scale(weights.reshaped(a.value().shape()), go[0]));
  });
}

}  // namespace locat::ag
