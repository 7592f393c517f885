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
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "locat/gaug.hpp"
#include "locat/patch_grid.hpp"
#include "locat/tensor.hpp"

/// Tape-based reverse-mode differentiation over matrix primitives.
///
/// A Graph records each primitive with its output value and a closure that
/// maps the output gradient to input gradients. backward() replays the
/// closures in reverse recording order, so repeated backward passes over
/// the same tape are bit-identical. A Graph constructed with record = false
/// only evaluates values; nothing is kept for the reverse pass.
namespace locat::ag {

class Graph;

/// Handle to a node of a Graph.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Tensor& value() const;
  bool valid() const noexcept { return graph != nullptr && id >= 0; }
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& grad)>;

  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const noexcept { return record_; }

  /// A value that never receives a gradient.
  Var constant(Tensor value);
  /// A trainable leaf that borrows `value`; the tensor must outlive the
  /// graph. Registering the same tensor twice returns the same node.
  Var param(const Tensor& value);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;

  /// Seeds a scalar output with 1 and runs the reverse pass.
  void backward(Var loss);
  void backward(Var out, const Tensor& seed);

  /// Gradient reached at `v`, or nullptr.
  const Tensor* grad(Var v) const;
  /// Gradient of a registered parameter; zeros if the loss does not reach it.
  Tensor grad_of(const Tensor& param) const;
  bool has_param(const Tensor& param) const;

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Appends a primitive. Throws NumericError naming `op` if `value` is not
  /// finite.
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn fn);

  /// Adds `g` into the gradient of `v` if it requires one.
  void accumulate(Var v, const Tensor& g);

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    const char* op = "";
    bool requires_grad = false;
    BackwardFn backward;
    std::optional<Tensor> grad;

    const Tensor& value() const { return borrowed ? *borrowed : owned; }
  };

  Node& node(Var v);
  const Node& node(Var v) const;

  bool record_;
  std::deque<Node> nodes_;
  std::unordered_map<const Tensor*, int> params_;
};

// Primitives. Shapes follow the plain kernels in locat::nk; vectors that
// act as biases or gains are rank-1.

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
/// Adds a rank-1 bias of `cols` entries to every row.
Var add_row(Var a, Var bias);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
/// [1 x C] row `i` of a.
Var row(Var a, std::size_t i);
/// [1 x C] mean of rows [begin, end).
Var mean_rows(Var a, std::size_t begin, std::size_t end);

Var layernorm(Var x, Var gain, Var shift, double eps = 1e-6);
Var gelu(Var x);
Var softplus(Var x);
Var sigmoid(Var x);
Var bounded_width(Var x, double max_width);

Var softmax_rows(Var logits);
/// softmax(logits + bias) row-wise.
Var softmax_rows(Var logits, Var bias);

/// Gaussian kernel from variances [hw x 2].
Var gaussian_kernel(Var sigma, const PatchGrid& grid);
/// Laplace kernel from rates [hw x 1].
Var laplace_kernel(Var gamma, const PatchGrid& grid);
/// Inverse-distance kernel from scales [hw x 1].
Var inverse_distance_kernel(Var lambda, const PatchGrid& grid);
/// Padded supplement from row scales [hw x 1] and kernel [hw x hw].
Var supplement(Var alpha, Var kernel);
/// Padded supplement with unit row scales.
Var supplement_unscaled(Var kernel);
/// Parameter-free row scales [hw x 1] from q and k [(1+hw) x d].
Var auto_alpha_bar(Var q, Var k);

/// Softmax cross-entropy of a [1 x K] logit row against `label`; [1 x 1].
Var cross_entropy(Var logits, std::size_t label);
/// Sum of all entries; [1 x 1].
Var sum(Var a);
/// <a, weights>; [1 x 1].
Var dot(Var a, const Tensor& weights);

}  // namespace locat::ag
