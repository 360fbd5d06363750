// Copyright (c) the iclp authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reverse-mode differentiation over a recorded tape, plus the network
// primitives the encoders, prediction heads and probes are built from.
//
// A Tape owns every intermediate value of one forward pass. Ops append a node
// holding the output and a closure that maps the output gradient onto the
// inputs. `boundary()` creates a node sharing its source's value but with no
// backward edge, which is how layer-local training severs gradient flow.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "iclp/rng.hpp"
#include "iclp/tensor.hpp"

namespace iclp::nn {

template <typename T>
class Tape;

template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape(); }
};

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Input or parameter node. Parameters pass requires_grad = true.
  Var<T> leaf(Tensor<T> value, bool requires_grad = true);
  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  /// Same value as `v`, but gradients arriving here are dropped.
  Var<T> boundary(Var<T> v);

  /// Used by op implementations.
  Var<T> record(Tensor<T> value, std::span<const Var<T>> inputs, Backward backward);

  /// Accumulate d(loss)/d(node) for every node reachable from `loss`
  /// without crossing a boundary. `loss` must hold exactly one scalar.
  void backward(Var<T> loss);

  bool requires_grad(Var<T> v) const { return nodes_.at(v.id).requires_grad; }
  bool is_boundary(Var<T> v) const { return nodes_.at(v.id).boundary; }
  const Tensor<T>& value(Var<T> v) const { return *nodes_.at(v.id).value; }

  /// Gradient received by `v`, or nullptr if none reached it.
  const Tensor<T>* grad(Var<T> v) const;
  Tensor<T> grad_or_zero(Var<T> v) const;

  /// Accumulator for an input of the node currently being differentiated.
  Tensor<T>& grad_accum(Var<T> v);

  std::size_t size() const noexcept { return nodes_.size(); }
  bool owns(Var<T> v) const noexcept { return v.tape == this && v.id < nodes_.size(); }

 private:
  struct Node {
    std::shared_ptr<const Tensor<T>> value;
    Tensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    bool boundary = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// ---- ops -------------------------------------------------------------------

/// Cross-correlation. input [C,H,W] or [N,C,H,W]; weight [O,C,k,k]; bias [O].
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, std::size_t stride, std::size_t padding);

template <typename T>
Var<T> relu(Var<T> x);

/// input [C,H,W] or [N,C,H,W].
template <typename T>
Var<T> max_pool2d(Var<T> x, std::size_t kernel, std::size_t stride);

/// Mean over the two trailing spatial axes: [N,C,H,W] -> [N,C], [C,H,W] -> [C].
template <typename T>
Var<T> spatial_mean(Var<T> x);

/// x [N,in] or [in]; weight [out,in]; optional bias [out].
template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, std::optional<Var<T>> bias = std::nullopt);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

template <typename T>
Var<T> scale(Var<T> a, T factor);

template <typename T>
Var<T> sum(Var<T> x);

template <typename T>
Var<T> mean(Var<T> x);

/// Rows `index` of x [N,d] -> [S,d].
template <typename T>
Var<T> gather_rows(Var<T> x, std::span<const std::size_t> index);

/// Rowwise inner products of a [S,d] and b [S,d] -> [S].
template <typename T>
Var<T> rowwise_dot(Var<T> a, Var<T> b);

/// Elementwise max(0, 1 - y * s) for scores s [S] and labels y in {+1,-1}.
/// The subgradient at the kink is zero.
template <typename T>
Var<T> hinge(Var<T> scores, std::span<const T> labels);

/// Inverted dropout: survivors scaled by 1/(1-p) in training, identity otherwise.
template <typename T>
Var<T> dropout(Var<T> x, T p, Rng& rng, bool training);

/// Mean softmax cross-entropy of logits [N,K] against class indices.
template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, std::span<const int> labels);

/// Mean binary cross-entropy with logits; targets in [0,1], same shape as logits.
template <typename T>
Var<T> sigmoid_bce(Var<T> logits, const Tensor<T>& targets);

/// Mean squared error against a constant target of the same shape.
template <typename T>
Var<T> mse(Var<T> pred, const Tensor<T>& target);

/// x [N*G, d] -> [N, d], averaging consecutive groups of G rows.
template <typename T>
Var<T> group_mean(Var<T> x, std::size_t group);

template <typename T>
Var<T> reshape(Var<T> x, Shape shape);

// ---- dense helpers without a tape --------------------------------------------

/// C[M,N] = alpha * op(A) * op(B) + beta * C, row-major.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

/// Forward-only convolution, same semantics as the taped op.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride,
                         std::size_t padding);

}  // namespace iclp::nn
