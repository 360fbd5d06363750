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

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "iclp/autograd.hpp"
#include "iclp/rng.hpp"
#include "iclp/tensor.hpp"

namespace iclp {

inline constexpr std::size_t kEncoderLayers = 6;

/// Layer plan of a convolutional encoder: six conv3x3(stride 1, pad 1)+ReLU
/// layers; the output of each listed (1-based) layer is 2x2 max-pooled
/// before it enters the next layer.
struct EncoderPlan {
  std::size_t in_channels = 3;
  std::vector<std::size_t> channels{64, 64, 128, 128, 256, 256};
  std::vector<std::size_t> pool_after{2, 4};
  std::size_t kernel = 3;

  bool pools_after(std::size_t layer) const;  // 0-based layer index
  void validate() const;
};

/// Per-layer outputs for one batch; `pooled[l]` is the spatial mean of
/// `outputs[l]`, i.e. the representation used by the predictive loss.
template <typename T>
struct LayerActivations {
  std::vector<Tensor<T>> outputs;
  std::vector<Tensor<T>> pooled;
};

template <typename T>
class Encoder {
 public:
  Encoder() = default;
  /// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases.
  Encoder(EncoderPlan plan, Rng& rng);
  /// From stored parameters; shapes are validated against the plan.
  Encoder(EncoderPlan plan, std::vector<Tensor<T>> weights, std::vector<Tensor<T>> biases);

  const EncoderPlan& plan() const noexcept { return plan_; }
  std::size_t num_layers() const noexcept { return weights_.size(); }
  std::size_t layer_dim(std::size_t layer) const { return plan_.channels.at(layer); }
  std::size_t output_dim() const { return plan_.channels.back(); }

  Tensor<T>& weight(std::size_t l) { return weights_.at(l); }
  Tensor<T>& bias(std::size_t l) { return biases_.at(l); }
  const Tensor<T>& weight(std::size_t l) const { return weights_.at(l); }
  const Tensor<T>& bias(std::size_t l) const { return biases_.at(l); }

  /// Forward of a batch [N,C,h,w] (or a single [C,h,w]).
  LayerActivations<T> forward(const Tensor<T>& input) const;

  /// Layer-6 pooled representation [N, d].
  Tensor<T> embed(const Tensor<T>& input) const;

  struct Taped {
    std::vector<nn::Var<T>> weights;
    std::vector<nn::Var<T>> biases;
    std::vector<nn::Var<T>> outputs;
    std::vector<nn::Var<T>> pooled;
  };

  /// Forward on a tape with parameters as leaves. With layer_boundaries the
  /// input of each layer is cut from the graph, so a loss on layer l only
  /// reaches layer l's parameters. Only the first `depth` layers are run.
  Taped forward(nn::Tape<T>& tape, nn::Var<T> input, bool layer_boundaries, bool params_require_grad = true,
                std::size_t depth = kEncoderLayers) const;

  /// Order-stable FNV-1a checksum over all parameter bits.
  std::uint64_t checksum() const;

  template <typename U>
  Encoder<U> cast() const {
    Encoder<U> out;
    out.plan_ = plan_;
    for (const auto& w : weights_) out.weights_.push_back(w.template cast<U>());
    for (const auto& b : biases_) out.biases_.push_back(b.template cast<U>());
    return out;
  }

 private:
  template <typename U>
  friend class Encoder;

  EncoderPlan plan_;
  std::vector<Tensor<T>> weights_;
  std::vector<Tensor<T>> biases_;
};

/// Checksum of arbitrary tensors, used for freeze assertions.
template <typename T>
std::uint64_t tensor_checksum(const std::vector<const Tensor<T>*>& tensors);

}  // namespace iclp
