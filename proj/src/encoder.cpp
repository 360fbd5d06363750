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

#include "iclp/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace iclp {

bool EncoderPlan::pools_after(std::size_t layer) const {
  return std::find(pool_after.begin(), pool_after.end(), layer + 1) != pool_after.end();
}

void EncoderPlan::validate() const {
  if (channels.size() != kEncoderLayers) {
    throw ConfigError("encoder plan must list " + std::to_string(kEncoderLayers) + " channel counts, got " +
                      std::to_string(channels.size()));
  }
  if (in_channels == 0) throw ConfigError("encoder plan: input channel count is zero");
  for (std::size_t c : channels) {
    if (c == 0) throw ConfigError("encoder plan: zero-width layer");
  }
  for (std::size_t p : pool_after) {
    if (p < 1 || p >= kEncoderLayers) throw ConfigError("encoder plan: pool position " + std::to_string(p) + " not in 1..5");
  }
  if (kernel % 2 == 0) throw ConfigError("encoder plan: kernel must be odd");
}

template <typename T>
Encoder<T>::Encoder(EncoderPlan plan, Rng& rng) : plan_(std::move(plan)) {
  plan_.validate();
  std::size_t in = plan_.in_channels;
  const std::size_t k = plan_.kernel;
  for (std::size_t l = 0; l < kEncoderLayers; ++l) {
    const std::size_t out = plan_.channels[l];
    Tensor<T> w(Shape{out, in, k, k});
    const double bound = std::sqrt(6.0 / static_cast<double>(in * k * k));
    for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
    weights_.push_back(std::move(w));
    biases_.emplace_back(Shape{out});
    in = out;
  }
}

template <typename T>
Encoder<T>::Encoder(EncoderPlan plan, std::vector<Tensor<T>> weights, std::vector<Tensor<T>> biases)
    : plan_(std::move(plan)), weights_(std::move(weights)), biases_(std::move(biases)) {
  plan_.validate();
  if (weights_.size() != kEncoderLayers || biases_.size() != kEncoderLayers) {
    throw ConfigError("encoder: expected 6 weight and bias tensors");
  }
  std::size_t in = plan_.in_channels;
  for (std::size_t l = 0; l < kEncoderLayers; ++l) {
    const Shape ws{plan_.channels[l], in, plan_.kernel, plan_.kernel};
    if (weights_[l].shape() != ws || biases_[l].shape() != Shape{plan_.channels[l]}) {
      throw ConfigError("encoder: layer " + std::to_string(l + 1) + " parameters do not match plan, weight " +
                        shape_str(weights_[l].shape()) + " expected " + shape_str(ws));
    }
    in = plan_.channels[l];
  }
}

template <typename T>
typename Encoder<T>::Taped Encoder<T>::forward(nn::Tape<T>& tape, nn::Var<T> input, bool layer_boundaries,
                                               bool params_require_grad, std::size_t depth) const {
  const Shape& s = input.shape();
  const std::size_t c = s.size() == 4 ? s[1] : (s.size() == 3 ? s[0] : 0);
  if (c != plan_.in_channels) {
    throw ConfigError("encoder expects " + std::to_string(plan_.in_channels) + " input channels, got input " +
                      shape_str(s));
  }
  Taped out;
  nn::Var<T> x = input;
  const std::size_t pad = plan_.kernel / 2;
  for (std::size_t l = 0; l < std::min(depth, num_layers()); ++l) {
    nn::Var<T> w = tape.leaf(weights_[l], params_require_grad);
    nn::Var<T> b = tape.leaf(biases_[l], params_require_grad);
    out.weights.push_back(w);
    out.biases.push_back(b);
    // a layer's output is its conv+ReLU map; pooling belongs to the next input
    if (l > 0 && plan_.pools_after(l - 1)) x = nn::max_pool2d(x, 2, 2);
    if (layer_boundaries && l > 0) x = tape.boundary(x);
    x = nn::relu(nn::conv2d(x, w, b, 1, pad));
    out.outputs.push_back(x);
    out.pooled.push_back(nn::spatial_mean(x));
  }
  return out;
}

template <typename T>
LayerActivations<T> Encoder<T>::forward(const Tensor<T>& input) const {
  nn::Tape<T> tape;
  auto taped = forward(tape, tape.constant(input), false, false);
  LayerActivations<T> acts;
  for (std::size_t l = 0; l < taped.outputs.size(); ++l) {
    acts.outputs.push_back(taped.outputs[l].value());
    acts.pooled.push_back(taped.pooled[l].value());
  }
  return acts;
}

template <typename T>
Tensor<T> Encoder<T>::embed(const Tensor<T>& input) const {
  nn::Tape<T> tape;
  auto taped = forward(tape, tape.constant(input), false, false);
  return taped.pooled.back().value();
}

namespace {
template <typename T>
void fnv_mix(std::uint64_t& h, const Tensor<T>& t) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
  for (std::size_t i = 0; i < t.size() * sizeof(T); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
}
}  // namespace

template <typename T>
std::uint64_t tensor_checksum(const std::vector<const Tensor<T>*>& tensors) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto* t : tensors) fnv_mix(h, *t);
  return h;
}

template <typename T>
std::uint64_t Encoder<T>::checksum() const {
  std::vector<const Tensor<T>*> all;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    all.push_back(&weights_[l]);
    all.push_back(&biases_[l]);
  }
  return tensor_checksum(all);
}

template class Encoder<float>;
template class Encoder<double>;
template std::uint64_t tensor_checksum<float>(const std::vector<const Tensor<float>*>&);
template std::uint64_t tensor_checksum<double>(const std::vector<const Tensor<double>*>&);

}  // namespace iclp
