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

// Hinge-loss contrastive predictive coding on patch sequences. The score of a
// sample is <z^{t+d}, W_{l,d} z^t>, trained with max(0, 1 - y * score).

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "iclp/adam.hpp"
#include "iclp/encoder.hpp"
#include "iclp/ops.hpp"
#include "iclp/rng.hpp"
#include "iclp/sequencer.hpp"
#include "iclp/tensor.hpp"

namespace iclp::clapp {

enum class TrainMode { kClappLocal, kHingeCpcE2e };

TrainMode train_mode_from_name(const std::string& name);
std::string train_mode_name(TrainMode mode);

/// W_{l,d} for every encoder layer l and offset d in 1..max_offset. No bias.
template <typename T>
class PredictionHeads {
 public:
  PredictionHeads() = default;
  /// Kaiming-uniform init, one [d_l, d_l] matrix per (layer, offset).
  PredictionHeads(const std::vector<std::size_t>& layer_dims, std::size_t max_offset, Rng& rng);
  PredictionHeads(std::size_t max_offset, std::vector<std::vector<Tensor<T>>> weights);

  std::size_t num_layers() const noexcept { return weights_.size(); }
  std::size_t max_offset() const noexcept { return max_offset_; }
  bool has(std::size_t layer, std::size_t offset) const noexcept;

  /// layer is 0-based, offset is 1-based.
  Tensor<T>& weight(std::size_t layer, std::size_t offset);
  const Tensor<T>& weight(std::size_t layer, std::size_t offset) const;

  std::uint64_t checksum() const;

  template <typename U>
  PredictionHeads<U> cast() const {
    std::vector<std::vector<Tensor<U>>> w;
    for (const auto& layer : weights_) {
      w.emplace_back();
      for (const auto& t : layer) w.back().push_back(t.template cast<U>());
    }
    return PredictionHeads<U>(max_offset_, std::move(w));
  }

 private:
  std::size_t max_offset_ = 0;
  std::vector<std::vector<Tensor<T>>> weights_;
};

/// z_pred = W_{l,d} c.
template <typename T>
Tensor<T> predict_future(const Tensor<T>& context, const PredictionHeads<T>& heads, std::size_t layer,
                         std::size_t offset);

/// max(0, 1 - y <z_target, z_pred>).
double hinge_loss(std::span<const double> z_pred, std::span<const double> z_target, int y);

/// Rows refer to the stacked patch batch: row = sequence offset + time step.
struct ContrastSample {
  std::size_t context = 0;
  std::size_t target = 0;
  std::size_t offset = 0;  // prediction step d
  int label = 1;           // +1 same source at t+d, -1 another source
};

/// Placement of one patch sequence inside a stacked batch.
struct SequenceRef {
  std::size_t source_id = 0;
  std::size_t first_row = 0;
  std::size_t length = 0;
};

/// One positive per valid (t, d) and `negatives` negatives whose targets are
/// uniform over the time steps of other sources in the batch.
std::vector<ContrastSample> build_contrast_batch(std::span<const SequenceRef> sequences, std::size_t max_offset,
                                                 std::size_t negatives, Rng& rng);

/// Which losses to form and how gradients may flow.
struct LossSpec {
  std::vector<std::size_t> layers;  // 0-based layers carrying a loss
  bool layer_boundaries = true;     // cut the graph between encoder layers
  bool detach_targets = true;       // z^{t+d} is a constant within each loss

  static LossSpec clapp(std::size_t depth = kEncoderLayers);
  static LossSpec hingecpc(std::size_t depth = kEncoderLayers);
};

template <typename T>
struct Gradients {
  std::vector<double> losses;  // one per LossSpec layer
  std::vector<Tensor<T>> weight;
  std::vector<Tensor<T>> bias;
  std::vector<std::vector<Tensor<T>>> heads;  // [layer][offset-1]; empty if none arrived
};

/// Forward the stacked patches [N,C,h,w] and differentiate the sum of the
/// requested per-layer mean hinge losses.
template <typename T>
Gradients<T> contrastive_gradients(const Encoder<T>& encoder, const PredictionHeads<T>& heads,
                                   const Tensor<T>& patches, std::span<const ContrastSample> samples,
                                   const LossSpec& spec);

/// Losses only, no tape.
template <typename T>
std::vector<double> contrastive_losses(const Encoder<T>& encoder, const PredictionHeads<T>& heads,
                                       const Tensor<T>& patches, std::span<const ContrastSample> samples,
                                       const LossSpec& spec);

/// Optimiser groups. CLAPP keeps one Adam state per layer over that layer's
/// conv parameters and heads; HingeCPC one state over the whole encoder and
/// the last layer's heads.
template <typename T>
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(TrainMode mode, nn::AdamConfig config, Encoder<T>& encoder, PredictionHeads<T>& heads);

  TrainMode mode() const noexcept { return mode_; }
  std::size_t num_groups() const noexcept { return groups_.size(); }
  const nn::AdamState<T>& group(std::size_t i) const { return groups_.at(i).state; }

  /// Apply `grads`; parameters without a gradient get a pure decay step.
  void step(Encoder<T>& encoder, PredictionHeads<T>& heads, const Gradients<T>& grads);

 private:
  struct Member {
    enum Kind { kWeight, kBias, kHead } kind;
    std::size_t layer, offset;
  };
  struct Group {
    std::vector<Member> members;
    nn::AdamState<T> state;
  };
  TrainMode mode_ = TrainMode::kClappLocal;
  std::vector<Group> groups_;
};

/// One layer-local update; returns the six layer losses before the step.
template <typename T>
std::vector<double> clapp_update(Encoder<T>& encoder, PredictionHeads<T>& heads, Optimizer<T>& opt,
                                 const Tensor<T>& patches, std::span<const ContrastSample> samples);

/// One end-to-end update with the loss on the last layer.
template <typename T>
double hingecpc_update(Encoder<T>& encoder, PredictionHeads<T>& heads, Optimizer<T>& opt, const Tensor<T>& patches,
                       std::span<const ContrastSample> samples);

/// An operator followed by its encoder and heads.
struct ImagePathway {
  std::string name;
  ops::Operator op = ops::Operator::kIdentity;
  Encoder<float> encoder;
  PredictionHeads<float> heads;

  static ImagePathway create(std::string name, ops::Operator op, const EncoderPlan& plan, std::size_t max_offset,
                             Rng& rng);
};

struct TrainConfig {
  TrainMode mode = TrainMode::kClappLocal;
  nn::AdamConfig adam;
  std::size_t batch_size = 64;
  std::size_t epochs = 200;
  std::size_t max_offset = 5;
  std::size_t negatives = 1;
  seq::PatchGeometry patch;
  seq::AugmentConfig augment;
  bool augment_enabled = true;
  std::uint64_t seed = 0;
};

struct EpochLoss {
  std::size_t epoch = 0;             // 1-based
  std::vector<double> layer_losses;  // 6 for CLAPP, 1 (last layer) for HingeCPC
};

/// Operator output patches of one (possibly augmented) image.
seq::PatchSequence pathway_patches(const ImagePathway& pathway, const TensorF& rgb, const seq::PatchGeometry& geom,
                                   std::size_t source_id = 0);

/// Epoch loop: shuffle, augment, operator, patches, update. `on_epoch` runs
/// after every epoch (metrics, checkpoints).
std::vector<EpochLoss> train(ImagePathway& pathway, const std::vector<TensorF>& images, const TrainConfig& config,
                             const std::function<void(const EpochLoss&)>& on_epoch = {});

}  // namespace iclp::clapp
