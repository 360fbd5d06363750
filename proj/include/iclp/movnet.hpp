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


// Motion-sensitive encoder: trained end-to-end to tell pseudo-egomotion
// (crops sliding over one still) from scene motion (a sprite moving over a
// static background) and to regress the speed of the motion.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "iclp/adam.hpp"
#include "iclp/data_io.hpp"
#include "iclp/encoder.hpp"
#include "iclp/rng.hpp"
#include "iclp/tensor.hpp"

namespace iclp::movnet {

enum class MotionLabel { kSceneMotion = 0, kEgomotion = 1 };

struct MotionConfig {
  std::size_t frames = 16;
  std::size_t crop = 64;          // crop side in source pixels
  std::size_t working_size = 64;  // frames are resized to this side
  double v_max = 8.0;             // source pixels per frame
  double scene_v_min = 1.0;       // a scene-motion sprite always moves
  double sprite_radius = 7.0;     // source pixels

  void validate() const;
  /// Side of a still large enough for any egomotion path.
  std::size_t still_size() const;
};

struct MotionSample {
  std::vector<TensorF> frames;  // [3, working, working] each
  MotionLabel label = MotionLabel::kEgomotion;
  double speed = 0.0;        // v / v_max; NaN when unknown (real video)
  double velocity = 0.0;     // source pixels per frame
  double direction = 0.0;    // radians
  /// Crop origins (egomotion) or sprite centres (scene motion) per frame,
  /// (x, y) in source pixels.
  std::vector<std::array<double, 2>> track;
};

/// Smooth random colour texture in [0.1, 0.7], used for stills and
/// backgrounds.
TensorF gen_texture(std::size_t h, std::size_t w, Rng& rng);

/// Crops of `still` along a straight path; v and angle are drawn when not
/// given (v uniform in [0, v_max], angle uniform in [0, 2 pi)).
MotionSample gen_pseudo_egomotion(const TensorF& still, const MotionConfig& cfg, Rng& rng,
                                  std::optional<double> v = {}, std::optional<double> angle = {});

/// A textured sprite translating at v over a static `background`
/// [3, crop, crop], reflecting off the borders so it stays in view.
MotionSample gen_scene_motion(const TensorF& background, const MotionConfig& cfg, Rng& rng,
                              std::optional<double> v = {}, std::optional<double> angle = {});

/// Scene-motion sample from consecutive frames of an ingested video; the
/// speed is unknown.
MotionSample scene_motion_from_frames(const std::vector<TensorF>& frames, const MotionConfig& cfg);

struct MotionDataset {
  std::vector<MotionSample> train;
  std::vector<MotionSample> test;
};

/// Balanced synthetic set; each class gets `per_class` samples per split.
MotionDataset gen_motion_dataset(std::size_t train_per_class, std::size_t test_per_class, const MotionConfig& cfg,
                                 std::uint64_t seed);

/// Clips of a striped sprite over a static texture in four classes: disc or
/// square, static or moving (speed uniform in [v_min, v_max], reflecting at
/// the borders). Items carry the working-size frames and the full-size
/// central frame as the image.
struct ActionSpec {
  std::size_t train_per_class = 100;
  std::size_t test_per_class = 50;
  MotionConfig motion;
  double v_min = 2.0;
  std::uint64_t seed = 0;

  void validate() const;
};

io::ImageDataset gen_action_dataset(const ActionSpec& spec);

/// Consecutive frames stacked along channels: [T-1, 6, h, w].
template <typename T>
Tensor<T> stack_pairs(const std::vector<TensorF>& frames);

template <typename T>
struct MovNet {
  Encoder<T> encoder;
  Tensor<T> w_disc, b_disc;    // [1,d], [1]
  Tensor<T> w_speed, b_speed;  // [1,d], [1]

  MovNet() = default;
  /// The plan's input channel count is forced to 6.
  MovNet(EncoderPlan plan, Rng& rng);

  std::size_t dim() const { return encoder.output_dim(); }

  struct Output {
    double logit = 0.0;
    double speed = 0.0;
    Tensor<T> pooled;  // [d], temporal mean of the layer-6 pooled vectors
  };
  Output forward(const std::vector<TensorF>& frames) const;

  std::uint64_t checksum() const;

  template <typename U>
  MovNet<U> cast() const {
    MovNet<U> m;
    m.encoder = encoder.template cast<U>();
    m.w_disc = w_disc.template cast<U>();
    m.b_disc = b_disc.template cast<U>();
    m.w_speed = w_speed.template cast<U>();
    m.b_speed = b_speed.template cast<U>();
    return m;
  }
};

/// BCE(logit, label) + (speed_pred - speed)^2, each averaged over the batch;
/// the speed term only counts samples with a known speed.
template <typename T>
double movnet_loss(const MovNet<T>& model, std::span<const MotionSample> batch);

/// Closed-form loss of one prediction, for fixtures.
double movnet_loss_value(double logit, double speed_pred, MotionLabel label, double speed);

template <typename T>
struct MovNetGradients {
  double loss = 0.0;
  std::vector<Tensor<T>> weight, bias;
  Tensor<T> w_disc, b_disc, w_speed, b_speed;
};

template <typename T>
MovNetGradients<T> movnet_gradients(const MovNet<T>& model, std::span<const MotionSample> batch);

struct MovNetTrainConfig {
  nn::AdamConfig adam{1e-3, 5e-6, 0.9, 0.999, 1e-8};
  std::size_t batch_size = 16;
  std::size_t epochs = 50;
  bool cosine_decay = true;  // lr follows a half cosine from adam.lr to 0
  std::uint64_t seed = 0;
};

struct MovNetEval {
  double accuracy = 0.0;   // percent
  double speed_mae = 0.0;  // normalised units, over samples with known speed
};

MovNetEval evaluate(const MovNet<float>& model, std::span<const MotionSample> samples);

/// End-to-end Adam training; `on_epoch(epoch, mean loss)` after each epoch.
std::vector<double> train_movnet(MovNet<float>& model, const std::vector<MotionSample>& samples,
                                 const MovNetTrainConfig& config,
                                 const std::function<void(std::size_t, double)>& on_epoch = {});

/// Pooled representations [N, d] of the given clips.
TensorF movnet_features(const MovNet<float>& model, const std::vector<std::vector<TensorF>>& clips);

}  // namespace iclp::movnet
