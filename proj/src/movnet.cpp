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


#include "iclp/movnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "iclp/autograd.hpp"
#include "iclp/error.hpp"
#include "iclp/image.hpp"
#include "iclp/parallel.hpp"

namespace iclp::movnet {

void MotionConfig::validate() const {
  if (frames < 2) throw ConfigError("motion clips need at least 2 frames");
  if (crop < 8 || working_size < 4) throw ConfigError("motion crop/working size too small");
  if (!(v_max > 0.0)) throw ConfigError("v_max must be positive");
  if (scene_v_min < 0.0 || scene_v_min > v_max) throw ConfigError("scene_v_min must be in [0, v_max]");
  if (!(sprite_radius > 0.0) || 2.0 * sprite_radius >= static_cast<double>(crop)) {
    throw ConfigError("sprite radius must be positive and fit in the crop");
  }
}

std::size_t MotionConfig::still_size() const {
  return crop + static_cast<std::size_t>(std::ceil(static_cast<double>(frames - 1) * v_max)) + 2;
}

TensorF gen_texture(std::size_t h, std::size_t w, Rng& rng) {
  // Wavelengths of at least 3 v_max keep frame differences monotone in the
  // shift; fixed amplitudes keep the contrast comparable between stills.
  constexpr int kWaves = 4;
  TensorF out({3, h, w});
  for (std::size_t c = 0; c < 3; ++c) {
    std::array<double, kWaves> fx{}, fy{}, ph{}, amp{};
    for (int k = 0; k < kWaves; ++k) {
      const double f = rng.uniform(1.0 / 64.0, 1.0 / 24.0);
      const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
      fx[k] = f * std::cos(a);
      fy[k] = f * std::sin(a);
      ph[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
      amp[k] = 0.07;
    }
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double v = 0.4;
        for (int k = 0; k < kWaves; ++k) {
          v += amp[k] * std::sin(2.0 * std::numbers::pi * (fx[k] * static_cast<double>(x) + fy[k] * static_cast<double>(y)) + ph[k]);
        }
        out.at(c, y, x) = static_cast<float>(v);
      }
    }
  }
  return out;
}

namespace {

float sample_bilinear(const TensorF& img, std::size_t c, double y, double x) {
  const std::size_t h = img.dim(1), w = img.dim(2);
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const std::size_t y0 = static_cast<std::size_t>(y), x0 = static_cast<std::size_t>(x);
  const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
  const double top = (1 - fx) * img.at(c, y0, x0) + fx * img.at(c, y0, x1);
  const double bot = (1 - fx) * img.at(c, y1, x0) + fx * img.at(c, y1, x1);
  return static_cast<float>((1 - fy) * top + fy * bot);
}

TensorF to_working(TensorF frame, std::size_t size) {
  if (frame.dim(1) == size && frame.dim(2) == size) return frame;
  return image::resize_bilinear(frame, size, size);
}

// Antialiased disc (or axis-aligned square) with stripes that move with it.
void draw_sprite(TensorF& f, double cx, double cy, double r, const std::array<float, 3>& colour, double stripe,
                 bool square) {
  constexpr int kSuper = 4;
  const std::size_t h = f.dim(1), w = f.dim(2);
  const std::size_t y_lo = static_cast<std::size_t>(std::max(0.0, std::floor(cy - r - 1)));
  const std::size_t x_lo = static_cast<std::size_t>(std::max(0.0, std::floor(cx - r - 1)));
  const std::size_t y_hi = std::min(h, static_cast<std::size_t>(std::max(0.0, std::ceil(cy + r + 1))));
  const std::size_t x_hi = std::min(w, static_cast<std::size_t>(std::max(0.0, std::ceil(cx + r + 1))));
  for (std::size_t y = y_lo; y < y_hi; ++y) {
    for (std::size_t x = x_lo; x < x_hi; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSuper; ++sy)
        for (int sx = 0; sx < kSuper; ++sx) {
          const double ux = static_cast<double>(x) + (sx + 0.5) / kSuper - cx;
          const double uy = static_cast<double>(y) + (sy + 0.5) / kSuper - cy;
          const bool in = square ? std::max(std::abs(ux), std::abs(uy)) <= 0.85 * r : ux * ux + uy * uy <= r * r;
          hits += in ? 1 : 0;
        }
      if (hits == 0) continue;
      const double cov = static_cast<double>(hits) / (kSuper * kSuper);
      const double ux = static_cast<double>(x) + 0.5 - cx, uy = static_cast<double>(y) + 0.5 - cy;
      const double tex = 0.8 + 0.2 * std::sin(1.2 * (ux * std::cos(stripe) + uy * std::sin(stripe)));
      for (std::size_t k = 0; k < 3; ++k) {
        f.at(k, y, x) = static_cast<float>((1.0 - cov) * f.at(k, y, x) + cov * colour[k] * tex);
      }
    }
  }
}

// Fold p into [lo, hi] by mirror reflection.
double reflect(double p, double lo, double hi) {
  const double len = hi - lo;
  if (len <= 0.0) return lo;
  double u = std::fmod(p - lo, 2.0 * len);
  if (u < 0) u += 2.0 * len;
  return lo + (u > len ? 2.0 * len - u : u);
}

}  // namespace

MotionSample gen_pseudo_egomotion(const TensorF& still, const MotionConfig& cfg, Rng& rng, std::optional<double> v,
                                  std::optional<double> angle) {
  cfg.validate();
  if (still.rank() != 3 || still.dim(0) != 3) throw ConfigError("egomotion still must be [3,H,W]");
  const double speed = v ? *v : rng.uniform(0.0, cfg.v_max);
  const double theta = angle ? *angle : rng.uniform(0.0, 2.0 * std::numbers::pi);
  if (speed < 0.0 || speed > cfg.v_max) throw ConfigError("egomotion speed outside [0, v_max]");
  const double span = static_cast<double>(cfg.frames - 1) * speed;
  const double dx = span * std::cos(theta), dy = span * std::sin(theta);
  const double h = static_cast<double>(still.dim(1)), w = static_cast<double>(still.dim(2));
  const double c = static_cast<double>(cfg.crop);
  const double x_lo = std::max(0.0, -dx), x_hi = w - c - std::max(0.0, dx);
  const double y_lo = std::max(0.0, -dy), y_hi = h - c - std::max(0.0, dy);
  if (x_hi < x_lo || y_hi < y_lo) {
    throw DataError("still of " + shape_str(still.shape()) + " is too small for the egomotion path");
  }
  const double x0 = rng.uniform(x_lo, x_hi), y0 = rng.uniform(y_lo, y_hi);
  MotionSample s;
  s.label = MotionLabel::kEgomotion;
  s.velocity = speed;
  s.speed = speed / cfg.v_max;
  s.direction = theta;
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    const double ox = x0 + static_cast<double>(t) * speed * std::cos(theta);
    const double oy = y0 + static_cast<double>(t) * speed * std::sin(theta);
    s.track.push_back({ox, oy});
    TensorF f({3, cfg.crop, cfg.crop});
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t y = 0; y < cfg.crop; ++y)
        for (std::size_t x = 0; x < cfg.crop; ++x)
          f.at(k, y, x) = sample_bilinear(still, k, oy + static_cast<double>(y), ox + static_cast<double>(x));
    s.frames.push_back(to_working(std::move(f), cfg.working_size));
  }
  return s;
}

MotionSample gen_scene_motion(const TensorF& background, const MotionConfig& cfg, Rng& rng, std::optional<double> v,
                              std::optional<double> angle) {
  cfg.validate();
  if (background.rank() != 3 || background.dim(0) != 3 || background.dim(1) != cfg.crop ||
      background.dim(2) != cfg.crop) {
    throw ConfigError("scene background must be [3," + std::to_string(cfg.crop) + "," + std::to_string(cfg.crop) +
                      "]");
  }
  const double speed = v ? *v : rng.uniform(cfg.scene_v_min, cfg.v_max);
  const double theta = angle ? *angle : rng.uniform(0.0, 2.0 * std::numbers::pi);
  if (speed < cfg.scene_v_min || speed > cfg.v_max) throw ConfigError("scene speed outside [scene_v_min, v_max]");
  const double r = cfg.sprite_radius, c = static_cast<double>(cfg.crop);
  const double px = rng.uniform(r, c - r), py = rng.uniform(r, c - r);
  std::array<float, 3> colour{};
  for (auto& col : colour) col = static_cast<float>(rng.uniform(0.8, 0.95));
  const double stripe = rng.uniform(0.0, std::numbers::pi);

  MotionSample s;
  s.label = MotionLabel::kSceneMotion;
  s.velocity = speed;
  s.speed = speed / cfg.v_max;
  s.direction = theta;
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    const double cx = reflect(px + static_cast<double>(t) * speed * std::cos(theta), r, c - r);
    const double cy = reflect(py + static_cast<double>(t) * speed * std::sin(theta), r, c - r);
    s.track.push_back({cx, cy});
    TensorF f = background;
    draw_sprite(f, cx, cy, r, colour, stripe, false);
    s.frames.push_back(to_working(std::move(f), cfg.working_size));
  }
  return s;
}

MotionSample scene_motion_from_frames(const std::vector<TensorF>& frames, const MotionConfig& cfg) {
  if (frames.size() != cfg.frames) {
    throw DataError("scene clip has " + std::to_string(frames.size()) + " frames, expected " +
                    std::to_string(cfg.frames));
  }
  MotionSample s;
  s.label = MotionLabel::kSceneMotion;
  s.speed = std::numeric_limits<double>::quiet_NaN();
  s.velocity = std::numeric_limits<double>::quiet_NaN();
  for (const auto& f : frames) s.frames.push_back(to_working(f, cfg.working_size));
  return s;
}

MotionDataset gen_motion_dataset(std::size_t train_per_class, std::size_t test_per_class, const MotionConfig& cfg,
                                 std::uint64_t seed) {
  cfg.validate();
  const Rng root(seed);
  auto make = [&](std::size_t per_class, std::uint64_t stream) {
    std::vector<MotionSample> out(2 * per_class);
    const Rng base = root.fork(stream);
    parallel_for(out.size(), [&](std::size_t i) {
      Rng rng = base.fork(i);
      if (i % 2 == 0) {
        const TensorF still = gen_texture(cfg.still_size(), cfg.still_size(), rng);
        out[i] = gen_pseudo_egomotion(still, cfg, rng);
      } else {
        const TensorF bg = gen_texture(cfg.crop, cfg.crop, rng);
        out[i] = gen_scene_motion(bg, cfg, rng);
      }
    });
    return out;
  };
  return {make(train_per_class, 1), make(test_per_class, 2)};
}

void ActionSpec::validate() const {
  motion.validate();
  if (train_per_class == 0 || test_per_class == 0) throw ConfigError("action clip counts must be positive");
  if (v_min <= 0.0 || v_min > motion.v_max) throw ConfigError("action v_min must be in (0, v_max]");
}

io::ImageDataset gen_action_dataset(const ActionSpec& spec) {
  spec.validate();
  const MotionConfig& cfg = spec.motion;
  io::ImageDataset ds;
  ds.class_names = {"disc_static", "disc_moving", "square_static", "square_moving"};
  const Rng root(spec.seed);
  auto make = [&](std::size_t per_class, std::uint64_t stream) {
    std::vector<io::ImageItem> items(per_class * 4);
    const Rng base = root.fork(stream);
    parallel_for(items.size(), [&](std::size_t i) {
      Rng rng = base.fork(i);
      const int cls = static_cast<int>(i % 4);
      const bool square = cls >= 2, moving = cls % 2 == 1;
      const TensorF bg = gen_texture(cfg.crop, cfg.crop, rng);
      const double r = cfg.sprite_radius, c = static_cast<double>(cfg.crop);
      const double speed = moving ? rng.uniform(spec.v_min, cfg.v_max) : 0.0;
      const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double px = rng.uniform(r, c - r), py = rng.uniform(r, c - r);
      std::array<float, 3> colour{};
      for (auto& col : colour) col = static_cast<float>(rng.uniform(0.8, 0.95));
      const double stripe = rng.uniform(0.0, std::numbers::pi);
      io::ImageItem item;
      item.labels = {cls};
      for (std::size_t t = 0; t < cfg.frames; ++t) {
        const double cx = reflect(px + static_cast<double>(t) * speed * std::cos(theta), r, c - r);
        const double cy = reflect(py + static_cast<double>(t) * speed * std::sin(theta), r, c - r);
        TensorF f = bg;
        draw_sprite(f, cx, cy, r, colour, stripe, square);
        if (t == cfg.frames / 2) item.image = f;
        item.frames.push_back(to_working(std::move(f), cfg.working_size));
      }
      items[i] = std::move(item);
    });
    return items;
  };
  ds.train = make(spec.train_per_class, 1);
  ds.test = make(spec.test_per_class, 2);
  return ds;
}

template <typename T>
Tensor<T> stack_pairs(const std::vector<TensorF>& frames) {
  if (frames.size() < 2) throw ConfigError("need at least 2 frames to form pairs");
  const Shape& fs = frames[0].shape();
  if (fs.size() != 3 || fs[0] != 3) throw ConfigError("frames must be [3,H,W]");
  const std::size_t n = frames[0].size();
  Tensor<T> out({frames.size() - 1, 6, fs[1], fs[2]});
  for (std::size_t t = 0; t + 1 < frames.size(); ++t) {
    if (frames[t + 1].shape() != fs) throw ConfigError("frames of one clip differ in shape");
    T* dst = out.data() + t * 2 * n;
    for (std::size_t i = 0; i < n; ++i) {
      dst[i] = static_cast<T>(frames[t][i]) - T(0.5);
      dst[n + i] = static_cast<T>(frames[t + 1][i]) - T(0.5);
    }
  }
  return out;
}

template <typename T>
MovNet<T>::MovNet(EncoderPlan plan, Rng& rng) {
  plan.in_channels = 6;
  encoder = Encoder<T>(std::move(plan), rng);
  const std::size_t d = encoder.output_dim();
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  w_disc = Tensor<T>({1, d});
  w_speed = Tensor<T>({1, d});
  for (auto& v : w_disc) v = static_cast<T>(rng.uniform(-bound, bound));
  for (auto& v : w_speed) v = static_cast<T>(rng.uniform(-bound, bound));
  b_disc = Tensor<T>({1});
  b_speed = Tensor<T>({1});
}

template <typename T>
typename MovNet<T>::Output MovNet<T>::forward(const std::vector<TensorF>& frames) const {
  const Tensor<T> emb = encoder.embed(stack_pairs<T>(frames));  // [P, d]
  const std::size_t p = emb.dim(0), d = emb.dim(1);
  Output out;
  out.pooled = Tensor<T>({d});
  for (std::size_t j = 0; j < d; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p; ++i) acc += emb.at(i, j);
    out.pooled[j] = static_cast<T>(acc / static_cast<double>(p));
  }
  double logit = b_disc[0], speed = b_speed[0];
  for (std::size_t j = 0; j < d; ++j) {
    logit += static_cast<double>(w_disc[j]) * out.pooled[j];
    speed += static_cast<double>(w_speed[j]) * out.pooled[j];
  }
  out.logit = logit;
  out.speed = speed;
  return out;
}

template <typename T>
std::uint64_t MovNet<T>::checksum() const {
  std::vector<const Tensor<T>*> all;
  for (std::size_t l = 0; l < encoder.num_layers(); ++l) {
    all.push_back(&encoder.weight(l));
    all.push_back(&encoder.bias(l));
  }
  for (const auto* t : {&w_disc, &b_disc, &w_speed, &b_speed}) all.push_back(t);
  return tensor_checksum(all);
}

namespace {

template <typename T>
struct TapedLoss {
  nn::Var<T> loss;
  typename Encoder<T>::Taped enc;
  nn::Var<T> w_disc, b_disc, w_speed, b_speed;
};

template <typename T>
TapedLoss<T> build_loss(nn::Tape<T>& tape, const MovNet<T>& model, std::span<const MotionSample> batch) {
  if (batch.empty()) throw ConfigError("movnet loss of an empty batch");
  const std::size_t frames = batch[0].frames.size();
  std::vector<T> data;
  Shape pair_shape;
  Tensor<T> labels({batch.size(), 1});
  std::vector<std::size_t> known;
  std::vector<T> speeds;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].frames.size() != frames) throw ConfigError("movnet batch mixes clip lengths");
    const Tensor<T> pairs = stack_pairs<T>(batch[i].frames);
    if (pair_shape.empty()) pair_shape = pairs.shape();
    data.insert(data.end(), pairs.begin(), pairs.end());
    labels[i] = batch[i].label == MotionLabel::kEgomotion ? T{1} : T{0};
    if (std::isfinite(batch[i].speed)) {
      known.push_back(i);
      speeds.push_back(static_cast<T>(batch[i].speed));
    }
  }
  Shape s = pair_shape;
  s[0] *= batch.size();
  TapedLoss<T> out;
  auto x = tape.constant(Tensor<T>(s, std::move(data)));
  out.enc = model.encoder.forward(tape, x, false, true);
  auto pooled = nn::group_mean(out.enc.pooled.back(), frames - 1);  // [B, d]
  out.w_disc = tape.leaf(model.w_disc);
  out.b_disc = tape.leaf(model.b_disc);
  out.w_speed = tape.leaf(model.w_speed);
  out.b_speed = tape.leaf(model.b_speed);
  auto logit = nn::linear<T>(pooled, out.w_disc, out.b_disc);   // [B, 1]
  auto speed = nn::linear<T>(pooled, out.w_speed, out.b_speed);  // [B, 1]
  out.loss = nn::sigmoid_bce(logit, labels);
  if (!known.empty()) {
    auto sp = nn::gather_rows(speed, std::span<const std::size_t>(known));
    out.loss = nn::add(out.loss, nn::mse(sp, Tensor<T>({known.size(), 1}, speeds)));
  }
  return out;
}

}  // namespace

template <typename T>
double movnet_loss(const MovNet<T>& model, std::span<const MotionSample> batch) {
  nn::Tape<T> tape;
  return static_cast<double>(build_loss(tape, model, batch).loss.value()[0]);
}

double movnet_loss_value(double logit, double speed_pred, MotionLabel label, double speed) {
  const double y = label == MotionLabel::kEgomotion ? 1.0 : 0.0;
  // stable log(1 + exp(-|z|)) form of the BCE with logits
  const double bce = std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::abs(logit)));
  const double se = std::isfinite(speed) ? (speed_pred - speed) * (speed_pred - speed) : 0.0;
  return bce + se;
}

template <typename T>
MovNetGradients<T> movnet_gradients(const MovNet<T>& model, std::span<const MotionSample> batch) {
  nn::Tape<T> tape;
  auto tl = build_loss(tape, model, batch);
  MovNetGradients<T> g;
  g.loss = static_cast<double>(tl.loss.value()[0]);
  if (!std::isfinite(g.loss)) throw NumericError("movnet loss is not finite");
  tape.backward(tl.loss);
  for (std::size_t l = 0; l < tl.enc.weights.size(); ++l) {
    g.weight.push_back(tape.grad_or_zero(tl.enc.weights[l]));
    g.bias.push_back(tape.grad_or_zero(tl.enc.biases[l]));
  }
  g.w_disc = tape.grad_or_zero(tl.w_disc);
  g.b_disc = tape.grad_or_zero(tl.b_disc);
  g.w_speed = tape.grad_or_zero(tl.w_speed);
  g.b_speed = tape.grad_or_zero(tl.b_speed);
  return g;
}

MovNetEval evaluate(const MovNet<float>& model, std::span<const MotionSample> samples) {
  if (samples.empty()) throw DataError("movnet evaluation on an empty set");
  std::vector<MovNet<float>::Output> outs(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) { outs[i] = model.forward(samples[i].frames); });
  std::size_t right = 0, known = 0;
  double abs_err = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const bool ego = outs[i].logit > 0.0;
    if (ego == (samples[i].label == MotionLabel::kEgomotion)) ++right;
    if (std::isfinite(samples[i].speed)) {
      abs_err += std::abs(outs[i].speed - samples[i].speed);
      ++known;
    }
  }
  MovNetEval e;
  e.accuracy = 100.0 * static_cast<double>(right) / static_cast<double>(samples.size());
  e.speed_mae = known ? abs_err / static_cast<double>(known) : std::numeric_limits<double>::quiet_NaN();
  return e;
}

std::vector<double> train_movnet(MovNet<float>& model, const std::vector<MotionSample>& samples,
                                 const MovNetTrainConfig& config,
                                 const std::function<void(std::size_t, double)>& on_epoch) {
  if (samples.empty()) throw DataError("movnet training on an empty set");
  if (config.batch_size == 0) throw ConfigError("movnet batch size must be positive");
  std::vector<TensorF*> params;
  for (std::size_t l = 0; l < model.encoder.num_layers(); ++l) params.push_back(&model.encoder.weight(l));
  for (std::size_t l = 0; l < model.encoder.num_layers(); ++l) params.push_back(&model.encoder.bias(l));
  for (auto* t : {&model.w_disc, &model.b_disc, &model.w_speed, &model.b_speed}) params.push_back(t);
  nn::AdamState<float> adam(config.adam, params);
  Rng order_rng = Rng(config.seed).fork(1);
  std::vector<std::size_t> perm(samples.size());
  std::vector<double> history;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    order_rng.shuffle(perm.begin(), perm.end());
    if (config.cosine_decay) {
      const double progress = static_cast<double>(epoch - 1) / static_cast<double>(config.epochs);
      adam.set_lr(config.adam.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
    }
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b0 = 0; b0 < perm.size(); b0 += config.batch_size) {
      const std::size_t b1 = std::min(perm.size(), b0 + config.batch_size);
      std::vector<MotionSample> batch;
      for (std::size_t i = b0; i < b1; ++i) batch.push_back(samples[perm[i]]);
      auto g = movnet_gradients(model, std::span<const MotionSample>(batch));
      std::vector<TensorF> grads;
      for (auto& t : g.weight) grads.push_back(std::move(t));
      for (auto& t : g.bias) grads.push_back(std::move(t));
      grads.push_back(std::move(g.w_disc));
      grads.push_back(std::move(g.b_disc));
      grads.push_back(std::move(g.w_speed));
      grads.push_back(std::move(g.b_speed));
      adam.step(params, grads);
      sum += g.loss;
      ++batches;
    }
    history.push_back(sum / static_cast<double>(batches));
    if (on_epoch) on_epoch(epoch, history.back());
  }
  return history;
}

TensorF movnet_features(const MovNet<float>& model, const std::vector<std::vector<TensorF>>& clips) {
  const std::size_t d = model.dim();
  TensorF out({clips.size(), d});
  parallel_for(clips.size(), [&](std::size_t i) {
    const auto o = model.forward(clips[i]);
    std::copy(o.pooled.begin(), o.pooled.end(), out.data() + i * d);
  });
  return out;
}

template TensorF stack_pairs<float>(const std::vector<TensorF>&);
template TensorD stack_pairs<double>(const std::vector<TensorF>&);
template struct MovNet<float>;
template struct MovNet<double>;
template double movnet_loss<float>(const MovNet<float>&, std::span<const MotionSample>);
template double movnet_loss<double>(const MovNet<double>&, std::span<const MotionSample>);
template MovNetGradients<float> movnet_gradients<float>(const MovNet<float>&, std::span<const MotionSample>);
template MovNetGradients<double> movnet_gradients<double>(const MovNet<double>&, std::span<const MotionSample>);

}  // namespace iclp::movnet
