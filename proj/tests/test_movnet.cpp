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


#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "iclp/error.hpp"
#include "iclp/movnet.hpp"
#include "test_util.hpp"

namespace iclp {
namespace {

using movnet::MotionConfig;
using movnet::MotionLabel;

MotionConfig small_cfg() {
  MotionConfig c;
  c.frames = 4;
  c.crop = 16;
  c.working_size = 16;
  c.v_max = 2.0;
  c.sprite_radius = 3.0;
  return c;
}

EncoderPlan small_plan() {
  EncoderPlan p;
  p.channels = {2, 2, 3, 3, 4, 4};
  return p;
}

// ---- clip generation ----

TEST(Egomotion, ZeroSpeedGivesIdenticalFrames) {
  const auto cfg = small_cfg();
  Rng rng(1);
  const TensorF still = movnet::gen_texture(cfg.still_size(), cfg.still_size(), rng);
  const auto s = movnet::gen_pseudo_egomotion(still, cfg, rng, 0.0);
  ASSERT_EQ(s.frames.size(), 4u);
  for (const auto& f : s.frames) EXPECT_EQ(f, s.frames[0]);
  EXPECT_EQ(s.speed, 0.0);
  EXPECT_EQ(s.label, MotionLabel::kEgomotion);
}

TEST(Egomotion, MaxSpeedHorizontalAdvancesPerFrame) {
  const auto cfg = small_cfg();
  Rng rng(2);
  const TensorF still = movnet::gen_texture(cfg.still_size(), cfg.still_size(), rng);
  const auto s = movnet::gen_pseudo_egomotion(still, cfg, rng, cfg.v_max, 0.0);
  EXPECT_EQ(s.speed, 1.0);
  for (std::size_t t = 1; t < cfg.frames; ++t) {
    EXPECT_NEAR(s.track[t][0] - s.track[t - 1][0], cfg.v_max, 1e-12);
    EXPECT_NEAR(s.track[t][1], s.track[0][1], 1e-12);
    // frame t is frame t-1 moved left by v_max pixels
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < cfg.crop; ++y)
        for (std::size_t x = 0; x + 2 < cfg.crop; ++x)
          ASSERT_NEAR(s.frames[t].at(c, y, x), s.frames[t - 1].at(c, y, x + 2), 1e-5);
  }
}

TEST(Egomotion, SpeedLabelAndRange) {
  const auto cfg = small_cfg();
  Rng rng(3);
  const TensorF still = movnet::gen_texture(cfg.still_size(), cfg.still_size(), rng);
  const auto s = movnet::gen_pseudo_egomotion(still, cfg, rng, 0.5, 1.0);
  EXPECT_DOUBLE_EQ(s.speed, 0.25);
  EXPECT_THROW(movnet::gen_pseudo_egomotion(still, cfg, rng, 2.5), ConfigError);
  const TensorF small = movnet::gen_texture(cfg.crop, cfg.crop, rng);
  EXPECT_THROW(movnet::gen_pseudo_egomotion(small, cfg, rng, 2.0, 0.0), DataError);
  for (const float v : still) {
    EXPECT_GE(v, 0.1f - 1e-6f);
    EXPECT_LE(v, 0.7f + 1e-6f);
  }
}

TEST(SceneMotion, SpriteStaysInViewOverStaticBackground) {
  const auto cfg = small_cfg();
  Rng rng(4);
  const TensorF bg = movnet::gen_texture(cfg.crop, cfg.crop, rng);
  const auto s = movnet::gen_scene_motion(bg, cfg, rng, cfg.v_max, 0.3);
  EXPECT_EQ(s.label, MotionLabel::kSceneMotion);
  EXPECT_EQ(s.speed, 1.0);
  for (const auto& p : s.track) {
    EXPECT_GE(p[0], cfg.sprite_radius);
    EXPECT_LE(p[0], 16.0 - cfg.sprite_radius);
  }
  // pixels far from every sprite position keep the background value
  std::size_t untouched = 0;
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x) {
      bool far = true;
      for (const auto& p : s.track) far = far && std::hypot(x + 0.5 - p[0], y + 0.5 - p[1]) > cfg.sprite_radius + 2;
      if (!far) continue;
      ++untouched;
      for (const auto& f : s.frames) EXPECT_EQ(f.at(0, y, x), bg.at(0, y, x));
    }
  EXPECT_GT(untouched, 0u);
  EXPECT_THROW(movnet::gen_scene_motion(bg, cfg, rng, 0.5), ConfigError);
}

TEST(SceneMotion, RealFramesHaveUnknownSpeed) {
  const auto cfg = small_cfg();
  const std::vector<TensorF> frames(4, TensorF({3, 20, 20}, 0.5f));
  const auto s = movnet::scene_motion_from_frames(frames, cfg);
  EXPECT_TRUE(std::isnan(s.speed));
  EXPECT_EQ(s.frames[0].shape(), (Shape{3, 16, 16}));
  EXPECT_THROW(movnet::scene_motion_from_frames({frames[0]}, cfg), DataError);
}

TEST(MotionDataset, SeededAndBalanced) {
  const auto cfg = small_cfg();
  const auto a = movnet::gen_motion_dataset(3, 2, cfg, 9), b = movnet::gen_motion_dataset(3, 2, cfg, 9);
  ASSERT_EQ(a.train.size(), 6u);
  ASSERT_EQ(a.test.size(), 4u);
  std::size_t ego = 0;
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].frames, b.train[i].frames);
    EXPECT_EQ(a.train[i].speed, b.train[i].speed);
    ego += a.train[i].label == MotionLabel::kEgomotion;
  }
  EXPECT_EQ(ego, 3u);
  const auto c = movnet::gen_motion_dataset(3, 2, cfg, 10);
  EXPECT_NE(c.train[0].frames[0], a.train[0].frames[0]);
}

TEST(ActionDataset, StaticClassesDoNotMove) {
  movnet::ActionSpec spec;
  spec.motion = small_cfg();
  spec.train_per_class = 2;
  spec.test_per_class = 1;
  spec.v_min = 1.0;
  const auto ds = movnet::gen_action_dataset(spec);
  ASSERT_EQ(ds.train.size(), 8u);
  EXPECT_EQ(ds.num_classes(), 4u);
  for (const auto& item : ds.train) {
    ASSERT_EQ(item.frames.size(), 4u);
    const bool moving = item.labels[0] % 2 == 1;
    EXPECT_EQ(item.frames[0] == item.frames[3], !moving);
    EXPECT_EQ(item.image.shape(), (Shape{3, 16, 16}));
  }
}

TEST(StackPairs, ChannelsAreCentredConsecutiveFrames) {
  const std::vector<TensorF> frames = {TensorF({3, 2, 2}, 0.0f), TensorF({3, 2, 2}, 1.0f), TensorF({3, 2, 2}, 0.5f)};
  const TensorD p = movnet::stack_pairs<double>(frames);
  ASSERT_EQ(p.shape(), (Shape{2, 6, 2, 2}));
  EXPECT_EQ(p.at(0, 0, 0, 0), -0.5);
  EXPECT_EQ(p.at(0, 3, 1, 1), 0.5);
  EXPECT_EQ(p.at(1, 2, 0, 1), 0.5);
  EXPECT_EQ(p.at(1, 5, 0, 1), 0.0);
  EXPECT_THROW(movnet::stack_pairs<double>({frames[0]}), ConfigError);
}

// ---- loss ----

TEST(MovNetLoss, ClosedForm) {
  EXPECT_LT(movnet::movnet_loss_value(10.0, 0.3, MotionLabel::kEgomotion, 0.3), 1e-4);
  EXPECT_LT(movnet::movnet_loss_value(-10.0, 0.3, MotionLabel::kSceneMotion, 0.3), 1e-4);
  EXPECT_NEAR(movnet::movnet_loss_value(0.0, 0.3, MotionLabel::kEgomotion, 0.3), std::numbers::ln2, 1e-15);
  EXPECT_NEAR(movnet::movnet_loss_value(0.0, 0.5, MotionLabel::kSceneMotion, 0.1), std::numbers::ln2 + 0.16, 1e-15);
  EXPECT_NEAR(movnet::movnet_loss_value(0.0, 0.5, MotionLabel::kSceneMotion, NAN), std::numbers::ln2, 1e-15);
  EXPECT_TRUE(std::isfinite(movnet::movnet_loss_value(800.0, 0.0, MotionLabel::kSceneMotion, 0.0)));
}

TEST(MovNetLoss, ZeroHeadsGiveLnTwoPlusSpeedError) {
  const auto cfg = small_cfg();
  Rng rng(11);
  movnet::MovNet<double> m(small_plan(), rng);
  m.w_disc.fill(0.0);
  m.w_speed.fill(0.0);
  m.b_disc.fill(0.0);
  m.b_speed.fill(0.5);
  const auto ds = movnet::gen_motion_dataset(2, 1, cfg, 12);
  double se = 0.0;
  for (const auto& s : ds.train) se += (0.5 - s.speed) * (0.5 - s.speed);
  EXPECT_NEAR(movnet::movnet_loss(m, std::span(ds.train)), std::numbers::ln2 + se / 4, 1e-12);
  // unknown speeds drop out of the regression mean
  auto batch = ds.train;
  batch[1].speed = NAN;
  se -= (0.5 - ds.train[1].speed) * (0.5 - ds.train[1].speed);
  EXPECT_NEAR(movnet::movnet_loss(m, std::span(batch)), std::numbers::ln2 + se / 3, 1e-12);
}

TEST(MovNetLoss, GradientsMatchFiniteDifferences) {
  const auto cfg = small_cfg();
  Rng rng(13);
  movnet::MovNet<double> m(small_plan(), rng);
  // zero biases put dead regions exactly on the ReLU kink
  for (std::size_t l = 0; l < 6; ++l) m.encoder.bias(l) = random_tensor<double>(m.encoder.bias(l).shape(), rng, 0.05, 0.2);
  const auto ds = movnet::gen_motion_dataset(1, 1, cfg, 14);
  const std::span batch(ds.train);
  const auto g = movnet::movnet_gradients(m, batch);

  std::vector<TensorD> params;
  for (std::size_t l = 0; l < 6; ++l) params.push_back(m.encoder.weight(l));
  for (std::size_t l = 0; l < 6; ++l) params.push_back(m.encoder.bias(l));
  params.insert(params.end(), {m.w_disc, m.b_disc, m.w_speed, m.b_speed});
  const auto fd = finite_differences(params, [&](const std::vector<TensorD>& v) {
    movnet::MovNet<double> c = m;
    for (std::size_t l = 0; l < 6; ++l) {
      c.encoder.weight(l) = v[l];
      c.encoder.bias(l) = v[6 + l];
    }
    c.w_disc = v[12];
    c.b_disc = v[13];
    c.w_speed = v[14];
    c.b_speed = v[15];
    return movnet::movnet_loss(c, batch);
  });
  for (std::size_t l = 0; l < 6; ++l) {
    EXPECT_LT(normwise_rel_err(g.weight[l], fd[l]), 1e-6) << "weight " << l;
    EXPECT_LT(normwise_rel_err(g.bias[l], fd[6 + l]), 1e-6) << "bias " << l;
  }
  EXPECT_LT(normwise_rel_err(g.w_disc, fd[12]), 1e-6);
  EXPECT_LT(normwise_rel_err(g.b_disc, fd[13]), 1e-6);
  EXPECT_LT(normwise_rel_err(g.w_speed, fd[14]), 1e-6);
  EXPECT_LT(normwise_rel_err(g.b_speed, fd[15]), 1e-6);
}

// ---- model ----

TEST(MovNetModel, ForwardIsDeterministicAndSixChannel) {
  const auto cfg = small_cfg();
  Rng rng(15);
  const movnet::MovNet<float> m(small_plan(), rng);
  EXPECT_EQ(m.encoder.plan().in_channels, 6u);
  EXPECT_EQ(m.dim(), 4u);
  const auto ds = movnet::gen_motion_dataset(1, 1, cfg, 16);
  const auto a = m.forward(ds.train[0].frames), b = m.forward(ds.train[0].frames);
  EXPECT_EQ(a.logit, b.logit);
  EXPECT_EQ(a.pooled, b.pooled);
  const TensorF f = movnet::movnet_features(m, {ds.train[0].frames, ds.train[1].frames});
  ASSERT_EQ(f.shape(), (Shape{2, 4}));
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(f.at(0, j), a.pooled[j]);
}

TEST(MovNetModel, TrainingReducesLoss) {
  auto cfg = small_cfg();
  Rng rng(17);
  movnet::MovNet<float> m(small_plan(), rng);
  const auto ds = movnet::gen_motion_dataset(4, 1, cfg, 18);
  movnet::MovNetTrainConfig tc;
  tc.epochs = 15;
  tc.batch_size = 4;
  const std::uint64_t before = m.checksum();
  const auto losses = movnet::train_movnet(m, ds.train, tc);
  ASSERT_EQ(losses.size(), 15u);
  EXPECT_LT(losses.back(), losses.front());
  EXPECT_NE(m.checksum(), before);
  const auto e = movnet::evaluate(m, std::span(ds.train));
  EXPECT_GE(e.accuracy, 0.0);
  EXPECT_TRUE(std::isfinite(e.speed_mae));
}

}  // namespace
}  // namespace iclp
