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

#include "iclp/error.hpp"
#include "iclp/probe.hpp"
#include "test_util.hpp"

namespace iclp {
namespace {

using probe::AverageMode;
using probe::Task;

clapp::ImagePathway tiny_pathway(const std::string& name, ops::Operator op, std::uint64_t seed) {
  EncoderPlan plan;
  plan.channels = {4, 4, 4, 4, 6, 6};
  Rng rng(seed);
  return clapp::ImagePathway::create(name, op, plan, 2, rng);
}

// ---- features ----

TEST(Features, SinglePathwayIsMeanOfPatchEmbeddings) {
  const auto p = tiny_pathway("plain", ops::Operator::kIdentity, 1);
  Rng rng(2);
  const std::vector<TensorF> images = {random_tensor<float>({3, 32, 32}, rng, 0, 1),
                                       random_tensor<float>({3, 32, 32}, rng, 0, 1)};
  const seq::PatchGeometry geom;
  const TensorF f = probe::pathway_features(p, images, geom);
  ASSERT_EQ(f.shape(), (Shape{2, 6}));
  for (std::size_t i = 0; i < 2; ++i) {
    const auto seq = clapp::pathway_patches(p, images[i], geom);
    const TensorF z = p.encoder.embed(seq.patches);
    for (std::size_t j = 0; j < 6; ++j) {
      double m = 0.0;
      for (std::size_t t = 0; t < z.dim(0); ++t) m += z.at(t, j);
      EXPECT_NEAR(f.at(i, j), m / z.dim(0), 1e-6);
    }
  }
  const TensorF blocks[] = {f};
  const std::string names[] = {"plain"};
  EXPECT_EQ(probe::fuse(names, blocks).values, f);
}

TEST(Features, ThreeBlocksGiveDisjointSlices) {
  const std::string names[] = {"lbp", "rgnorm", "dtcwt"};
  const TensorF blocks[] = {TensorF({2, 256}, 1.0f), TensorF({2, 256}, 2.0f), TensorF({2, 256}, 3.0f)};
  const auto fs = probe::fuse(names, blocks);
  EXPECT_EQ(fs.dim(), 768u);
  ASSERT_EQ(fs.slices.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(fs.slices[k].begin, 256 * k);
    EXPECT_EQ(fs.slices[k].end, 256 * (k + 1));
    EXPECT_EQ(fs.values.at(1, 256 * k + 7), static_cast<float>(k + 1));
  }
  EXPECT_EQ(fs.slice("rgnorm").begin, 256u);
  EXPECT_THROW(fs.slice("plain"), ConfigError);
}

TEST(Features, IdenticalImageGivesIdenticalFeatures) {
  const auto lbp = tiny_pathway("lbp", ops::Operator::kLbp, 3);
  const auto dt = tiny_pathway("dtcwt", ops::Operator::kDtcwt, 4);
  Rng rng(5);
  const TensorF img = random_tensor<float>({3, 32, 32}, rng, 0, 1);
  const clapp::ImagePathway* ps[] = {&lbp, &dt};
  const std::uint64_t before = lbp.encoder.checksum() ^ dt.encoder.checksum();
  const auto fs = probe::extract_features(ps, {img, img}, {});
  for (std::size_t j = 0; j < fs.dim(); ++j) EXPECT_EQ(fs.values.at(0, j), fs.values.at(1, j));
  EXPECT_EQ(lbp.encoder.checksum() ^ dt.encoder.checksum(), before);
}

TEST(Fusion, RegisteredOrder) {
  const std::vector<std::string> good = {"plain", "plain#2", "plain#3", "lbp", "rgnorm", "dtcwt", "movnet"};
  EXPECT_NO_THROW(probe::check_fusion_order(good));
  const std::vector<std::string> swapped = {"rgnorm", "lbp"};
  EXPECT_THROW(probe::check_fusion_order(swapped), ConfigError);
  const std::vector<std::string> dup = {"lbp", "lbp"};
  EXPECT_THROW(probe::check_fusion_order(dup), ConfigError);
  EXPECT_THROW(probe::fusion_rank("sobel"), ConfigError);
  EXPECT_THROW(probe::fusion_rank("plain#x"), ConfigError);
  EXPECT_EQ(probe::sorted_fusion_order({"dtcwt", "plain#2", "lbp", "plain"}),
            (std::vector<std::string>{"plain", "plain#2", "lbp", "dtcwt"}));
  const std::string names[] = {"lbp", "plain"};
  const TensorF blocks[] = {TensorF({1, 2}), TensorF({1, 2})};
  EXPECT_THROW(probe::fuse(names, blocks), ConfigError);
}

TEST(Fusion, ZeroingASliceKeepsTheMapping) {
  Rng rng(6);
  const std::string names[] = {"plain", "lbp"};
  const TensorF blocks[] = {random_tensor<float>({4, 3}, rng), random_tensor<float>({4, 5}, rng)};
  const auto fs = probe::fuse(names, blocks);
  const auto z = probe::zero_slice(fs, "lbp");
  ASSERT_EQ(z.slices.size(), fs.slices.size());
  for (std::size_t k = 0; k < fs.slices.size(); ++k) {
    EXPECT_EQ(z.slices[k].pathway, fs.slices[k].pathway);
    EXPECT_EQ(z.slices[k].begin, fs.slices[k].begin);
    EXPECT_EQ(z.slices[k].end, fs.slices[k].end);
  }
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(z.values.at(i, j), j < 3 ? fs.values.at(i, j) : 0.0f);
  Rng prng(7);
  probe::LinearProbe p(8, 16, 3, Task::kMulticlass, 0.5, prng);
  EXPECT_NE(p.logits(z.values), p.logits(fs.values));
}

// ---- multiclass metrics ----

TEST(Multiclass, AllCorrect) {
  TensorF scores({3, 4});
  const std::vector<int> labels = {0, 3, 2};
  for (std::size_t i = 0; i < 3; ++i) scores.at(i, labels[i]) = 5.0f;
  const auto r = probe::eval_multiclass(scores, labels, 2);
  EXPECT_EQ(r.top1, 100.0);
  EXPECT_EQ(r.topk, 100.0);
  EXPECT_EQ(r.per_class[0], 100.0);
  EXPECT_TRUE(std::isnan(r.per_class[1]));
}

TEST(Multiclass, TrueClassThirdOfTen) {
  TensorF scores({5, 10});
  std::vector<int> labels;
  for (std::size_t i = 0; i < 5; ++i) {
    const int y = static_cast<int>(i * 2);
    labels.push_back(y);
    for (std::size_t c = 0; c < 10; ++c) scores.at(i, c) = static_cast<float>(c);
    // two classes above the label
    scores.at(i, y) = 20.0f;
    scores.at(i, (y + 1) % 10) = 30.0f;
    scores.at(i, (y + 2) % 10) = 40.0f;
  }
  const auto r = probe::eval_multiclass(scores, labels, 5);
  EXPECT_EQ(r.top1, 0.0);
  EXPECT_EQ(r.topk, 100.0);
  EXPECT_EQ(probe::eval_multiclass(scores, labels, 2).topk, 0.0);
}

TEST(Multiclass, TiesRankLowerIndexFirst) {
  const TensorF scores({2, 3}, 1.0f);
  const std::vector<int> labels = {0, 1};
  EXPECT_EQ(probe::eval_multiclass(scores, labels, 1).top1, 50.0);
}

TEST(Multiclass, UniformRandomScoresGiveChance) {
  const std::size_t n = 10000;
  for (std::size_t c : {2u, 8u, 10u}) {
    Rng rng(8 + c);
    const TensorF scores = random_tensor<float>({n, c}, rng, 0, 1);
    std::vector<int> labels(n);
    for (auto& y : labels) y = static_cast<int>(rng.index(c));
    const double p = 1.0 / static_cast<double>(c);
    const double sigma = 100.0 * std::sqrt(p * (1 - p) / static_cast<double>(n));
    EXPECT_NEAR(probe::eval_multiclass(scores, labels, 1).top1, 100.0 * p, 4.0 * sigma) << c;
  }
}

TEST(Multiclass, RejectsBadLabels) {
  const TensorF scores({2, 3});
  const std::vector<int> bad = {0, 3};
  EXPECT_THROW(probe::eval_multiclass(scores, bad), DataError);
  const std::vector<int> short_labels = {0};
  EXPECT_THROW(probe::eval_multiclass(scores, short_labels), ConfigError);
}

// ---- multitarget metrics ----

TEST(Multitarget, ExactPredictions) {
  const TensorF p({2, 3}, {0.9f, 0.1f, 0.8f, 0.2f, 0.7f, 0.3f});
  const std::vector<std::vector<int>> labels = {{0, 2}, {1}};
  for (auto mode : {AverageMode::kPerClass, AverageMode::kPerSample}) {
    const auto r = probe::eval_multitarget(p, labels, 0.5, mode);
    EXPECT_EQ(r.multi_target, 100.0);
    EXPECT_EQ(r.average, 100.0);
  }
}

TEST(Multitarget, FourOfFiveClassesRight) {
  const TensorF p({1, 5}, {0.9f, 0.9f, 0.1f, 0.1f, 0.9f});
  const std::vector<std::vector<int>> labels = {{0, 1, 4, 2}};
  const auto r = probe::eval_multitarget(p, labels);
  EXPECT_EQ(r.multi_target, 0.0);
  EXPECT_NEAR(r.average, 80.0, 1e-12);
}

TEST(Multitarget, HandComputedFixture) {
  // per sample: predicted {0,2} vs {0,2}; {0,1,2} vs {1}; {2} vs {1}; {1} vs {1}
  const TensorF p({4, 3}, {0.9f, 0.2f, 0.7f, 0.6f, 0.6f, 0.6f, 0.1f, 0.4f, 0.5f, 0.3f, 0.8f, 0.2f});
  const std::vector<std::vector<int>> labels = {{0, 2}, {1}, {1}, {1}};
  const auto r = probe::eval_multitarget(p, labels, 0.5, AverageMode::kPerClass);
  EXPECT_DOUBLE_EQ(r.multi_target, 50.0);
  ASSERT_EQ(r.per_class.size(), 3u);
  EXPECT_DOUBLE_EQ(r.per_class[0], 75.0);
  EXPECT_DOUBLE_EQ(r.per_class[1], 75.0);
  EXPECT_DOUBLE_EQ(r.per_class[2], 50.0);
  EXPECT_NEAR(r.average, 200.0 / 3.0, 1e-12);
  // Jaccard per sample: 1, 1/3, 0, 1
  EXPECT_NEAR(probe::eval_multitarget(p, labels, 0.5, AverageMode::kPerSample).average, 100.0 * 7.0 / 12.0, 1e-12);
}

// ---- training ----

// Four Gaussian blobs in 6 dimensions.
void blobs(std::size_t n, Rng& rng, TensorF& x, std::vector<std::vector<int>>& y) {
  x = TensorF({n, 6});
  y.clear();
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 4);
    for (std::size_t j = 0; j < 6; ++j) x.at(i, j) = static_cast<float>(rng.normal() * 0.3 + (j == static_cast<std::size_t>(c) ? 2.0 : 0.0) + 10.0);
    y.push_back({c});
  }
}

TEST(ProbeTraining, SeparatesBlobs) {
  Rng rng(20);
  TensorF xtr, xte;
  std::vector<std::vector<int>> ytr, yte;
  blobs(200, rng, xtr, ytr);
  blobs(100, rng, xte, yte);
  probe::ProbeConfig cfg;
  cfg.epochs = 30;
  std::size_t epochs_seen = 0;
  const auto p = probe::train_probe(xtr, ytr, 4, Task::kMulticlass, cfg, [&](std::size_t, double) { ++epochs_seen; });
  EXPECT_EQ(epochs_seen, 30u);
  std::vector<int> labels;
  for (const auto& s : yte) labels.push_back(s[0]);
  EXPECT_GT(probe::eval_multiclass(p, xte, labels, 1).top1, 95.0);
  EXPECT_EQ(p.in_dim(), 6u);
  EXPECT_EQ(p.num_classes(), 4u);
}

TEST(ProbeTraining, MultitargetLearnsIndependentClasses) {
  Rng rng(21);
  const std::size_t n = 300;
  TensorF x({n, 3});
  std::vector<std::vector<int>> y(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      const bool on = rng.bernoulli(0.5);
      x.at(i, j) = static_cast<float>((on ? 1.0 : -1.0) + 0.2 * rng.normal());
      if (on) y[i].push_back(static_cast<int>(j));
    }
  probe::ProbeConfig cfg;
  cfg.epochs = 40;
  const auto p = probe::train_probe(x, y, 3, Task::kMultitarget, cfg);
  const auto r = probe::eval_multitarget(p, x, y);
  EXPECT_GT(r.multi_target, 95.0);
}

TEST(ProbeTraining, SeededAndValidated) {
  Rng rng(22);
  TensorF x;
  std::vector<std::vector<int>> y;
  blobs(40, rng, x, y);
  probe::ProbeConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 4;
  const auto a = probe::train_probe(x, y, 4, Task::kMulticlass, cfg);
  const auto b = probe::train_probe(x, y, 4, Task::kMulticlass, cfg);
  EXPECT_EQ(a.w1, b.w1);
  EXPECT_EQ(a.logits(x), b.logits(x));
  y[0] = {0, 1};
  EXPECT_THROW(probe::train_probe(x, y, 4, Task::kMulticlass, cfg), DataError);
  y[0] = {7};
  EXPECT_THROW(probe::train_probe(x, y, 4, Task::kMulticlass, cfg), DataError);
}

TEST(ProbeTraining, StandardisationUsesTrainStatistics) {
  Rng rng(23);
  TensorF x;
  std::vector<std::vector<int>> y;
  blobs(80, rng, x, y);
  probe::ProbeConfig cfg;
  cfg.epochs = 1;
  const auto p = probe::train_probe(x, y, 4, Task::kMulticlass, cfg);
  const TensorF z = p.normalize(x);
  for (std::size_t j = 0; j < 6; ++j) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < 80; ++i) m += z.at(i, j);
    m /= 80;
    for (std::size_t i = 0; i < 80; ++i) v += (z.at(i, j) - m) * (z.at(i, j) - m);
    EXPECT_NEAR(m, 0.0, 1e-4);
    EXPECT_NEAR(v / 80, 1.0, 1e-3);
  }
}

// ---- summaries and perturbation ----

TEST(Summary, MeanAndSampleStd) {
  const std::vector<double> v = {1.0, 2.0, 6.0};
  const auto s = probe::summarize(v);
  EXPECT_DOUBLE_EQ(s.mean, 3.0);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(7.0));
  EXPECT_EQ(s.n, 3u);
  const std::vector<double> one = {4.0};
  EXPECT_EQ(probe::summarize(one).std, 0.0);
}

TEST(Perturbation, SettingsAndSharedImages) {
  const auto all = probe::all_perturbations();
  EXPECT_EQ(all.size(), 25u);
  Rng rng(24);
  const std::vector<TensorF> imgs = {random_tensor<float>({3, 16, 16}, rng, 0, 1),
                                     random_tensor<float>({3, 16, 16}, rng, 0, 1)};
  const seq::PerturbSpec spec{seq::PerturbKind::kGaussianNoise, 3};
  const auto a = probe::perturbed_images(imgs, spec, 1), b = probe::perturbed_images(imgs, spec, 1);
  EXPECT_EQ(a[0], b[0]);
  EXPECT_EQ(a[1], b[1]);
  EXPECT_NE(a[0], imgs[0]);
  EXPECT_NE(probe::perturbed_images(imgs, {seq::PerturbKind::kGaussianNoise, 4}, 1)[0], a[0]);
}

TEST(Perturbation, TableStartsWithCleanAndDoesNotRetrain) {
  const auto p = tiny_pathway("plain", ops::Operator::kIdentity, 25);
  Rng rng(26);
  const std::vector<TensorF> imgs = {random_tensor<float>({3, 32, 32}, rng, 0, 1),
                                     random_tensor<float>({3, 32, 32}, rng, 0, 1)};
  const std::vector<int> labels = {0, 1};
  Rng prng(27);
  const probe::LinearProbe pr(6, 8, 2, Task::kMulticlass, 0.5, prng);
  const clapp::ImagePathway* ps[] = {&p};
  const std::vector<seq::PerturbSpec> specs = {{seq::PerturbKind::kBrightness, 1}, {seq::PerturbKind::kShadow, 5}};
  const auto before = pr.w1;
  const auto rows = probe::eval_under_perturbation(pr, ps, imgs, labels, specs, {}, 0);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].kind, "clean");
  EXPECT_EQ(rows[1].kind, "brightness");
  EXPECT_EQ(rows[2].severity, 5);
  for (const auto& r : rows) {
    EXPECT_GE(r.accuracy, 0.0);
    EXPECT_LE(r.accuracy, 100.0);
  }
  EXPECT_EQ(pr.w1, before);
}

}  // namespace
}  // namespace iclp
