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


// Acceptance run: one pass/fail line per criterion, exit status 1 if any
// criterion fails. `--only 1,3` runs a subset.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "iclp/autograd.hpp"
#include "iclp/clapp.hpp"
#include "iclp/config.hpp"
#include "iclp/data_io.hpp"
#include "iclp/error.hpp"
#include "iclp/image.hpp"
#include "iclp/movnet.hpp"
#include "iclp/ops.hpp"
#include "iclp/pipeline.hpp"
#include "iclp/probe.hpp"
#include "iclp/sequencer.hpp"
#include "../test_util.hpp"

namespace iclp {
namespace {

namespace fs = std::filesystem;
using VarD = nn::Var<double>;
using Build = std::function<VarD(nn::Tape<double>&, std::vector<VarD>&)>;

// Collects sub-check results of one criterion.
class Verdict {
 public:
  void check(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  void note(const std::string& s) { notes_.push_back(s); }
  bool pass() const { return failures_.empty(); }
  std::string detail() const {
    std::string out;
    for (const auto& n : notes_) out += (out.empty() ? "" : "; ") + n;
    for (const auto& f : failures_) out += (out.empty() ? "FAILED " : "; FAILED ") + f;
    return out;
  }

 private:
  std::vector<std::string> notes_, failures_;
};

std::string num(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

void log_line(const std::string& s) { std::fprintf(stderr, "  %s\n", s.c_str()); }

// ---- 1: operator invariances ----

void operators(Verdict& v) {
  Rng rng(101);
  {
    TensorF rgb({3, 1, 10000});
    for (auto& x : rgb) x = static_cast<float>(rng.uniform(0.01, 1.0));
    const TensorF base = ops::rg_normalize(rgb);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const double s = std::exp(rng.uniform(std::log(0.1), std::log(10.0)));
      TensorF scaled = rgb;
      for (auto& x : scaled) x = static_cast<float>(x * s);
      const TensorF out = ops::rg_normalize(scaled);
      for (std::size_t i = 0; i < out.size(); ++i) worst = std::max(worst, std::abs(double(out[i]) - base[i]));
    }
    v.check(worst <= 1e-6, "rg scale invariance max diff " + num(worst));
    v.note("rg scale max diff " + num(worst));
  }
  {
    std::size_t bad = 0;
    for (int it = 0; it < 10000; ++it) {
      std::vector<double> ring(8);
      for (auto& x : ring) x = std::floor(rng.uniform(0, 4));
      const double centre = std::floor(rng.uniform(0, 4));
      const auto ref = ops::lbp_min_rotation(ops::lbp_ring_code(ring, centre), 8);
      std::rotate(ring.begin(), ring.begin() + static_cast<long>(rng.index(8)), ring.end());
      bad += ops::lbp_min_rotation(ops::lbp_ring_code(ring, centre), 8) != ref;
    }
    v.check(bad == 0, "LBP ring rotation: " + std::to_string(bad) + " of 10000 rings differ");
  }
  {
    std::size_t bad = 0;
    for (int it = 0; it < 20; ++it) {
      TensorF img({1, 24 + rng.index(9), 24 + rng.index(9)});
      for (auto& x : img) x = static_cast<float>(std::floor(rng.uniform(0, 6)));
      auto sorted = [](std::vector<std::uint32_t> c) {
        std::sort(c.begin(), c.end());
        return c;
      };
      const auto ref = sorted(ops::lbp_interior_codes(img));
      for (int k = 1; k < 4; ++k) bad += sorted(ops::lbp_interior_codes(image::rotate90(img, k))) != ref;
    }
    v.check(bad == 0, "LBP 90-degree multiset: " + std::to_string(bad) + " rotations differ");
  }
  {
    double worst = 0.0;
    for (double c : {0.0, 0.25, 0.7, 1.0}) {
      for (std::size_t n : {16u, 32u, 64u}) {
        const auto pyr = ops::dtcwt_forward(TensorD({3, n, n}, c), 2);
        for (const auto& level : pyr.highpass)
          for (const auto& band : level) {
            for (double x : band.re) worst = std::max(worst, std::abs(x));
            for (double x : band.im) worst = std::max(worst, std::abs(x));
          }
      }
    }
    v.check(worst <= 1e-6, "DTCWT constant-image highpass " + num(worst));
    v.note("constant highpass max " + num(worst));
  }
  {
    std::vector<double> dt, dw;
    for (int i = 0; i < 20; ++i) {
      const BlobImage img(rng);
      const TensorD a = img.render(64), b = img.render(64, 1.0);
      dt.push_back(dtcwt_energy_change(a, b));
      dw.push_back(dwt_energy_change(a, b));
    }
    const double dt_worst = *std::max_element(dt.begin(), dt.end());
    std::sort(dw.begin(), dw.end());
    const double dw_median = 0.5 * (dw[9] + dw[10]);
    v.check(dt_worst < 0.05, "DTCWT 1-px shift energy change " + num(dt_worst));
    v.check(dw_median >= 0.20, "real DWT 1-px shift energy change " + num(dw_median));
    v.note("1-px shift: DTCWT worst " + num(100 * dt_worst) + "%, real DWT median " + num(100 * dw_median) + "%");
  }
}

// ---- 2: gradients ----

VarD project(VarD y, std::uint64_t seed) {
  Rng r(seed);
  return nn::sum(nn::mul(y, y.tape->constant(random_tensor<double>(y.shape(), r))));
}

double grad_error(const std::vector<TensorD>& inputs, const Build& build) {
  nn::Tape<double> tape;
  std::vector<VarD> vars;
  for (const auto& t : inputs) vars.push_back(tape.leaf(t));
  tape.backward(build(tape, vars));
  const auto fd = finite_differences(inputs, [&](const std::vector<TensorD>& xs) {
    nn::Tape<double> t;
    std::vector<VarD> vs;
    for (const auto& x : xs) vs.push_back(t.leaf(x));
    return build(t, vs).value()[0];
  });
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) worst = std::max(worst, normwise_rel_err(tape.grad_or_zero(vars[k]), fd[k]));
  return worst;
}

EncoderPlan tiny_plan() {
  EncoderPlan p;
  p.channels = {3, 3, 4, 4, 5, 5};
  return p;
}

struct Batch {
  TensorD patches;
  std::vector<clapp::ContrastSample> samples;
};

Batch random_batch(Rng& rng, std::size_t max_offset = 2) {
  Batch b;
  std::vector<TensorD> rows;
  std::vector<clapp::SequenceRef> refs;
  for (std::size_t s = 0; s < 2; ++s) {
    const TensorF img = random_tensor<float>({3, 32, 32}, rng, 0, 1);
    const auto seq = seq::extract_patches(img, {}, s);
    refs.push_back({s, s * seq.length(), seq.length()});
    for (std::size_t t = 0; t < seq.length(); ++t) rows.push_back(unstack_at(seq.patches, t).cast<double>());
  }
  b.patches = stack<double>(rows);
  b.samples = clapp::build_contrast_batch(refs, max_offset, 1, rng);
  return b;
}

void gradients(Verdict& v) {
  Rng rng(202);
  std::map<std::string, double> errs;
  const TensorD a = random_tensor<double>({3, 4}, rng), b = random_tensor<double>({3, 4}, rng);
  errs["conv2d"] = grad_error({random_tensor<double>({2, 2, 6, 6}, rng), random_tensor<double>({3, 2, 3, 3}, rng),
                               random_tensor<double>({3}, rng)},
                              [](auto&, auto& x) { return project(nn::conv2d(x[0], x[1], x[2], 1, 1), 1); });
  errs["conv2d_strided"] = grad_error(
      {random_tensor<double>({2, 6, 6}, rng), random_tensor<double>({2, 2, 3, 3}, rng), random_tensor<double>({2}, rng)},
      [](auto&, auto& x) { return project(nn::conv2d(x[0], x[1], x[2], 2, 0), 2); });
  errs["relu"] = grad_error({a}, [](auto&, auto& x) { return project(nn::relu(x[0]), 3); });
  errs["add"] = grad_error({a, b}, [](auto&, auto& x) { return project(nn::add(x[0], x[1]), 4); });
  errs["mul"] = grad_error({a, b}, [](auto&, auto& x) { return project(nn::mul(x[0], x[1]), 5); });
  errs["scale"] = grad_error({a}, [](auto&, auto& x) { return project(nn::scale(x[0], -1.7), 6); });
  errs["sum"] = grad_error({a}, [](auto&, auto& x) { return nn::scale(nn::sum(x[0]), 0.3); });
  errs["mean"] = grad_error({a}, [](auto&, auto& x) { return nn::mean(nn::mul(x[0], x[0])); });
  errs["reshape"] = grad_error({a}, [](auto&, auto& x) { return project(nn::reshape(x[0], {2, 6}), 7); });
  errs["group_mean"] =
      grad_error({random_tensor<double>({6, 3}, rng)}, [](auto&, auto& x) { return project(nn::group_mean(x[0], 3), 8); });
  const TensorD img = random_tensor<double>({2, 3, 6, 6}, rng);
  errs["max_pool2d"] = grad_error({img}, [](auto&, auto& x) { return project(nn::max_pool2d(x[0], 2, 2), 9); });
  errs["spatial_mean"] = grad_error({img}, [](auto&, auto& x) { return project(nn::spatial_mean(x[0]), 10); });
  const TensorD x = random_tensor<double>({4, 3}, rng), w = random_tensor<double>({5, 3}, rng),
                bias = random_tensor<double>({5}, rng);
  errs["linear"] = grad_error({x, w, bias}, [](auto&, auto& t) { return project(nn::linear<double>(t[0], t[1], t[2]), 11); });
  const std::vector<std::size_t> idx = {3, 0, 3, 1};
  errs["gather_rows"] = grad_error({x}, [&](auto&, auto& t) { return project(nn::gather_rows(t[0], idx), 12); });
  errs["rowwise_dot"] = grad_error({x, random_tensor<double>({4, 3}, rng)},
                                   [](auto&, auto& t) { return project(nn::rowwise_dot(t[0], t[1]), 13); });
  const std::vector<double> ys = {1, -1, 1, -1, 1};
  errs["hinge"] = grad_error({random_tensor<double>({5}, rng, -3, 3)},
                             [&](auto&, auto& t) { return nn::sum(nn::hinge<double>(t[0], ys)); });
  const std::vector<int> labels = {2, 0, 1};
  errs["softmax_ce"] = grad_error({random_tensor<double>({3, 4}, rng, -2, 2)},
                                  [&](auto&, auto& t) { return nn::softmax_cross_entropy<double>(t[0], labels); });
  const TensorD targets = random_tensor<double>({3, 2}, rng, 0, 1);
  errs["sigmoid_bce"] = grad_error({random_tensor<double>({3, 2}, rng, -3, 3)},
                                   [&](auto&, auto& t) { return nn::sigmoid_bce(t[0], targets); });
  errs["mse"] = grad_error({random_tensor<double>({3, 2}, rng)}, [&](auto&, auto& t) { return nn::mse(t[0], targets); });
  errs["dropout"] = grad_error({random_tensor<double>({4, 6}, rng)}, [](auto&, auto& t) {
    Rng mask(99);
    return project(nn::dropout(t[0], 0.5, mask, true), 14);
  });
  double prim = 0.0;
  std::string worst_op;
  for (const auto& [op, e] : errs) {
    v.check(e < 1e-6, op + " rel err " + num(e));
    if (e >= prim) prim = e, worst_op = op;
  }
  v.note(std::to_string(errs.size()) + " primitives, worst " + worst_op + " " + num(prim));

  // tiny HingeCPC step: full gradient through all six layers and the head
  {
    const EncoderPlan plan = tiny_plan();
    Encoder<double> enc(plan, rng);
    // zero biases leave tied zeros in the max pools, a kink for finite differences
    for (std::size_t l = 0; l < 6; ++l) enc.bias(l) = random_tensor<double>(enc.bias(l).shape(), rng, 0.05, 0.2);
    const clapp::PredictionHeads<double> heads(plan.channels, 2, rng);
    const Batch batch = random_batch(rng);
    std::vector<TensorD> params;
    for (std::size_t l = 0; l < 6; ++l) params.push_back(enc.weight(l));
    for (std::size_t l = 0; l < 6; ++l) params.push_back(enc.bias(l));
    for (std::size_t d = 1; d <= 2; ++d) params.push_back(heads.weight(5, d));
    clapp::LossSpec spec = clapp::LossSpec::hingecpc();
    spec.detach_targets = false;
    const auto g = clapp::contrastive_gradients(enc, heads, batch.patches, batch.samples, spec);
    const auto fd = finite_differences(params, [&](const std::vector<TensorD>& p) {
      std::vector<TensorD> ws(p.begin(), p.begin() + 6), bs(p.begin() + 6, p.begin() + 12);
      std::vector<std::vector<TensorD>> hw;
      for (std::size_t l = 0; l < 6; ++l) hw.push_back({heads.weight(l, 1), heads.weight(l, 2)});
      hw[5] = {p[12], p[13]};
      return clapp::contrastive_losses(Encoder<double>(plan, ws, bs), clapp::PredictionHeads<double>(2, hw),
                                       batch.patches, batch.samples, spec)[0];
    });
    double worst = 0.0;
    for (std::size_t l = 0; l < 6; ++l) {
      worst = std::max(worst, normwise_rel_err(g.weight[l], fd[l]));
      worst = std::max(worst, normwise_rel_err(g.bias[l], fd[6 + l]));
    }
    for (std::size_t d = 0; d < 2; ++d) worst = std::max(worst, normwise_rel_err(g.heads[5][d], fd[12 + d]));
    v.check(worst < 1e-6, "HingeCPC step rel err " + num(worst));
    v.note("HingeCPC step " + num(worst));
  }

  // MovNet composite loss
  {
    movnet::MotionConfig cfg;
    cfg.frames = 4;
    cfg.crop = 16;
    cfg.working_size = 16;
    cfg.v_max = 2.0;
    cfg.sprite_radius = 3.0;
    EncoderPlan plan;
    plan.channels = {2, 2, 3, 3, 4, 4};
    movnet::MovNet<double> m(plan, rng);
    for (std::size_t l = 0; l < 6; ++l) m.encoder.bias(l) = random_tensor<double>(m.encoder.bias(l).shape(), rng, 0.05, 0.2);
    const auto ds = movnet::gen_motion_dataset(1, 1, cfg, 5);
    const std::span batch(ds.train);
    const auto g = movnet::movnet_gradients(m, batch);
    std::vector<TensorD> params;
    for (std::size_t l = 0; l < 6; ++l) params.push_back(m.encoder.weight(l));
    for (std::size_t l = 0; l < 6; ++l) params.push_back(m.encoder.bias(l));
    params.insert(params.end(), {m.w_disc, m.b_disc, m.w_speed, m.b_speed});
    const auto fd = finite_differences(params, [&](const std::vector<TensorD>& p) {
      movnet::MovNet<double> c = m;
      for (std::size_t l = 0; l < 6; ++l) {
        c.encoder.weight(l) = p[l];
        c.encoder.bias(l) = p[6 + l];
      }
      c.w_disc = p[12];
      c.b_disc = p[13];
      c.w_speed = p[14];
      c.b_speed = p[15];
      return movnet::movnet_loss(c, batch);
    });
    double worst = 0.0;
    for (std::size_t l = 0; l < 6; ++l) {
      worst = std::max(worst, normwise_rel_err(g.weight[l], fd[l]));
      worst = std::max(worst, normwise_rel_err(g.bias[l], fd[6 + l]));
    }
    worst = std::max({worst, normwise_rel_err(g.w_disc, fd[12]), normwise_rel_err(g.b_disc, fd[13]),
                      normwise_rel_err(g.w_speed, fd[14]), normwise_rel_err(g.b_speed, fd[15])});
    v.check(worst < 1e-6, "MovNet loss rel err " + num(worst));
    v.note("MovNet loss " + num(worst));
  }
}

// ---- 3: locality ----

bool same_bits(const TensorD& a, const TensorD& b) { return a.shape() == b.shape() && a.vec() == b.vec(); }

void locality(Verdict& v) {
  Rng rng(303);
  std::size_t violations = 0, trials = 0;
  for (std::size_t l = 0; l < kEncoderLayers; ++l) {
    for (int trial = 0; trial < 20; ++trial) {
      Encoder<double> enc(tiny_plan(), rng);
      clapp::PredictionHeads<double> heads(tiny_plan().channels, 2, rng);
      const Batch b = random_batch(rng);
      const auto g1 = clapp::contrastive_gradients(enc, heads, b.patches, b.samples, clapp::LossSpec::clapp());
      for (std::size_t k = l + 1; k < kEncoderLayers; ++k) {
        for (auto& x : enc.weight(k)) x += rng.uniform(-0.5, 0.5);
        for (auto& x : enc.bias(k)) x += rng.uniform(-0.5, 0.5);
        for (std::size_t d = 1; d <= 2; ++d)
          for (auto& x : heads.weight(k, d)) x += rng.uniform(-0.5, 0.5);
      }
      const auto g2 = clapp::contrastive_gradients(enc, heads, b.patches, b.samples, clapp::LossSpec::clapp());
      bool same = same_bits(g1.weight[l], g2.weight[l]) && same_bits(g1.bias[l], g2.bias[l]);
      for (std::size_t d = 0; d < 2; ++d) same = same && same_bits(g1.heads[l][d], g2.heads[l][d]);
      violations += !same;
      ++trials;
    }
  }
  v.check(violations == 0, std::to_string(violations) + " of " + std::to_string(trials) + " layer updates changed");
  v.note(std::to_string(trials) + " layer/batch pairs bit-identical");

  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Encoder<double> enc(tiny_plan(), rng);
    const clapp::PredictionHeads<double> heads(tiny_plan().channels, 2, rng);
    const Batch b = random_batch(rng);
    clapp::LossSpec open = clapp::LossSpec::clapp();
    open.layers = {5};
    open.layer_boundaries = false;
    const auto local = clapp::contrastive_gradients(enc, heads, b.patches, b.samples, open);
    const auto e2e = clapp::contrastive_gradients(enc, heads, b.patches, b.samples, clapp::LossSpec::hingecpc());
    worst = std::max({worst, normwise_rel_err(local.weight[5], e2e.weight[5]), normwise_rel_err(local.bias[5], e2e.bias[5])});
    for (std::size_t d = 0; d < 2; ++d) worst = std::max(worst, normwise_rel_err(local.heads[5][d], e2e.heads[5][d]));
  }
  v.check(worst < 1e-6, "boundaries off: layer-6 vs HingeCPC rel err " + num(worst));
  v.note("layer-6 vs HingeCPC " + num(worst));
}

// ---- 4: fixtures ----

void fixtures(Verdict& v) {
  Rng rng(404);
  {
    clapp::PredictionHeads<double> heads({4}, 1, rng);
    const TensorD c = random_tensor<double>({4}, rng);
    heads.weight(0, 1).fill(0.0);
    for (std::size_t i = 0; i < 4; ++i) heads.weight(0, 1).at(i, i) = 1.0;
    v.check(clapp::predict_future(c, heads, 0, 1) == c, "W = I gives c");
    heads.weight(0, 1).fill(0.0);
    v.check(clapp::predict_future(c, heads, 0, 1) == TensorD({4}), "W = 0 gives 0");
  }
  const std::vector<double> unit = {1.0};
  v.check(clapp::hinge_loss(std::vector<double>{2.0}, unit, 1) == 0.0, "y=+1 score 2 gives 0");
  v.check(clapp::hinge_loss(std::vector<double>{0.5}, unit, -1) == 1.5, "y=-1 score 0.5 gives 1.5");
  v.check(clapp::hinge_loss(std::vector<double>{1.0}, unit, 1) == 0.0, "y=+1 score 1 gives 0");
  for (int y : {1, -1}) {
    nn::Tape<double> tape;
    const TensorD target = random_tensor<double>({1, 6}, rng, -0.2, 0.2);
    auto pred = tape.leaf(random_tensor<double>({1, 6}, rng, -0.2, 0.2));
    const std::vector<double> labels = {static_cast<double>(y)};
    tape.backward(nn::sum(nn::hinge<double>(nn::rowwise_dot(pred, tape.constant(target)), labels)));
    bool ok = true;
    for (std::size_t i = 0; i < 6; ++i) ok = ok && tape.grad_or_zero(pred)[i] == -y * target[i];
    v.check(ok, "active gradient is -y z_target (y=" + std::to_string(y) + ")");
  }
  {
    const std::vector<clapp::SequenceRef> refs = {{0, 0, 49}, {1, 49, 49}};
    Rng a(7), b(7);
    const auto s1 = clapp::build_contrast_batch(refs, 5, 1, a), s2 = clapp::build_contrast_batch(refs, 5, 1, b);
    std::size_t pos = 0, neg = 0, bad = 0;
    for (const auto& s : s1) {
      (s.label == 1 ? pos : neg)++;
      const bool same_src = s.context / 49 == s.target / 49;
      bad += s.label == 1 ? !(same_src && s.target == s.context + s.offset) : same_src;
    }
    v.check(pos == 460 && neg == 460, "counts " + std::to_string(pos) + "/" + std::to_string(neg));
    v.check(bad == 0, "label invariant");
    bool seeded = s1.size() == s2.size();
    for (std::size_t i = 0; seeded && i < s1.size(); ++i) seeded = s1[i].target == s2[i].target;
    v.check(seeded, "seeded negatives");
    v.note("contrast batch " + std::to_string(pos) + " positives, " + std::to_string(neg) + " negatives");
  }
  {
    // layer 5's parameters perturbed, layer 3's update unchanged
    Encoder<double> enc(tiny_plan(), rng);
    clapp::PredictionHeads<double> heads(tiny_plan().channels, 2, rng);
    const Batch b = random_batch(rng);
    const auto g1 = clapp::contrastive_gradients(enc, heads, b.patches, b.samples, clapp::LossSpec::clapp());
    for (auto& x : enc.weight(4)) x *= 1.7;
    const auto g2 = clapp::contrastive_gradients(enc, heads, b.patches, b.samples, clapp::LossSpec::clapp());
    v.check(same_bits(g1.weight[2], g2.weight[2]) && same_bits(g1.bias[2], g2.bias[2]), "layer 3 update under layer 5 change");
  }
  {
    // margin-inactive batch: pure weight-decay steps
    const EncoderPlan plan = tiny_plan();
    std::vector<TensorD> w, bias;
    std::size_t in = 3;
    for (std::size_t c : plan.channels) {
      w.push_back(random_tensor<double>({c, in, 3, 3}, rng, 0.0, 0.1));
      bias.push_back(TensorD({c}, 0.5));
      in = c;
    }
    Encoder<double> enc(plan, w, bias);
    const Batch batch = random_batch(rng);
    std::vector<clapp::ContrastSample> positives;
    for (const auto& s : batch.samples)
      if (s.label == 1) positives.push_back(s);
    const auto acts = enc.forward(batch.patches);
    std::vector<std::vector<TensorD>> hw;
    for (std::size_t l = 0; l < 6; ++l) {
      const TensorD& z = acts.pooled[l];
      double min_dot = INFINITY;
      for (const auto& s : positives) {
        double dot = 0.0;
        for (std::size_t i = 0; i < z.dim(1); ++i) dot += z.at(s.context, i) * z.at(s.target, i);
        min_dot = std::min(min_dot, dot);
      }
      hw.emplace_back();
      for (std::size_t d = 0; d < 2; ++d) {
        TensorD m({z.dim(1), z.dim(1)});
        for (std::size_t i = 0; i < z.dim(1); ++i) m.at(i, i) = 2.0 / min_dot;
        hw.back().push_back(m);
      }
    }
    clapp::PredictionHeads<double> heads(2, hw);
    const Encoder<double> before = enc;
    const double lr = 1e-3, wd = 0.01;
    clapp::Optimizer<double> opt(clapp::TrainMode::kClappLocal, {lr, wd}, enc, heads);
    const auto losses = clapp::clapp_update(enc, heads, opt, batch.patches, positives);
    bool ok = std::all_of(losses.begin(), losses.end(), [](double L) { return L == 0.0; });
    for (std::size_t l = 0; l < 6; ++l)
      for (std::size_t i = 0; i < enc.weight(l).size(); ++i) {
        const double p = before.weight(l)[i];
        ok = ok && enc.weight(l)[i] == p - lr * (0.0 + wd * p);
      }
    v.check(ok, "margin-inactive batch gives pure decay");
  }
}

// ---- 5 and 6: desk-scale ablation ----

double mean_of(const std::vector<double>& v) { return probe::summarize(v).mean; }

config::RunConfig desk_config(const fs::path& out) {
  return config::from_text("[run]\nid = desk\nseeds = 0,1,2\nout_dir = " + out.string() +
                           "\n[data]\nnum_classes = 8\ntrain_per_class = 200\ntest_per_class = 50\n"
                           "[encoder]\nchannels = 8,8,16,16,32,32\n"
                           "[train]\nepochs = 30\nstride = 12\n"
                           "[eval]\nperturbations = all\ncompare_hingecpc = true\n");
}

void desk_experiment(Verdict& v, const pipeline::AblationResult& r) {
  const double single = mean_of(r.top1.at(pipeline::kSinglePlain));
  const double three = mean_of(r.top1.at(pipeline::kThreePlain));
  const double dec = mean_of(r.top1.at(pipeline::kDecomposed));
  const double hinge = mean_of(r.top1.at(pipeline::kDecomposedHinge));
  v.note("top-1 single " + num(single, 4) + ", three-plain " + num(three, 4) + ", decomposed " + num(dec, 4) +
         ", decomposed HingeCPC " + num(hinge, 4));
  v.check(dec >= single + 5.0, "(a) decomposed - single = " + num(dec - single, 4) + " < 5");
  v.check(three - single > 0.0 && three - single < dec - single,
          "(b) three-plain gain " + num(three - single, 4) + " not in (0, " + num(dec - single, 4) + ")");
  v.check(std::abs(dec - hinge) <= 5.0, "(c) |decomposed - HingeCPC| = " + num(std::abs(dec - hinge), 4) + " > 5");
}

void perturbation(Verdict& v, const pipeline::AblationResult& r) {
  // mean over seeds per (model, kind, severity)
  std::map<std::string, std::map<std::pair<std::string, int>, std::vector<double>>> acc;
  for (const auto& e : r.degradation) acc[e.model][{e.row.kind, e.row.severity}].push_back(e.row.accuracy);
  for (const auto& [model, table] : acc) {
    std::vector<double> curve = {mean_of(table.at({"clean", 0}))};
    for (int s = 1; s <= 5; ++s) curve.push_back(mean_of(table.at({"gaussian_noise", s})));
    std::string shown;
    for (double c : curve) shown += (shown.empty() ? "" : ">") + num(c, 3);
    for (std::size_t s = 1; s < curve.size(); ++s) {
      v.check(curve[s] <= curve[s - 1] + 1.0, model + " noise accuracy rises at severity " + std::to_string(s) + " (" +
                                                  shown + ")");
    }
    v.note(model + " noise " + shown);
  }
  auto median = [&](const std::string& model) {
    std::vector<double> vals;
    for (const auto& [key, a] : acc.at(model))
      if (key.first != "clean") vals.push_back(mean_of(a));
    std::sort(vals.begin(), vals.end());
    const std::size_t n = vals.size();
    return n % 2 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
  };
  const double dec = median(pipeline::kDecomposed), single = median(pipeline::kSinglePlain);
  v.check(dec >= single, "decomposed median " + num(dec, 4) + " < single " + num(single, 4));
  v.note("median over 25 settings: decomposed " + num(dec, 4) + ", single " + num(single, 4));
}

// ---- 7: MovNet ----

void movnet_criterion(Verdict& v, const fs::path& out) {
  const auto cfg = config::from_text("[run]\nid = action\nseeds = 0,1,2\nout_dir = " + out.string() +
                                     "\npathways = lbp, rgnorm, dtcwt, movnet\n"
                                     "[data]\nsource = action\ntrain_per_class = 100\ntest_per_class = 50\n"
                                     "[encoder]\nchannels = 8,8,16,16,32,32\n"
                                     "[train]\nepochs = 10\nstride = 12\n"
                                     "[movnet]\nworking_size = 32\nepochs = 30\n");
  const auto trained = pipeline::train(cfg, log_line);
  double disc = NAN, mae = NAN;
  for (const auto& row : io::read_metrics(trained.metrics)) {
    if (row.metric == "disc_accuracy") disc = row.value;
    if (row.metric == "speed_mae") mae = row.value;
  }
  v.check(disc >= 90.0, "discrimination " + num(disc, 4) + "% < 90%");
  v.check(mae < 0.1, "speed MAE " + num(mae) + " >= 0.1");
  v.note("held-out discrimination " + num(disc, 4) + "%, speed MAE " + num(mae));

  auto top1 = [&](bool with_movnet, const std::string& sub) {
    auto c = cfg;
    c.out_dir = out / sub;
    std::vector<fs::path> ckpts;
    for (const auto& [name, path] : trained.checkpoints)
      if (with_movnet || name != "movnet") ckpts.push_back(path);
    for (const auto& row : pipeline::probe_checkpoints(c, ckpts, log_line).report)
      if (row.metric == "top1") return row.summary.mean;
    return std::nan("");
  };
  const double without = top1(false, "probe_images"), with = top1(true, "probe_with_movnet");
  v.check(with >= without + 3.0, "MovNet delta " + num(with - without, 4) + " < 3");
  v.note("action top-1 " + num(without, 4) + " -> " + num(with, 4) + " with MovNet");
}

// ---- 8: persistence and determinism ----

std::vector<char> bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void persistence(Verdict& v, const fs::path& out) {
  auto run_all = [&](const fs::path& dir) {
    const auto cfg = config::from_text("[run]\nid = det\nseeds = 0,1\nout_dir = " + dir.string() +
                                       "\npathways = plain, lbp, rgnorm, dtcwt, movnet\n"
                                       "[data]\nnum_classes = 3\ntrain_per_class = 4\ntest_per_class = 3\nsize = 40\n"
                                       "translation = 4\n"
                                       "[encoder]\nchannels = 4,4,4,4,4,4\n"
                                       "[train]\nepochs = 2\nbatch_size = 4\nstride = 12\ncheckpoint_every = 1\n"
                                       "[probe]\nepochs = 3\nhidden = 8\n"
                                       "[eval]\nperturbations = gaussian_noise:1-2,shadow:3\ncompare_hingecpc = true\n"
                                       "[movnet]\nframes = 4\ncrop = 16\nworking_size = 16\nv_max = 2\n"
                                       "sprite_radius = 3\ntrain_per_class = 2\ntest_per_class = 2\nepochs = 2\n");
    pipeline::gen_data(cfg, dir / "data");
    const auto tr = pipeline::train(cfg);
    std::vector<fs::path> images;
    for (const auto& [name, path] : tr.checkpoints)
      if (name != "movnet") images.push_back(path);
    auto probe_cfg = cfg;
    probe_cfg.out_dir = dir / "probe";
    pipeline::probe_checkpoints(probe_cfg, images);
    auto pert_cfg = cfg;
    pert_cfg.out_dir = dir / "perturb";
    pipeline::perturb(pert_cfg, {{"all", images}, {"plain", {tr.checkpoints.at("plain")}}});
    auto abl_cfg = cfg;
    abl_cfg.out_dir = dir / "ablate";
    pipeline::ablate(abl_cfg);
    pipeline::plot(tr.metrics, dir / "plots");
  };
  run_all(out / "a");
  run_all(out / "b");

  std::size_t ckpts = 0, csvs = 0, others = 0;
  for (const auto& e : fs::recursive_directory_iterator(out / "a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), out / "a");
    const auto a = bytes_of(e.path()), b = bytes_of(out / "b" / rel);
    v.check(a == b, rel.string() + " differs between runs");
    const std::string ext = e.path().extension().string();
    if (ext == ".ckpt") {
      ++ckpts;
      const auto ck = io::load_checkpoint(e.path());
      const auto again = ck.serialize();
      v.check(std::vector<char>(again.begin(), again.end()) == a, rel.string() + " not byte-identical after round trip");
    } else if (ext == ".csv") {
      ++csvs;
    } else {
      ++others;
    }
  }
  v.check(ckpts > 0 && csvs > 0, "no artifacts written");
  v.note(std::to_string(ckpts) + " checkpoints round-trip; " + std::to_string(csvs) + " CSV and " +
         std::to_string(others) + " other files identical across re-runs");
}

}  // namespace
}  // namespace iclp

int main(int argc, char** argv) {
  using namespace iclp;
  CLI::App app{"Acceptance run over the criterion set"};
  std::vector<int> only;
  std::string out = "acceptance_out";
  app.add_option("--only", only, "criteria to run (default all)")->delimiter(',')->check(CLI::Range(1, 8));
  app.add_option("--out", out, "scratch directory for artifacts");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected(only.begin(), only.end());
  auto wanted = [&](int k) { return selected.empty() || selected.count(k); };
  const fs::path root = fs::absolute(out);

  std::optional<pipeline::AblationResult> ablation;
  auto ablation_result = [&]() -> const pipeline::AblationResult& {
    if (!ablation) {
      const fs::path dir = root / "desk";
      fs::remove_all(dir);
      ablation = pipeline::ablate(desk_config(dir), log_line);
    }
    return *ablation;
  };

  struct Criterion {
    int id;
    const char* title;
    double budget_s;
    std::function<void(Verdict&)> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "operator invariances", 60, operators},
      {2, "gradient correctness", 120, gradients},
      {3, "CLAPP locality", 120, locality},
      {4, "hinge and contrast-batch fixtures", 0, fixtures},
      {5, "desk-scale directional experiment", 45 * 60, [&](Verdict& v) { desk_experiment(v, ablation_result()); }},
      {6, "perturbation harness", 10 * 60, [&](Verdict& v) { perturbation(v, ablation_result()); }},
      {7, "MovNet trainability", 20 * 60,
       [&](Verdict& v) {
         fs::remove_all(root / "movnet");
         movnet_criterion(v, root / "movnet");
       }},
      {8, "persistence and determinism", 0,
       [&](Verdict& v) {
         fs::remove_all(root / "determinism");
         persistence(v, root / "determinism");
       }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!wanted(c.id)) continue;
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(v);
    } catch (const std::exception& e) {
      v.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = num(secs, 3) + " s";
    if (c.budget_s > 0) timing += secs <= c.budget_s ? " within budget" : ", over the " + num(c.budget_s, 4) + " s budget";
    std::printf("criterion %d %s: %s | %s | %s\n", c.id, v.pass() ? "PASS" : "FAIL", c.title, v.detail().c_str(),
                timing.c_str());
    std::fflush(stdout);
    failed += !v.pass();
  }
  return failed ? 1 : 0;
}
