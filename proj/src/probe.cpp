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


#include "iclp/probe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "iclp/autograd.hpp"
#include "iclp/error.hpp"
#include "iclp/parallel.hpp"

namespace iclp::probe {

Task task_from_name(const std::string& name) {
  if (name == "multiclass") return Task::kMulticlass;
  if (name == "multitarget") return Task::kMultitarget;
  throw ConfigError("unknown probe task '" + name + "' (expected multiclass or multitarget)");
}

std::string task_name(Task task) { return task == Task::kMulticlass ? "multiclass" : "multitarget"; }

// ---- fusion ----

std::pair<std::size_t, std::size_t> fusion_rank(const std::string& name) {
  const auto hash = name.find('#');
  const std::string base = name.substr(0, hash);
  std::size_t replica = 1;
  if (hash != std::string::npos) {
    const std::string suffix = name.substr(hash + 1);
    if (suffix.empty() || !std::all_of(suffix.begin(), suffix.end(), ::isdigit) || std::stoul(suffix) < 1) {
      throw ConfigError("pathway '" + name + "': replica suffix must be a positive integer");
    }
    replica = std::stoul(suffix);
  }
  for (std::size_t i = 0; i < std::size(kPathwayOrder); ++i) {
    if (base == kPathwayOrder[i]) return {i, replica};
  }
  throw ConfigError("pathway '" + name + "' is not registered for fusion");
}

void check_fusion_order(std::span<const std::string> names) {
  for (std::size_t i = 1; i < names.size(); ++i) {
    if (!(fusion_rank(names[i - 1]) < fusion_rank(names[i]))) {
      throw ConfigError("pathways out of fusion order: '" + names[i - 1] + "' must come after '" + names[i] + "'");
    }
  }
  if (names.size() == 1) fusion_rank(names[0]);
}

std::vector<std::string> sorted_fusion_order(std::vector<std::string> names) {
  std::stable_sort(names.begin(), names.end(),
                   [](const std::string& a, const std::string& b) { return fusion_rank(a) < fusion_rank(b); });
  check_fusion_order(names);
  return names;
}

const FeatureSlice& FeatureSet::slice(const std::string& pathway) const {
  for (const auto& s : slices)
    if (s.pathway == pathway) return s;
  throw ConfigError("feature set has no pathway '" + pathway + "'");
}

TensorF pathway_features(const clapp::ImagePathway& pathway, const std::vector<TensorF>& images,
                         const seq::PatchGeometry& geom) {
  const std::size_t d = pathway.encoder.output_dim();
  TensorF out({images.size(), d});
  parallel_for(images.size(), [&](std::size_t i) {
    const auto patches = clapp::pathway_patches(pathway, images[i], geom, i);
    const TensorF emb = pathway.encoder.embed(patches.patches);  // [T, d]
    const std::size_t t = emb.dim(0);
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < t; ++r) acc += emb.at(r, j);
      out.at(i, j) = static_cast<float>(acc / static_cast<double>(t));
    }
  });
  return out;
}

FeatureSet fuse(std::span<const std::string> names, std::span<const TensorF> blocks) {
  if (names.empty() || names.size() != blocks.size()) throw ConfigError("fuse: need one block per pathway");
  check_fusion_order(names);
  const std::size_t n = blocks[0].dim(0);
  std::size_t total = 0;
  FeatureSet fs;
  for (std::size_t p = 0; p < names.size(); ++p) {
    if (blocks[p].rank() != 2 || blocks[p].dim(0) != n) {
      throw ConfigError("fuse: block '" + names[p] + "' has shape " + shape_str(blocks[p].shape()));
    }
    fs.slices.push_back({names[p], total, total + blocks[p].dim(1)});
    total += blocks[p].dim(1);
  }
  fs.values = TensorF({n, total});
  for (std::size_t p = 0; p < names.size(); ++p) {
    const std::size_t w = blocks[p].dim(1), off = fs.slices[p].begin;
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(blocks[p].data() + i * w, w, fs.values.data() + i * total + off);
  }
  return fs;
}

FeatureSet extract_features(std::span<const clapp::ImagePathway* const> pathways, const std::vector<TensorF>& images,
                            const seq::PatchGeometry& geom) {
  std::vector<std::string> names;
  for (const auto* p : pathways) names.push_back(p->name);
  check_fusion_order(names);
  std::vector<TensorF> blocks;
  for (const auto* p : pathways) blocks.push_back(pathway_features(*p, images, geom));
  return fuse(names, blocks);
}

FeatureSet zero_slice(const FeatureSet& fs, const std::string& pathway) {
  FeatureSet out = fs;
  const auto& s = fs.slice(pathway);
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = s.begin; j < s.end; ++j) out.values.at(i, j) = 0.0f;
  return out;
}

// ---- probe ----

LinearProbe::LinearProbe(std::size_t in_dim, std::size_t hidden, std::size_t classes, Task task_, double dropout_,
                         Rng& rng)
    : task(task_), dropout(dropout_) {
  if (in_dim == 0 || hidden == 0 || classes == 0) throw ConfigError("probe dimensions must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("probe dropout must be in [0, 1)");
  // U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases
  auto init = [&](Shape shape, std::size_t fan_in) {
    TensorF t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t) v = static_cast<float>(rng.uniform(-bound, bound));
    return t;
  };
  w1 = init({hidden, in_dim}, in_dim);
  b1 = init({hidden}, in_dim);
  w2 = init({classes, hidden}, hidden);
  b2 = init({classes}, hidden);
}

TensorF LinearProbe::normalize(const TensorF& features) const {
  if (features.rank() != 2 || features.dim(1) != in_dim()) {
    throw ConfigError("probe expects [N," + std::to_string(in_dim()) + "] features, got " +
                      shape_str(features.shape()));
  }
  if (mean.empty()) return features;
  TensorF out = features;
  const std::size_t d = in_dim();
  for (std::size_t i = 0; i < out.dim(0); ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = (out.at(i, j) - mean[j]) * inv_std[j];
  return out;
}

TensorF LinearProbe::logits(const TensorF& features) const {
  nn::Tape<float> tape;
  auto x = tape.constant(normalize(features));
  auto h = nn::relu(nn::linear<float>(x, tape.constant(w1), tape.constant(b1)));
  return nn::linear<float>(h, tape.constant(w2), tape.constant(b2)).value();
}

LinearProbe train_probe(const TensorF& features, const std::vector<std::vector<int>>& label_sets,
                        std::size_t num_classes, Task task, const ProbeConfig& config, const ProbeEpochFn& on_epoch) {
  if (features.rank() != 2 || features.dim(0) == 0) throw DataError("probe training needs [N,d] features, N > 0");
  const std::size_t n = features.dim(0), d = features.dim(1);
  if (label_sets.size() != n) throw DataError("probe: feature and label counts differ");
  for (std::size_t i = 0; i < n; ++i) {
    if (task == Task::kMulticlass && label_sets[i].size() != 1) {
      throw DataError("multiclass probe: item " + std::to_string(i) + " has " +
                      std::to_string(label_sets[i].size()) + " labels");
    }
    for (int l : label_sets[i])
      if (l < 0 || static_cast<std::size_t>(l) >= num_classes) {
        throw DataError("probe: label " + std::to_string(l) + " out of range for item " + std::to_string(i));
      }
  }
  if (config.batch_size == 0) throw ConfigError("probe batch size must be positive");
  require_finite(features, "probe features");

  const Rng root(config.seed);
  Rng init_rng = root.fork(0), order_rng = root.fork(1), drop_rng = root.fork(2);
  LinearProbe probe(d, config.hidden, num_classes, task, config.dropout, init_rng);
  if (config.standardize) {
    probe.mean = TensorF({d});
    probe.inv_std = TensorF({d});
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0, s2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += features.at(i, j);
      const double mu = s / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) s2 += (features.at(i, j) - mu) * (features.at(i, j) - mu);
      probe.mean[j] = static_cast<float>(mu);
      probe.inv_std[j] = static_cast<float>(1.0 / std::sqrt(s2 / static_cast<double>(n) + 1e-8));
    }
  }
  const TensorF x_all = probe.normalize(features);

  std::array<TensorF*, 4> params{&probe.w1, &probe.b1, &probe.w2, &probe.b2};
  nn::AdamState<float> adam(config.adam, params);
  std::vector<std::size_t> perm(n);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    order_rng.shuffle(perm.begin(), perm.end());
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b0 = 0; b0 < n; b0 += config.batch_size) {
      const std::size_t b1 = std::min(n, b0 + config.batch_size);
      const std::size_t m = b1 - b0;
      TensorF xb({m, d});
      std::vector<int> cls(m);
      TensorF targets({m, num_classes});
      for (std::size_t r = 0; r < m; ++r) {
        const std::size_t i = perm[b0 + r];
        std::copy_n(x_all.data() + i * d, d, xb.data() + r * d);
        if (task == Task::kMulticlass) cls[r] = label_sets[i][0];
        for (int l : label_sets[i]) targets.at(r, static_cast<std::size_t>(l)) = 1.0f;
      }
      nn::Tape<float> tape;
      auto w1 = tape.leaf(probe.w1), b1v = tape.leaf(probe.b1), w2 = tape.leaf(probe.w2), b2v = tape.leaf(probe.b2);
      auto h = nn::relu(nn::linear<float>(tape.constant(std::move(xb)), w1, b1v));
      h = nn::dropout(h, static_cast<float>(config.dropout), drop_rng, true);
      auto logits = nn::linear<float>(h, w2, b2v);
      auto loss = task == Task::kMulticlass ? nn::softmax_cross_entropy(logits, std::span<const int>(cls))
                                            : nn::sigmoid_bce(logits, targets);
      const double lv = loss.value()[0];
      if (!std::isfinite(lv)) throw NumericError("probe loss is not finite at epoch " + std::to_string(epoch));
      tape.backward(loss);
      std::array<TensorF, 4> grads{tape.grad_or_zero(w1), tape.grad_or_zero(b1v), tape.grad_or_zero(w2),
                                   tape.grad_or_zero(b2v)};
      adam.step(params, grads);
      loss_sum += lv;
      ++batches;
    }
    if (on_epoch) on_epoch(epoch, loss_sum / static_cast<double>(batches));
  }
  return probe;
}

// ---- metrics ----

MulticlassResult eval_multiclass(const TensorF& scores, std::span<const int> labels, std::size_t k) {
  if (scores.rank() != 2 || scores.dim(0) != labels.size() || labels.empty()) {
    throw ConfigError("eval_multiclass: scores " + shape_str(scores.shape()) + " vs " +
                      std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = scores.dim(0), c = scores.dim(1);
  MulticlassResult res;
  res.k = k;
  std::vector<std::size_t> hits(c, 0), count(c, 0);
  std::size_t top1 = 0, topk = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) throw DataError("eval_multiclass: label out of range");
    const float sy = scores.at(i, static_cast<std::size_t>(y));
    std::size_t rank = 0;
    for (std::size_t j = 0; j < c; ++j) {
      const float s = scores.at(i, j);
      if (s > sy || (s == sy && j < static_cast<std::size_t>(y))) ++rank;
    }
    ++count[static_cast<std::size_t>(y)];
    if (rank == 0) {
      ++top1;
      ++hits[static_cast<std::size_t>(y)];
    }
    if (rank < k) ++topk;
  }
  res.top1 = 100.0 * static_cast<double>(top1) / static_cast<double>(n);
  res.topk = 100.0 * static_cast<double>(topk) / static_cast<double>(n);
  for (std::size_t j = 0; j < c; ++j) {
    res.per_class.push_back(count[j] ? 100.0 * static_cast<double>(hits[j]) / static_cast<double>(count[j])
                                     : std::numeric_limits<double>::quiet_NaN());
  }
  return res;
}

MulticlassResult eval_multiclass(const LinearProbe& probe, const TensorF& features, std::span<const int> labels,
                                 std::size_t k) {
  return eval_multiclass(probe.logits(features), labels, k);
}

MultitargetResult eval_multitarget(const TensorF& probabilities, const std::vector<std::vector<int>>& label_sets,
                                   double threshold, AverageMode mode) {
  if (probabilities.rank() != 2 || probabilities.dim(0) != label_sets.size() || label_sets.empty()) {
    throw ConfigError("eval_multitarget: probabilities " + shape_str(probabilities.shape()) + " vs " +
                      std::to_string(label_sets.size()) + " label sets");
  }
  const std::size_t n = probabilities.dim(0), c = probabilities.dim(1);
  std::vector<std::size_t> class_right(c, 0);
  std::size_t all_right = 0;
  double jaccard = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<bool> truth(c, false);
    for (int l : label_sets[i]) {
      if (l < 0 || static_cast<std::size_t>(l) >= c) throw DataError("eval_multitarget: label out of range");
      truth[static_cast<std::size_t>(l)] = true;
    }
    std::size_t right = 0, inter = 0, uni = 0;
    for (std::size_t j = 0; j < c; ++j) {
      const bool pred = probabilities.at(i, j) >= threshold;
      if (pred == truth[j]) {
        ++right;
        ++class_right[j];
      }
      inter += pred && truth[j];
      uni += pred || truth[j];
    }
    if (right == c) ++all_right;
    jaccard += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  }
  MultitargetResult res;
  res.multi_target = 100.0 * static_cast<double>(all_right) / static_cast<double>(n);
  double class_mean = 0.0;
  for (std::size_t j = 0; j < c; ++j) {
    res.per_class.push_back(100.0 * static_cast<double>(class_right[j]) / static_cast<double>(n));
    class_mean += res.per_class.back();
  }
  res.average = mode == AverageMode::kPerClass ? class_mean / static_cast<double>(c)
                                               : 100.0 * jaccard / static_cast<double>(n);
  return res;
}

MultitargetResult eval_multitarget(const LinearProbe& probe, const TensorF& features,
                                   const std::vector<std::vector<int>>& label_sets, double threshold,
                                   AverageMode mode) {
  TensorF p = probe.logits(features);
  for (auto& v : p) v = 1.0f / (1.0f + std::exp(-v));
  return eval_multitarget(p, label_sets, threshold, mode);
}

Summary summarize(std::span<const double> values) {
  Summary s;
  s.n = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

// ---- perturbation ----

std::vector<TensorF> perturbed_images(const std::vector<TensorF>& images, const seq::PerturbSpec& spec,
                                      std::uint64_t seed) {
  const Rng base =
      Rng(seed).fork(0x70657274ULL + static_cast<std::uint64_t>(spec.kind) * 16 + static_cast<std::uint64_t>(spec.severity));
  std::vector<TensorF> out(images.size());
  parallel_for(images.size(), [&](std::size_t i) {
    Rng rng = base.fork(i);
    out[i] = seq::perturb(images[i], spec, rng);
  });
  return out;
}

std::vector<seq::PerturbSpec> all_perturbations() {
  std::vector<seq::PerturbSpec> out;
  for (auto kind : seq::kAllPerturbKinds)
    for (int s = 1; s <= 5; ++s) out.push_back({kind, s});
  return out;
}

std::vector<DegradationRow> eval_under_perturbation(const LinearProbe& probe,
                                                    std::span<const clapp::ImagePathway* const> pathways,
                                                    const std::vector<TensorF>& images, std::span<const int> labels,
                                                    std::span<const seq::PerturbSpec> specs,
                                                    const seq::PatchGeometry& geom, std::uint64_t seed) {
  std::vector<DegradationRow> rows;
  auto accuracy = [&](const std::vector<TensorF>& imgs) {
    const FeatureSet fs = extract_features(pathways, imgs, geom);
    return eval_multiclass(probe, fs.values, labels, 1).top1;
  };
  rows.push_back({"clean", 0, accuracy(images)});
  for (const auto& spec : specs) {
    rows.push_back({seq::perturb_kind_name(spec.kind), spec.severity, accuracy(perturbed_images(images, spec, seed))});
  }
  return rows;
}

}  // namespace iclp::probe
