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


// Frozen-encoder evaluation: pooled features, fusion by concatenation, a
// two-layer probe and the accuracy metrics.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "iclp/adam.hpp"
#include "iclp/clapp.hpp"
#include "iclp/sequencer.hpp"
#include "iclp/tensor.hpp"

namespace iclp::probe {

enum class Task { kMulticlass, kMultitarget };

Task task_from_name(const std::string& name);
std::string task_name(Task task);

// ---- fusion ----------------------------------------------------------------------

/// Registered fusion order. A pathway name is a registered base name with an
/// optional replica suffix, e.g. "plain#2"; replicas sort after their base.
inline constexpr const char* kPathwayOrder[] = {"plain", "lbp", "rgnorm", "dtcwt", "movnet"};

/// Position of `name` in the fusion order as (base rank, replica). Throws
/// ConfigError for an unregistered base name.
std::pair<std::size_t, std::size_t> fusion_rank(const std::string& name);

/// Throws unless `names` is strictly increasing in fusion order.
void check_fusion_order(std::span<const std::string> names);

/// Names sorted into fusion order.
std::vector<std::string> sorted_fusion_order(std::vector<std::string> names);

struct FeatureSlice {
  std::string pathway;
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
};

/// Features of N items, [N, d_total], with the slice owned by each pathway.
struct FeatureSet {
  TensorF values;
  std::vector<FeatureSlice> slices;

  std::size_t size() const { return values.empty() ? 0 : values.dim(0); }
  std::size_t dim() const { return values.empty() ? 0 : values.dim(1); }
  const FeatureSlice& slice(const std::string& pathway) const;
};

/// Mean over patches of the layer-6 pooled vectors, one pathway.
TensorF pathway_features(const clapp::ImagePathway& pathway, const std::vector<TensorF>& images,
                         const seq::PatchGeometry& geom);

/// Features of every image for pathways given in fusion order.
FeatureSet extract_features(std::span<const clapp::ImagePathway* const> pathways, const std::vector<TensorF>& images,
                            const seq::PatchGeometry& geom);

/// Concatenate per-pathway feature blocks; names must be in fusion order.
FeatureSet fuse(std::span<const std::string> names, std::span<const TensorF> blocks);

/// Zero the columns of one pathway; the slice table is untouched.
FeatureSet zero_slice(const FeatureSet& fs, const std::string& pathway);

// ---- probe -------------------------------------------------------------------------

struct ProbeConfig {
  std::size_t hidden = 256;
  double dropout = 0.5;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  nn::AdamConfig adam{1e-3, 0.0, 0.9, 0.999, 1e-8};
  bool standardize = true;  // z-score inputs with training-set statistics
  std::uint64_t seed = 0;
};

/// fc1 (d -> hidden) + ReLU + dropout + fc2 (hidden -> classes).
struct LinearProbe {
  Task task = Task::kMulticlass;
  TensorF w1, b1, w2, b2;
  TensorF mean, inv_std;  // input standardisation; empty when disabled
  double dropout = 0.5;

  LinearProbe() = default;
  LinearProbe(std::size_t in_dim, std::size_t hidden, std::size_t classes, Task task, double dropout, Rng& rng);

  std::size_t in_dim() const { return w1.dim(1); }
  std::size_t num_classes() const { return w2.dim(0); }

  /// Standardised copy of `features` (identity when disabled).
  TensorF normalize(const TensorF& features) const;

  /// Logits [N, classes] in inference mode.
  TensorF logits(const TensorF& features) const;
};

/// Per-epoch hook: (epoch, mean training loss).
using ProbeEpochFn = std::function<void(std::size_t, double)>;

/// label_sets[i] holds one class for multiclass, any number for multitarget.
LinearProbe train_probe(const TensorF& features, const std::vector<std::vector<int>>& label_sets,
                        std::size_t num_classes, Task task, const ProbeConfig& config,
                        const ProbeEpochFn& on_epoch = {});

// ---- metrics -------------------------------------------------------------------------

struct MulticlassResult {
  double top1 = 0.0;  // percent
  double topk = 0.0;  // percent
  std::size_t k = 5;
  std::vector<double> per_class;  // percent; NaN for classes without samples
};

/// Ties in the scores rank the lower class index first.
MulticlassResult eval_multiclass(const TensorF& scores, std::span<const int> labels, std::size_t k = 5);
MulticlassResult eval_multiclass(const LinearProbe& probe, const TensorF& features, std::span<const int> labels,
                                 std::size_t k = 5);

enum class AverageMode { kPerClass, kPerSample };

struct MultitargetResult {
  double multi_target = 0.0;  // percent of samples with every class right
  double average = 0.0;       // percent, see AverageMode
  std::vector<double> per_class;
};

/// `probabilities` [N, C]; a class is predicted present when p >= threshold.
/// kPerClass averages the per-class binary accuracies. kPerSample averages
/// the per-sample Jaccard index |pred & truth| / |pred | truth| (1 when both
/// are empty); the mean fraction of correct classes per sample would equal
/// kPerClass exactly, so it is not offered.
MultitargetResult eval_multitarget(const TensorF& probabilities, const std::vector<std::vector<int>>& label_sets,
                                   double threshold = 0.5, AverageMode mode = AverageMode::kPerClass);
MultitargetResult eval_multitarget(const LinearProbe& probe, const TensorF& features,
                                   const std::vector<std::vector<int>>& label_sets, double threshold = 0.5,
                                   AverageMode mode = AverageMode::kPerClass);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
  std::size_t n = 0;
};

Summary summarize(std::span<const double> values);

// ---- perturbation ------------------------------------------------------------------

/// The test images under one perturbation. Noise draws depend only on
/// (seed, kind, severity, image index), so every model sees the same images.
std::vector<TensorF> perturbed_images(const std::vector<TensorF>& images, const seq::PerturbSpec& spec,
                                      std::uint64_t seed);

/// All 25 (kind, severity) settings in a fixed order.
std::vector<seq::PerturbSpec> all_perturbations();

struct DegradationRow {
  std::string kind;  // "clean" for the unperturbed baseline
  int severity = 0;
  double accuracy = 0.0;  // percent
};

/// Top-1 accuracy of a frozen model (pathways + probe) on the clean and each
/// perturbed test set. Nothing is retrained.
std::vector<DegradationRow> eval_under_perturbation(const LinearProbe& probe,
                                                    std::span<const clapp::ImagePathway* const> pathways,
                                                    const std::vector<TensorF>& images, std::span<const int> labels,
                                                    std::span<const seq::PerturbSpec> specs,
                                                    const seq::PatchGeometry& geom, std::uint64_t seed);

}  // namespace iclp::probe
