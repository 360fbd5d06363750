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

#include "iclp/clapp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>

#include "iclp/autograd.hpp"

namespace iclp::clapp {

TrainMode train_mode_from_name(const std::string& name) {
  if (name == "clapp" || name == "CLAPP_local" || name == "clapp_local") return TrainMode::kClappLocal;
  if (name == "hingecpc" || name == "HingeCPC_e2e" || name == "hingecpc_e2e") return TrainMode::kHingeCpcE2e;
  throw ConfigError("unknown training mode '" + name + "' (expected CLAPP_local or HingeCPC_e2e)");
}

std::string train_mode_name(TrainMode mode) {
  return mode == TrainMode::kClappLocal ? "CLAPP_local" : "HingeCPC_e2e";
}

// ---- heads ----------------------------------------------------------------------

template <typename T>
PredictionHeads<T>::PredictionHeads(const std::vector<std::size_t>& layer_dims, std::size_t max_offset, Rng& rng)
    : max_offset_(max_offset) {
  if (max_offset < 1) throw ConfigError("prediction heads need max_offset >= 1");
  for (std::size_t d : layer_dims) {
    weights_.emplace_back();
    const double bound = std::sqrt(6.0 / static_cast<double>(d));
    for (std::size_t k = 0; k < max_offset; ++k) {
      Tensor<T> w(Shape{d, d});
      for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
      weights_.back().push_back(std::move(w));
    }
  }
}

template <typename T>
PredictionHeads<T>::PredictionHeads(std::size_t max_offset, std::vector<std::vector<Tensor<T>>> weights)
    : max_offset_(max_offset), weights_(std::move(weights)) {
  for (const auto& layer : weights_) {
    if (layer.size() != max_offset_) throw ConfigError("prediction heads: wrong number of offsets");
    for (const auto& w : layer) {
      if (w.rank() != 2 || w.dim(0) != w.dim(1)) {
        throw ConfigError("prediction heads: expected square matrices, got " + shape_str(w.shape()));
      }
    }
  }
}

template <typename T>
bool PredictionHeads<T>::has(std::size_t layer, std::size_t offset) const noexcept {
  return layer < weights_.size() && offset >= 1 && offset <= max_offset_;
}

template <typename T>
Tensor<T>& PredictionHeads<T>::weight(std::size_t layer, std::size_t offset) {
  if (!has(layer, offset)) {
    throw ConfigError("no prediction head for layer " + std::to_string(layer + 1) + " offset " + std::to_string(offset));
  }
  return weights_[layer][offset - 1];
}

template <typename T>
const Tensor<T>& PredictionHeads<T>::weight(std::size_t layer, std::size_t offset) const {
  return const_cast<PredictionHeads*>(this)->weight(layer, offset);
}

template <typename T>
std::uint64_t PredictionHeads<T>::checksum() const {
  std::vector<const Tensor<T>*> all;
  for (const auto& layer : weights_) {
    for (const auto& w : layer) all.push_back(&w);
  }
  return tensor_checksum(all);
}

template <typename T>
Tensor<T> predict_future(const Tensor<T>& context, const PredictionHeads<T>& heads, std::size_t layer,
                         std::size_t offset) {
  const Tensor<T>& w = heads.weight(layer, offset);
  if (context.rank() != 1 || context.dim(0) != w.dim(1)) {
    throw ConfigError("predict_future: context " + shape_str(context.shape()) + " does not match head " +
                      shape_str(w.shape()));
  }
  const std::size_t d = w.dim(0);
  Tensor<T> out(Shape{d});
  nn::gemm<T>(false, false, d, 1, d, T{1}, w.data(), d, context.data(), 1, T{0}, out.data(), 1);
  return out;
}

double hinge_loss(std::span<const double> z_pred, std::span<const double> z_target, int y) {
  if (z_pred.size() != z_target.size()) throw ConfigError("hinge_loss: dimension mismatch");
  if (y != 1 && y != -1) throw ConfigError("hinge_loss: label must be +1 or -1");
  double dot = 0;
  for (std::size_t i = 0; i < z_pred.size(); ++i) dot += z_pred[i] * z_target[i];
  return std::max(0.0, 1.0 - y * dot);
}

// ---- contrast batch --------------------------------------------------------------

std::vector<ContrastSample> build_contrast_batch(std::span<const SequenceRef> sequences, std::size_t max_offset,
                                                 std::size_t negatives, Rng& rng) {
  std::vector<std::size_t> sources;
  for (const auto& s : sequences) sources.push_back(s.source_id);
  std::sort(sources.begin(), sources.end());
  if (std::unique(sources.begin(), sources.end()) - sources.begin() < 2) {
    throw ConfigError("contrast batch needs at least 2 distinct source images");
  }
  std::vector<ContrastSample> out;
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const SequenceRef& s = sequences[i];
    others.clear();
    for (std::size_t j = 0; j < sequences.size(); ++j) {
      if (sequences[j].source_id != s.source_id && sequences[j].length > 0) others.push_back(j);
    }
    std::size_t other_rows = 0;
    for (std::size_t j : others) other_rows += sequences[j].length;
    for (std::size_t d = 1; d <= max_offset; ++d) {
      for (std::size_t t = 0; t + d < s.length; ++t) {
        out.push_back({s.first_row + t, s.first_row + t + d, d, 1});
        for (std::size_t k = 0; k < negatives; ++k) {
          // Uniform over all time steps of the other sources.
          std::size_t pick = rng.index(other_rows);
          for (std::size_t j : others) {
            if (pick < sequences[j].length) {
              out.push_back({s.first_row + t, sequences[j].first_row + pick, d, -1});
              break;
            }
            pick -= sequences[j].length;
          }
        }
      }
    }
  }
  return out;
}

// ---- losses and gradients ----------------------------------------------------------

LossSpec LossSpec::clapp(std::size_t depth) {
  LossSpec s;
  s.layers.resize(depth);
  std::iota(s.layers.begin(), s.layers.end(), std::size_t{0});
  s.layer_boundaries = true;
  return s;
}

LossSpec LossSpec::hingecpc(std::size_t depth) {
  LossSpec s;
  s.layers = {depth - 1};
  s.layer_boundaries = false;
  return s;
}

namespace {

template <typename T>
struct OffsetGroup {
  std::vector<std::size_t> context, target, sample;
  std::vector<T> label;
};

template <typename T>
std::vector<OffsetGroup<T>> group_by_offset(std::span<const ContrastSample> samples, std::size_t max_offset,
                                            std::size_t rows) {
  std::vector<OffsetGroup<T>> groups(max_offset);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.offset < 1 || s.offset > max_offset) {
      throw ConfigError("contrast sample offset " + std::to_string(s.offset) + " has no prediction head");
    }
    if (s.context >= rows || s.target >= rows) throw ConfigError("contrast sample row out of range");
    auto& g = groups[s.offset - 1];
    g.context.push_back(s.context);
    g.target.push_back(s.target);
    g.sample.push_back(i);
    g.label.push_back(static_cast<T>(s.label));
  }
  return groups;
}

template <typename T>
Gradients<T> run(const Encoder<T>& encoder, const PredictionHeads<T>& heads, const Tensor<T>& patches,
                 std::span<const ContrastSample> samples, const LossSpec& spec, bool differentiate) {
  if (spec.layers.empty()) throw ConfigError("loss spec lists no layers");
  if (samples.empty()) throw ConfigError("empty contrast batch");
  const std::size_t depth = *std::max_element(spec.layers.begin(), spec.layers.end()) + 1;
  if (depth > encoder.num_layers()) throw ConfigError("loss layer beyond encoder depth");
  nn::Tape<T> tape;
  const auto taped = encoder.forward(tape, tape.constant(patches), spec.layer_boundaries, differentiate, depth);
  const auto groups = group_by_offset<T>(samples, heads.max_offset(), patches.dim(0));

  Gradients<T> out;
  std::vector<std::vector<std::optional<nn::Var<T>>>> head_vars(encoder.num_layers(),
                                                                 std::vector<std::optional<nn::Var<T>>>(heads.max_offset()));
  std::optional<nn::Var<T>> total;
  const T inv_n = T{1} / static_cast<T>(samples.size());
  for (std::size_t l : spec.layers) {
    const nn::Var<T> z = taped.pooled[l];
    const nn::Var<T> zt = spec.detach_targets ? tape.boundary(z) : z;
    std::optional<nn::Var<T>> acc;
    for (std::size_t k = 0; k < groups.size(); ++k) {
      const auto& g = groups[k];
      if (g.context.empty()) continue;
      const nn::Var<T> w = tape.leaf(heads.weight(l, k + 1), differentiate);
      head_vars[l][k] = w;
      const nn::Var<T> pred = nn::linear(nn::gather_rows(z, std::span<const std::size_t>(g.context)), w);
      const nn::Var<T> score = nn::rowwise_dot(pred, nn::gather_rows(zt, std::span<const std::size_t>(g.target)));
      const Tensor<T>& sv = score.value();
      for (std::size_t i = 0; i < sv.size(); ++i) {
        if (!std::isfinite(sv[i])) {
          const auto& bad = samples[g.sample[i]];
          std::ostringstream os;
          os << "non-finite score at layer " << l + 1 << ", sample " << g.sample[i] << " (context row " << bad.context
             << ", target row " << bad.target << ", offset " << bad.offset << ", label " << bad.label << ")";
          throw NumericError(os.str());
        }
      }
      const nn::Var<T> h = nn::sum(nn::hinge(score, std::span<const T>(g.label)));
      acc = acc ? nn::add(*acc, h) : h;
    }
    const nn::Var<T> loss = nn::scale(*acc, inv_n);
    out.losses.push_back(static_cast<double>(loss.value()[0]));
    total = total ? nn::add(*total, loss) : loss;
  }
  if (!differentiate) return out;
  tape.backward(*total);
  auto collect = [&](nn::Var<T> v) {
    const Tensor<T>* g = tape.grad(v);
    return g ? *g : Tensor<T>();
  };
  for (std::size_t l = 0; l < encoder.num_layers(); ++l) {
    out.weight.push_back(l < depth ? collect(taped.weights[l]) : Tensor<T>());
    out.bias.push_back(l < depth ? collect(taped.biases[l]) : Tensor<T>());
    out.heads.emplace_back();
    for (std::size_t k = 0; k < heads.max_offset(); ++k) {
      out.heads.back().push_back(head_vars[l][k] ? collect(*head_vars[l][k]) : Tensor<T>());
    }
  }
  return out;
}

}  // namespace

template <typename T>
Gradients<T> contrastive_gradients(const Encoder<T>& encoder, const PredictionHeads<T>& heads,
                                   const Tensor<T>& patches, std::span<const ContrastSample> samples,
                                   const LossSpec& spec) {
  return run(encoder, heads, patches, samples, spec, true);
}

template <typename T>
std::vector<double> contrastive_losses(const Encoder<T>& encoder, const PredictionHeads<T>& heads,
                                       const Tensor<T>& patches, std::span<const ContrastSample> samples,
                                       const LossSpec& spec) {
  return run(encoder, heads, patches, samples, spec, false).losses;
}

// ---- optimiser -----------------------------------------------------------------------

template <typename T>
Optimizer<T>::Optimizer(TrainMode mode, nn::AdamConfig config, Encoder<T>& encoder, PredictionHeads<T>& heads)
    : mode_(mode) {
  const std::size_t L = encoder.num_layers();
  if (heads.num_layers() != L) throw ConfigError("prediction heads do not match the encoder depth");
  auto make_group = [&](std::vector<Member> members) {
    std::vector<Tensor<T>*> params;
    for (const auto& m : members) {
      params.push_back(m.kind == Member::kWeight ? &encoder.weight(m.layer)
                       : m.kind == Member::kBias ? &encoder.bias(m.layer)
                                                 : &heads.weight(m.layer, m.offset));
    }
    Group g{std::move(members), nn::AdamState<T>(config, params)};
    groups_.push_back(std::move(g));
  };
  if (mode == TrainMode::kClappLocal) {
    for (std::size_t l = 0; l < L; ++l) {
      std::vector<Member> m{{Member::kWeight, l, 0}, {Member::kBias, l, 0}};
      for (std::size_t d = 1; d <= heads.max_offset(); ++d) m.push_back({Member::kHead, l, d});
      make_group(std::move(m));
    }
  } else {
    std::vector<Member> m;
    for (std::size_t l = 0; l < L; ++l) {
      m.push_back({Member::kWeight, l, 0});
      m.push_back({Member::kBias, l, 0});
    }
    for (std::size_t d = 1; d <= heads.max_offset(); ++d) m.push_back({Member::kHead, L - 1, d});
    make_group(std::move(m));
  }
}

template <typename T>
void Optimizer<T>::step(Encoder<T>& encoder, PredictionHeads<T>& heads, const Gradients<T>& grads) {
  // Validate every group first so a bad gradient leaves all parameters intact.
  for (const auto& g : grads.weight) require_finite(g, "encoder weight gradient");
  for (const auto& g : grads.bias) require_finite(g, "encoder bias gradient");
  for (const auto& layer : grads.heads) {
    for (const auto& g : layer) require_finite(g, "prediction head gradient");
  }
  static const Tensor<T> kNone;
  auto pick = [&](const std::vector<Tensor<T>>& v, std::size_t i) -> const Tensor<T>& {
    return i < v.size() ? v[i] : kNone;
  };
  for (auto& group : groups_) {
    std::vector<Tensor<T>*> params;
    std::vector<Tensor<T>> g;
    for (const auto& m : group.members) {
      switch (m.kind) {
        case Member::kWeight:
          params.push_back(&encoder.weight(m.layer));
          g.push_back(pick(grads.weight, m.layer));
          break;
        case Member::kBias:
          params.push_back(&encoder.bias(m.layer));
          g.push_back(pick(grads.bias, m.layer));
          break;
        case Member::kHead:
          params.push_back(&heads.weight(m.layer, m.offset));
          g.push_back(m.layer < grads.heads.size() ? pick(grads.heads[m.layer], m.offset - 1) : kNone);
          break;
      }
    }
    group.state.step(params, g);
  }
}

template <typename T>
std::vector<double> clapp_update(Encoder<T>& encoder, PredictionHeads<T>& heads, Optimizer<T>& opt,
                                 const Tensor<T>& patches, std::span<const ContrastSample> samples) {
  if (opt.mode() != TrainMode::kClappLocal) throw ConfigError("clapp_update needs a CLAPP optimizer");
  const Gradients<T> g = contrastive_gradients(encoder, heads, patches, samples, LossSpec::clapp(encoder.num_layers()));
  opt.step(encoder, heads, g);
  return g.losses;
}

template <typename T>
double hingecpc_update(Encoder<T>& encoder, PredictionHeads<T>& heads, Optimizer<T>& opt, const Tensor<T>& patches,
                       std::span<const ContrastSample> samples) {
  if (opt.mode() != TrainMode::kHingeCpcE2e) throw ConfigError("hingecpc_update needs a HingeCPC optimizer");
  const Gradients<T> g =
      contrastive_gradients(encoder, heads, patches, samples, LossSpec::hingecpc(encoder.num_layers()));
  opt.step(encoder, heads, g);
  return g.losses.front();
}

// ---- pathway training ------------------------------------------------------------------

ImagePathway ImagePathway::create(std::string name, ops::Operator op, const EncoderPlan& plan, std::size_t max_offset,
                                  Rng& rng) {
  ImagePathway p;
  p.name = std::move(name);
  p.op = op;
  EncoderPlan pl = plan;
  pl.in_channels = ops::operator_channels(op);
  p.encoder = Encoder<float>(pl, rng);
  p.heads = PredictionHeads<float>(pl.channels, max_offset, rng);
  return p;
}

seq::PatchSequence pathway_patches(const ImagePathway& pathway, const TensorF& rgb, const seq::PatchGeometry& geom,
                                   std::size_t source_id) {
  const TensorF x = ops::apply_operator(pathway.op, rgb);
  return seq::extract_patches(x, geom.scaled(ops::operator_scale(pathway.op)), source_id);
}

std::vector<EpochLoss> train(ImagePathway& pathway, const std::vector<TensorF>& images, const TrainConfig& config,
                             const std::function<void(const EpochLoss&)>& on_epoch) {
  if (images.size() < 2) throw DataError("training needs at least 2 images");
  if (config.batch_size < 2) throw ConfigError("batch size must be >= 2");
  if (pathway.heads.max_offset() < config.max_offset) throw ConfigError("heads cover fewer offsets than max_offset");
  const Rng root(config.seed);
  Rng order_rng = root.fork(1), aug_rng = root.fork(2), neg_rng = root.fork(3);
  Optimizer<float> opt(config.mode, config.adam, pathway.encoder, pathway.heads);
  const std::size_t loss_layers = config.mode == TrainMode::kClappLocal ? pathway.encoder.num_layers() : 1;

  std::vector<std::size_t> perm(images.size());
  std::vector<EpochLoss> history;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    order_rng.shuffle(perm.begin(), perm.end());
    std::vector<double> sums(loss_layers, 0.0);
    std::size_t batches = 0;
    for (std::size_t b0 = 0; b0 < perm.size(); b0 += config.batch_size) {
      const std::size_t b1 = std::min(perm.size(), b0 + config.batch_size);
      if (b1 - b0 < 2) break;  // a lone image has no negatives
      std::vector<float> data;
      std::vector<SequenceRef> refs;
      Shape patch_shape;
      std::size_t rows = 0;
      for (std::size_t i = b0; i < b1; ++i) {
        const TensorF img = config.augment_enabled ? seq::augment(images[perm[i]], config.augment, aug_rng)
                                                   : images[perm[i]];
        const seq::PatchSequence s = pathway_patches(pathway, img, config.patch, perm[i]);
        if (patch_shape.empty()) patch_shape = Shape(s.patches.shape().begin() + 1, s.patches.shape().end());
        data.insert(data.end(), s.patches.begin(), s.patches.end());
        refs.push_back({s.source_id, rows, s.length()});
        rows += s.length();
      }
      Shape bs = patch_shape;
      bs.insert(bs.begin(), rows);
      const TensorF batch(bs, std::move(data));
      const auto samples = build_contrast_batch(refs, config.max_offset, config.negatives, neg_rng);
      if (config.mode == TrainMode::kClappLocal) {
        const auto losses = clapp_update(pathway.encoder, pathway.heads, opt, batch, samples);
        for (std::size_t l = 0; l < loss_layers; ++l) sums[l] += losses[l];
      } else {
        sums[0] += hingecpc_update(pathway.encoder, pathway.heads, opt, batch, samples);
      }
      ++batches;
    }
    EpochLoss e{epoch, {}};
    for (double s : sums) e.layer_losses.push_back(batches ? s / static_cast<double>(batches) : 0.0);
    history.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  return history;
}

#define ICLP_INSTANTIATE(T)                                                                                         \
  template class PredictionHeads<T>;                                                                                \
  template class Optimizer<T>;                                                                                      \
  template Tensor<T> predict_future<T>(const Tensor<T>&, const PredictionHeads<T>&, std::size_t, std::size_t);     \
  template Gradients<T> contrastive_gradients<T>(const Encoder<T>&, const PredictionHeads<T>&, const Tensor<T>&,   \
                                                 std::span<const ContrastSample>, const LossSpec&);                \
  template std::vector<double> contrastive_losses<T>(const Encoder<T>&, const PredictionHeads<T>&,                 \
                                                     const Tensor<T>&, std::span<const ContrastSample>,            \
                                                     const LossSpec&);                                             \
  template std::vector<double> clapp_update<T>(Encoder<T>&, PredictionHeads<T>&, Optimizer<T>&, const Tensor<T>&,  \
                                               std::span<const ContrastSample>);                                   \
  template double hingecpc_update<T>(Encoder<T>&, PredictionHeads<T>&, Optimizer<T>&, const Tensor<T>&,            \
                                     std::span<const ContrastSample>);

ICLP_INSTANTIATE(float)
ICLP_INSTANTIATE(double)
#undef ICLP_INSTANTIATE

}  // namespace iclp::clapp
