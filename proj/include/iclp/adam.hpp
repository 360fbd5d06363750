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

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "iclp/tensor.hpp"

namespace iclp::nn {

struct AdamConfig {
  double lr = 1e-5;
  double weight_decay = 5e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with decoupled weight decay over a fixed list of parameter tensors.
template <typename T>
class AdamState {
 public:
  AdamState() = default;
  AdamState(AdamConfig config, std::span<Tensor<T>* const> params) : config_(config) {
    for (const Tensor<T>* p : params) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
  }

  const AdamConfig& config() const noexcept { return config_; }
  void set_lr(double lr) noexcept { config_.lr = lr; }
  std::uint64_t step_count() const noexcept { return step_; }
  const std::vector<Tensor<T>>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor<T>>& second_moments() const noexcept { return v_; }

  /// One update. grads[i] must match params[i]; a missing gradient is
  /// treated as zero. Any non-finite gradient aborts before any write.
  void step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
      throw ConfigError("adam: expected " + std::to_string(m_.size()) + " parameters, got " +
                        std::to_string(params.size()) + " params / " + std::to_string(grads.size()) + " grads");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i]->shape() != m_[i].shape() || (!grads[i].empty() && grads[i].shape() != m_[i].shape())) {
        throw ConfigError("adam: shape mismatch for parameter " + std::to_string(i));
      }
      if (!grads[i].all_finite()) throw NumericError("adam: non-finite gradient for parameter " + std::to_string(i));
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
    const T lr = static_cast<T>(config_.lr), wd = static_cast<T>(config_.weight_decay);
    const T eps = static_cast<T>(config_.eps);
    const T ibc1 = static_cast<T>(1.0 / bc1), ibc2 = static_cast<T>(1.0 / bc2);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& p = *params[i];
      Tensor<T>& m = m_[i];
      Tensor<T>& v = v_[i];
      const bool has_grad = !grads[i].empty();
      for (std::size_t j = 0; j < p.size(); ++j) {
        const T g = has_grad ? grads[i][j] : T{0};
        m[j] = b1 * m[j] + (T{1} - b1) * g;
        v[j] = b2 * v[j] + (T{1} - b2) * g * g;
        const T mhat = m[j] * ibc1;
        const T vhat = v[j] * ibc2;
        p[j] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * p[j]);
      }
    }
  }

 private:
  AdamConfig config_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  std::uint64_t step_ = 0;
};

}  // namespace iclp::nn
