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

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "iclp/rng.hpp"
#include "iclp/tensor.hpp"

namespace iclp::seq {

struct PatchGeometry {
  std::size_t size = 16;
  std::size_t stride = 8;

  /// The same grid on an image downsampled by `factor`.
  PatchGeometry scaled(std::size_t factor) const;
};

/// Ordered patches of one image: row-major over the grid, i.e. top to bottom,
/// left to right within a row.
struct PatchSequence {
  TensorF patches;  // [T, C, size, size]
  std::size_t source_id = 0;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;

  std::size_t length() const noexcept { return grid_rows * grid_cols; }
};

PatchSequence extract_patches(const TensorF& img, const PatchGeometry& geom, std::size_t source_id = 0);

struct AugmentConfig {
  double min_area = 0.8;
  double max_area = 1.0;
  double flip_p = 0.5;
  std::size_t out_size = 64;
};

/// Random square crop covering [min_area, max_area] of the image, bilinear
/// resize to out_size, then a horizontal flip with probability flip_p.
TensorF augment(const TensorF& img, const AugmentConfig& cfg, Rng& rng);

enum class PerturbKind { kGaussianNoise, kMotionBlur, kBrightness, kShadow, kChromaticity };

inline constexpr std::array<PerturbKind, 5> kAllPerturbKinds = {PerturbKind::kGaussianNoise, PerturbKind::kMotionBlur,
                                                                PerturbKind::kBrightness, PerturbKind::kShadow,
                                                                PerturbKind::kChromaticity};

PerturbKind perturb_kind_from_name(const std::string& name);
std::string perturb_kind_name(PerturbKind kind);

struct PerturbSpec {
  PerturbKind kind = PerturbKind::kGaussianNoise;
  int severity = 1;  // 1..5
};

/// Parameter per severity level 1..5.
struct PerturbTables {
  std::array<double, 5> noise_sigma{0.02, 0.04, 0.08, 0.12, 0.16};
  std::array<double, 5> blur_length{3, 5, 7, 9, 11};
  std::array<double, 5> brightness{1.1, 1.25, 1.5, 1.75, 2.0};
  std::array<double, 5> shadow{0.9, 0.8, 0.7, 0.6, 0.5};
  std::array<double, 5> chroma_gain{0.02, 0.04, 0.06, 0.08, 0.10};

  double value(const PerturbSpec& spec) const;
};

/// Apply one perturbation to an RGB image [3,H,W]; the result is clamped to
/// [0,1].
TensorF perturb(const TensorF& img, const PerturbSpec& spec, const PerturbTables& tables, Rng& rng);
TensorF perturb(const TensorF& img, const PerturbSpec& spec, Rng& rng);

// Building blocks, exposed for tests.
TensorF add_gaussian_noise(const TensorF& img, double sigma, Rng& rng);
TensorF motion_blur(const TensorF& img, std::size_t length, double angle);
TensorF scale_brightness(const TensorF& img, double factor);
/// Darken pixels with (x - px) * cos(a) + (y - py) * sin(a) > 0 by `factor`.
TensorF half_plane_shadow(const TensorF& img, double px, double py, double angle, double factor);
/// R *= gain_r, B *= gain_b.
TensorF channel_gains(const TensorF& img, double gain_r, double gain_b);

struct FrameSequence {
  std::vector<TensorF> frames;
  std::size_t video_id = 0;
  std::size_t start = 0;
};

/// Contiguous clip of `length` frames at a uniform random start, each resized
/// to out_size x out_size.
FrameSequence sample_clip(const std::vector<TensorF>& video, std::size_t length, std::size_t out_size, Rng& rng,
                          std::size_t video_id = 0);

}  // namespace iclp::seq
