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

#include "iclp/sequencer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "iclp/image.hpp"

namespace iclp::seq {

PatchGeometry PatchGeometry::scaled(std::size_t factor) const {
  if (factor == 0 || size % factor != 0 || stride % factor != 0) {
    throw ConfigError("patch geometry " + std::to_string(size) + "/" + std::to_string(stride) +
                      " cannot be scaled by 1/" + std::to_string(factor));
  }
  return {size / factor, stride / factor};
}

namespace {

std::size_t grid_count(std::size_t dim, const PatchGeometry& g, const char* axis) {
  if (g.size == 0 || g.stride == 0) throw ConfigError("patch size and stride must be positive");
  if (dim < g.size) {
    throw ConfigError(std::string("extract_patches: ") + axis + " extent " + std::to_string(dim) +
                      " is smaller than the patch size " + std::to_string(g.size));
  }
  const std::size_t rem = (dim - g.size) % g.stride;
  if (rem != 0) {
    throw ConfigError(std::string("extract_patches: ") + axis + " extent " + std::to_string(dim) +
                      " does not tile with patch " + std::to_string(g.size) + " stride " + std::to_string(g.stride) +
                      "; pad by " + std::to_string(g.stride - rem) + " pixels");
  }
  return (dim - g.size) / g.stride + 1;
}

}  // namespace

PatchSequence extract_patches(const TensorF& img, const PatchGeometry& geom, std::size_t source_id) {
  if (img.rank() != 3) throw ConfigError("extract_patches: expected [C,H,W], got " + shape_str(img.shape()));
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  PatchSequence seq;
  seq.source_id = source_id;
  seq.grid_rows = grid_count(h, geom, "vertical");
  seq.grid_cols = grid_count(w, geom, "horizontal");
  const std::size_t s = geom.size;
  seq.patches = TensorF(Shape{seq.length(), c, s, s});
  float* dst = seq.patches.data();
  for (std::size_t r = 0; r < seq.grid_rows; ++r) {
    for (std::size_t q = 0; q < seq.grid_cols; ++q) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < s; ++y) {
          const float* src = &img.at(ch, r * geom.stride + y, q * geom.stride);
          dst = std::copy(src, src + s, dst);
        }
      }
    }
  }
  return seq;
}

TensorF augment(const TensorF& img, const AugmentConfig& cfg, Rng& rng) {
  if (img.rank() != 3) throw ConfigError("augment: expected [C,H,W], got " + shape_str(img.shape()));
  if (!(cfg.min_area > 0 && cfg.min_area <= cfg.max_area && cfg.max_area <= 1.0)) {
    throw ConfigError("augment: crop area range must satisfy 0 < min <= max <= 1");
  }
  const std::size_t h = img.dim(1), w = img.dim(2);
  const double area = rng.uniform(cfg.min_area, cfg.max_area);
  const double side = std::sqrt(area);
  const std::size_t ch = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(side * h)), 1, h);
  const std::size_t cw = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(side * w)), 1, w);
  const std::size_t y0 = rng.index(h - ch + 1);
  const std::size_t x0 = rng.index(w - cw + 1);
  const bool flip = rng.uniform() < cfg.flip_p;
  TensorF out = image::resize_bilinear(image::crop(img, y0, x0, ch, cw), cfg.out_size, cfg.out_size);
  return flip ? image::flip_horizontal(out) : out;
}

PerturbKind perturb_kind_from_name(const std::string& name) {
  if (name == "gaussian_noise") return PerturbKind::kGaussianNoise;
  if (name == "motion_blur") return PerturbKind::kMotionBlur;
  if (name == "brightness") return PerturbKind::kBrightness;
  if (name == "shadow") return PerturbKind::kShadow;
  if (name == "chromaticity_jitter") return PerturbKind::kChromaticity;
  throw ConfigError("unknown perturbation kind '" + name + "'");
}

std::string perturb_kind_name(PerturbKind kind) {
  switch (kind) {
    case PerturbKind::kGaussianNoise: return "gaussian_noise";
    case PerturbKind::kMotionBlur: return "motion_blur";
    case PerturbKind::kBrightness: return "brightness";
    case PerturbKind::kShadow: return "shadow";
    case PerturbKind::kChromaticity: return "chromaticity_jitter";
  }
  return "?";
}

double PerturbTables::value(const PerturbSpec& spec) const {
  if (spec.severity < 1 || spec.severity > 5) {
    throw ConfigError("perturbation severity must be in 1..5, got " + std::to_string(spec.severity));
  }
  const auto i = static_cast<std::size_t>(spec.severity - 1);
  switch (spec.kind) {
    case PerturbKind::kGaussianNoise: return noise_sigma[i];
    case PerturbKind::kMotionBlur: return blur_length[i];
    case PerturbKind::kBrightness: return brightness[i];
    case PerturbKind::kShadow: return shadow[i];
    case PerturbKind::kChromaticity: return chroma_gain[i];
  }
  throw ConfigError("unknown perturbation kind");
}

TensorF add_gaussian_noise(const TensorF& img, double sigma, Rng& rng) {
  TensorF out = img;
  if (sigma == 0.0) return out;
  for (auto& v : out) v = static_cast<float>(v + sigma * rng.normal());
  image::clamp01(out);
  return out;
}

TensorF motion_blur(const TensorF& img, std::size_t length, double angle) {
  if (img.rank() != 3) throw ConfigError("motion_blur: expected [C,H,W]");
  if (length <= 1) return img;
  // Line kernel of `length` unit-spaced samples through the centre, splatted
  // bilinearly onto a (length+2)^2 grid.
  const long k = static_cast<long>(length) + 2;
  const double mid = static_cast<double>(k - 1) / 2.0;
  std::vector<double> ker(static_cast<std::size_t>(k * k), 0.0);
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (std::size_t i = 0; i < length; ++i) {
    const double t = static_cast<double>(i) - static_cast<double>(length - 1) / 2.0;
    const double y = mid - t * sa, x = mid + t * ca;
    const double fy = std::floor(y), fx = std::floor(x);
    const double wy = y - fy, wx = x - fx;
    const long iy = static_cast<long>(fy), ix = static_cast<long>(fx);
    const double wts[4] = {(1 - wy) * (1 - wx), (1 - wy) * wx, wy * (1 - wx), wy * wx};
    const long dys[4] = {0, 0, 1, 1}, dxs[4] = {0, 1, 0, 1};
    for (int q = 0; q < 4; ++q) {
      const long yy = std::clamp(iy + dys[q], 0L, k - 1), xx = std::clamp(ix + dxs[q], 0L, k - 1);
      ker[static_cast<std::size_t>(yy * k + xx)] += wts[q];
    }
  }
  double total = 0;
  for (double v : ker) total += v;
  for (double& v : ker) v /= total;
  const long c = static_cast<long>(img.dim(0)), h = static_cast<long>(img.dim(1)), w = static_cast<long>(img.dim(2));
  const long half = k / 2;
  TensorF out(img.shape());
  for (long ch = 0; ch < c; ++ch) {
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        double acc = 0;
        for (long ky = 0; ky < k; ++ky) {
          const long sy = std::clamp(y + ky - half, 0L, h - 1);
          for (long kx = 0; kx < k; ++kx) {
            const double kv = ker[static_cast<std::size_t>(ky * k + kx)];
            if (kv == 0.0) continue;
            const long sx = std::clamp(x + kx - half, 0L, w - 1);
            acc += kv * img.at(ch, sy, sx);
          }
        }
        out.at(ch, y, x) = static_cast<float>(acc);
      }
    }
  }
  image::clamp01(out);
  return out;
}

TensorF scale_brightness(const TensorF& img, double factor) {
  TensorF out = img;
  for (auto& v : out) v = static_cast<float>(v * factor);
  image::clamp01(out);
  return out;
}

TensorF half_plane_shadow(const TensorF& img, double px, double py, double angle, double factor) {
  if (img.rank() != 3) throw ConfigError("shadow: expected [C,H,W]");
  TensorF out = img;
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (std::size_t ch = 0; ch < img.dim(0); ++ch) {
    for (std::size_t y = 0; y < img.dim(1); ++y) {
      for (std::size_t x = 0; x < img.dim(2); ++x) {
        if ((static_cast<double>(x) - px) * ca + (static_cast<double>(y) - py) * sa > 0) {
          out.at(ch, y, x) = static_cast<float>(img.at(ch, y, x) * factor);
        }
      }
    }
  }
  image::clamp01(out);
  return out;
}

TensorF channel_gains(const TensorF& img, double gain_r, double gain_b) {
  if (img.rank() != 3 || img.dim(0) != 3) throw ConfigError("channel gains need an RGB image");
  TensorF out = img;
  const std::size_t n = img.dim(1) * img.dim(2);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = static_cast<float>(img[i] * gain_r);
    out[2 * n + i] = static_cast<float>(img[2 * n + i] * gain_b);
  }
  image::clamp01(out);
  return out;
}

TensorF perturb(const TensorF& img, const PerturbSpec& spec, const PerturbTables& tables, Rng& rng) {
  const double v = tables.value(spec);
  const double h = static_cast<double>(img.dim(1)), w = static_cast<double>(img.dim(2));
  switch (spec.kind) {
    case PerturbKind::kGaussianNoise: return add_gaussian_noise(img, v, rng);
    case PerturbKind::kMotionBlur:
      return motion_blur(img, static_cast<std::size_t>(v), rng.uniform(0.0, std::numbers::pi));
    case PerturbKind::kBrightness: return scale_brightness(img, v);
    case PerturbKind::kShadow: {
      const double px = rng.uniform(0.25, 0.75) * w, py = rng.uniform(0.25, 0.75) * h;
      return half_plane_shadow(img, px, py, rng.uniform(0.0, 2.0 * std::numbers::pi), v);
    }
    case PerturbKind::kChromaticity: {
      // Warmer or cooler light: red and blue move in opposite directions.
      const double g = 1.0 + (rng.bernoulli(0.5) ? v : -v);
      return channel_gains(img, g, 1.0 / g);
    }
  }
  throw ConfigError("unknown perturbation kind");
}

TensorF perturb(const TensorF& img, const PerturbSpec& spec, Rng& rng) {
  return perturb(img, spec, PerturbTables{}, rng);
}

FrameSequence sample_clip(const std::vector<TensorF>& video, std::size_t length, std::size_t out_size, Rng& rng,
                          std::size_t video_id) {
  if (video.size() < length) {
    throw DataError("video " + std::to_string(video_id) + " has " + std::to_string(video.size()) +
                    " frames, clip needs " + std::to_string(length));
  }
  FrameSequence clip;
  clip.video_id = video_id;
  clip.start = rng.index(video.size() - length + 1);
  for (std::size_t i = 0; i < length; ++i) {
    const TensorF& f = video[clip.start + i];
    clip.frames.push_back(f.dim(1) == out_size && f.dim(2) == out_size ? f
                                                                       : image::resize_bilinear(f, out_size, out_size));
  }
  return clip;
}

}  // namespace iclp::seq
