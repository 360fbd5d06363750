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

#include "iclp/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace iclp::image {

namespace {

void require_chw(const Shape& s, const char* what) {
  if (s.size() != 3) throw ConfigError(std::string(what) + ": expected [C,H,W], got " + shape_str(s));
}

}  // namespace

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& img, std::size_t out_h, std::size_t out_w) {
  require_chw(img.shape(), "resize");
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  if (h == 0 || w == 0 || out_h == 0 || out_w == 0) throw ConfigError("resize: empty extent");
  Tensor<T> out(Shape{c, out_h, out_w});
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  std::vector<std::size_t> x0(out_w), x1(out_w);
  std::vector<double> fx(out_w);
  for (std::size_t x = 0; x < out_w; ++x) {
    const double src = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
    x0[x] = static_cast<std::size_t>(src);
    x1[x] = std::min(x0[x] + 1, w - 1);
    fx[x] = src - static_cast<double>(x0[x]);
  }
  for (std::size_t y = 0; y < out_h; ++y) {
    const double src = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const std::size_t y0 = static_cast<std::size_t>(src);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double fy = src - static_cast<double>(y0);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t x = 0; x < out_w; ++x) {
        const double top = (1 - fx[x]) * img.at(ch, y0, x0[x]) + fx[x] * img.at(ch, y0, x1[x]);
        const double bot = (1 - fx[x]) * img.at(ch, y1, x0[x]) + fx[x] * img.at(ch, y1, x1[x]);
        out.at(ch, y, x) = static_cast<T>((1 - fy) * top + fy * bot);
      }
    }
  }
  return out;
}

template TensorF resize_bilinear<float>(const TensorF&, std::size_t, std::size_t);
template TensorD resize_bilinear<double>(const TensorD&, std::size_t, std::size_t);

TensorF crop(const TensorF& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  require_chw(img.shape(), "crop");
  if (y0 + h > img.dim(1) || x0 + w > img.dim(2)) {
    throw ConfigError("crop window exceeds image " + shape_str(img.shape()));
  }
  TensorF out(Shape{img.dim(0), h, w});
  for (std::size_t c = 0; c < img.dim(0); ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      const float* src = &img.at(c, y0 + y, x0);
      std::copy(src, src + w, &out.at(c, y, 0));
    }
  }
  return out;
}

TensorF flip_horizontal(const TensorF& img) {
  require_chw(img.shape(), "flip");
  TensorF out = img;
  const std::size_t w = img.dim(2);
  for (std::size_t c = 0; c < img.dim(0); ++c) {
    for (std::size_t y = 0; y < img.dim(1); ++y) {
      for (std::size_t x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y, w - 1 - x);
    }
  }
  return out;
}

TensorF rotate90(const TensorF& img, int k) {
  require_chw(img.shape(), "rotate90");
  k = ((k % 4) + 4) % 4;
  if (k == 0) return img;
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  const std::size_t oh = k == 2 ? h : w, ow = k == 2 ? w : h;
  TensorF out(Shape{c, oh, ow});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t sy = 0, sx = 0;
        if (k == 1) {
          sy = x;
          sx = w - 1 - y;
        } else if (k == 2) {
          sy = h - 1 - y;
          sx = w - 1 - x;
        } else {
          sy = h - 1 - x;
          sx = y;
        }
        out.at(ch, y, x) = img.at(ch, sy, sx);
      }
    }
  }
  return out;
}

void clamp01(TensorF& img) {
  for (auto& v : img) v = std::clamp(v, 0.0f, 1.0f);
}

TensorF concat_channels(const TensorF& a, const TensorF& b) {
  require_chw(a.shape(), "concat");
  require_chw(b.shape(), "concat");
  if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
    throw ConfigError("concat: spatial mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<float> data(a.begin(), a.end());
  data.insert(data.end(), b.begin(), b.end());
  return TensorF(Shape{a.dim(0) + b.dim(0), a.dim(1), a.dim(2)}, std::move(data));
}

}  // namespace iclp::image
