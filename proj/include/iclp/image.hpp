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

#include <cstddef>

#include "iclp/tensor.hpp"

namespace iclp::image {

/// Bilinear resize of [C,H,W] with pixel-centre alignment and edge clamping.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& img, std::size_t out_h, std::size_t out_w);

/// Window [y0, y0+h) x [x0, x0+w) of [C,H,W].
TensorF crop(const TensorF& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);

TensorF flip_horizontal(const TensorF& img);

/// Counter-clockwise rotation by k quarter turns.
TensorF rotate90(const TensorF& img, int k);

void clamp01(TensorF& img);

/// Concatenate [C1,H,W] and [C2,H,W] along channels.
TensorF concat_channels(const TensorF& a, const TensorF& b);

}  // namespace iclp::image
