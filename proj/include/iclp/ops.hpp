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

// Front-end operators applied to an image before it reaches an encoder.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "iclp/tensor.hpp"

namespace iclp::ops {

/// Chromaticity (r, g) = (R, G) / (R + G + B). Input [3,H,W], output [2,H,W].
/// Pixels with R + G + B below 1e-8 map to (1/3, 1/3).
TensorF rg_normalize(const TensorF& rgb);

/// 0.299 R + 0.587 G + 0.114 B. Input [3,H,W], output [1,H,W].
TensorF luminance(const TensorF& rgb);

struct LbpParams {
  std::size_t points = 8;
  std::size_t radius = 1;
  bool rotation_invariant = true;

  void validate() const;
};

/// Bits of a ring: bit i set iff ring[i] >= center.
std::uint32_t lbp_ring_code(std::span<const double> ring, double center);

/// Smallest value among the P circular rotations of a P-bit code.
std::uint32_t lbp_min_rotation(std::uint32_t code, std::size_t points);

/// Neighbour i sits at angle 2*pi*i/P on the radius-R circle. With P = 8 the
/// ring is the square ring at chessboard distance R on the pixel grid, so
/// quarter-turn rotations map the ring onto itself exactly; other P use
/// bilinear samples. Codes are divided by 2^P - 1. Border pixels (within R of
/// the edge) copy the code of the nearest interior pixel.
TensorF lbp(const TensorF& gray, const LbpParams& params = {});

/// Raw integer codes of the interior pixels in row-major order.
std::vector<std::uint32_t> lbp_interior_codes(const TensorF& gray, const LbpParams& params = {});

struct ComplexBand {
  TensorD re;  // [C,h,w]
  TensorD im;
};

/// Dual-tree complex wavelet pyramid. highpass[j][o] holds orientation o of
/// level j+1; orientations are ordered 15, 45, 75, 105, 135, 165 degrees.
struct WaveletPyramid {
  TensorD lowpass;  // [C, H/2^(J-1), W/2^(J-1)]
  std::vector<std::array<ComplexBand, 6>> highpass;

  std::size_t levels() const noexcept { return highpass.size(); }
};

/// Forward DTCWT: near-symmetric 13/19-tap biorthogonal filters at level 1,
/// 14-tap Q-shift filters at deeper levels. Sizes that do not divide evenly
/// are padded by edge replication, level by level.
WaveletPyramid dtcwt_forward(const TensorD& img, std::size_t levels);

/// [7C, H/2, W/2]: the six level-1 magnitudes per channel followed by that
/// channel's lowpass resized bilinearly to the same grid. Channel order is
/// channel-major: c*7 + o, with o = 6 the lowpass.
TensorF dtcwt_feature_map(const WaveletPyramid& pyr);

/// Convenience: forward with J = 2 then the feature map.
TensorF dtcwt_features(const TensorF& img);

/// Real, critically sampled separable DWT with the same level-1 filters at
/// every level. highpass[j] holds the LH, HL, HH bands of level j+1.
struct RealPyramid {
  TensorD lowpass;
  std::vector<std::array<TensorD, 3>> highpass;
};

RealPyramid dwt_forward(const TensorD& img, std::size_t levels);

/// Filter tables, exposed for tests.
namespace filters {
std::span<const double> h0o();
std::span<const double> h1o();
std::span<const double> h0a();
std::span<const double> h0b();
std::span<const double> h1a();
std::span<const double> h1b();
}  // namespace filters

/// Operator registry used by pathways.
enum class Operator { kIdentity, kLbp, kRg, kDtcwt };

Operator operator_from_name(const std::string& name);
std::string operator_name(Operator op);

/// Output channels for a 3-channel input.
std::size_t operator_channels(Operator op);

/// Spatial downsampling factor of the operator output.
std::size_t operator_scale(Operator op);

/// Apply to an RGB image [3,H,W].
TensorF apply_operator(Operator op, const TensorF& rgb);

}  // namespace iclp::ops
