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

#include "iclp/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "iclp/image.hpp"

namespace iclp::ops {

// ---- rg / luminance -----------------------------------------------------------

namespace {

void require_rgb(const TensorF& img, const char* what) {
  if (img.rank() != 3 || img.dim(0) != 3) {
    throw ConfigError(std::string(what) + ": expected [3,H,W], got " + shape_str(img.shape()));
  }
}

}  // namespace

TensorF rg_normalize(const TensorF& rgb) {
  require_rgb(rgb, "rg_normalize");
  const std::size_t n = rgb.dim(1) * rgb.dim(2);
  TensorF out(Shape{2, rgb.dim(1), rgb.dim(2)});
  const float* r = rgb.data();
  const float* g = r + n;
  const float* b = g + n;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = static_cast<double>(r[i]) + g[i] + b[i];
    if (s < 1e-8) {
      out[i] = out[n + i] = static_cast<float>(1.0 / 3.0);
    } else {
      out[i] = static_cast<float>(r[i] / s);
      out[n + i] = static_cast<float>(g[i] / s);
    }
  }
  return out;
}

TensorF luminance(const TensorF& rgb) {
  require_rgb(rgb, "luminance");
  const std::size_t n = rgb.dim(1) * rgb.dim(2);
  TensorF out(Shape{1, rgb.dim(1), rgb.dim(2)});
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = static_cast<float>(0.299 * rgb[i] + 0.587 * rgb[n + i] + 0.114 * rgb[2 * n + i]);
  }
  return out;
}

// ---- LBP ----------------------------------------------------------------------

void LbpParams::validate() const {
  if (points < 4 || points > 32) throw ConfigError("lbp: points must be in [4, 32], got " + std::to_string(points));
  if (radius < 1) throw ConfigError("lbp: radius must be >= 1");
}

std::uint32_t lbp_ring_code(std::span<const double> ring, double center) {
  std::uint32_t code = 0;
  for (std::size_t i = 0; i < ring.size(); ++i) {
    if (ring[i] >= center) code |= 1u << i;
  }
  return code;
}

std::uint32_t lbp_min_rotation(std::uint32_t code, std::size_t points) {
  const std::uint64_t mask = (std::uint64_t{1} << points) - 1;
  std::uint64_t c = code & mask;
  std::uint64_t best = c;
  for (std::size_t k = 1; k < points; ++k) {
    c = ((c >> 1) | (c << (points - 1))) & mask;
    best = std::min(best, c);
  }
  return static_cast<std::uint32_t>(best);
}

namespace {

struct RingSampler {
  // Per neighbour: either an integer offset or bilinear weights.
  struct Tap {
    double dy, dx;
  };
  std::vector<Tap> taps;
  bool integer = false;

  explicit RingSampler(const LbpParams& p) {
    const double r = static_cast<double>(p.radius);
    if (p.points == 8) {
      integer = true;
      static constexpr int kDy[8] = {0, -1, -1, -1, 0, 1, 1, 1};
      static constexpr int kDx[8] = {1, 1, 0, -1, -1, -1, 0, 1};
      for (int i = 0; i < 8; ++i) taps.push_back({kDy[i] * r, kDx[i] * r});
      return;
    }
    for (std::size_t i = 0; i < p.points; ++i) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(p.points);
      double dy = -r * std::sin(a), dx = r * std::cos(a);
      if (std::abs(dy - std::round(dy)) < 1e-9) dy = std::round(dy);
      if (std::abs(dx - std::round(dx)) < 1e-9) dx = std::round(dx);
      taps.push_back({dy, dx});
    }
  }

  double sample(const float* img, std::size_t w, std::size_t y, std::size_t x, const Tap& t) const {
    const double sy = static_cast<double>(y) + t.dy, sx = static_cast<double>(x) + t.dx;
    if (integer) return img[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)];
    const double fy0 = std::floor(sy), fx0 = std::floor(sx);
    const double fy = sy - fy0, fx = sx - fx0;
    const auto y0 = static_cast<std::size_t>(fy0), x0 = static_cast<std::size_t>(fx0);
    const std::size_t y1 = fy > 0 ? y0 + 1 : y0, x1 = fx > 0 ? x0 + 1 : x0;
    const double top = (1 - fx) * img[y0 * w + x0] + fx * img[y0 * w + x1];
    const double bot = (1 - fx) * img[y1 * w + x0] + fx * img[y1 * w + x1];
    return (1 - fy) * top + fy * bot;
  }
};

void require_gray(const TensorF& gray, const LbpParams& p) {
  if (gray.rank() != 3 || gray.dim(0) != 1) {
    throw ConfigError("lbp: expected a single-channel [1,H,W] image, got " + shape_str(gray.shape()) +
                      " (convert with luminance first)");
  }
  p.validate();
  if (gray.dim(1) <= 2 * p.radius || gray.dim(2) <= 2 * p.radius) {
    throw ConfigError("lbp: image " + shape_str(gray.shape()) + " too small for radius " + std::to_string(p.radius));
  }
}

template <typename F>
void for_each_interior_code(const TensorF& gray, const LbpParams& p, F&& emit) {
  const RingSampler sampler(p);
  const std::size_t h = gray.dim(1), w = gray.dim(2), r = p.radius;
  std::vector<double> ring(p.points);
  for (std::size_t y = r; y < h - r; ++y) {
    for (std::size_t x = r; x < w - r; ++x) {
      for (std::size_t i = 0; i < p.points; ++i) ring[i] = sampler.sample(gray.data(), w, y, x, sampler.taps[i]);
      std::uint32_t code = lbp_ring_code(ring, gray[y * w + x]);
      if (p.rotation_invariant) code = lbp_min_rotation(code, p.points);
      emit(y, x, code);
    }
  }
}

}  // namespace

std::vector<std::uint32_t> lbp_interior_codes(const TensorF& gray, const LbpParams& params) {
  require_gray(gray, params);
  std::vector<std::uint32_t> codes;
  for_each_interior_code(gray, params, [&](std::size_t, std::size_t, std::uint32_t c) { codes.push_back(c); });
  return codes;
}

TensorF lbp(const TensorF& gray, const LbpParams& params) {
  require_gray(gray, params);
  const std::size_t h = gray.dim(1), w = gray.dim(2), r = params.radius;
  const double norm = static_cast<double>((std::uint64_t{1} << params.points) - 1);
  TensorF out(Shape{1, h, w});
  for_each_interior_code(gray, params, [&](std::size_t y, std::size_t x, std::uint32_t c) {
    out[y * w + x] = static_cast<float>(c / norm);
  });
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t cy = std::clamp(y, r, h - r - 1), cx = std::clamp(x, r, w - r - 1);
      if (cy != y || cx != x) out[y * w + x] = out[cy * w + cx];
    }
  }
  return out;
}

// ---- DTCWT ----------------------------------------------------------------------

namespace filters {

// Kingsbury's near-symmetric 13/19-tap biorthogonal pair ("near_sym_b") and
// 14-tap Q-shift pair ("qshift_b"), as distributed with the reference DTCWT
// toolboxes by N. Kingsbury (Cambridge) and the dtcwt Python package.
namespace {
constexpr double kH0o[13] = {-0.0017578125, 0.0,          0.022265625, -0.046875,    -0.0482421875,
                             0.296875,      0.55546875,   0.296875,    -0.0482421875, -0.046875,
                             0.022265625,   0.0,          -0.0017578125};
constexpr double kH1o[19] = {-7.0626395089285707e-05, 0.0,
                             1.3419015066964285e-03,  -1.8833705357142855e-03,
                             -7.1568080357142846e-03, 2.3856026785714284e-02,
                             5.5643136160714278e-02,  -5.1688058035714281e-02,
                             -2.9975760323660716e-01, 5.5943080357142860e-01,
                             -2.9975760323660716e-01, -5.1688058035714281e-02,
                             5.5643136160714278e-02,  2.3856026785714284e-02,
                             -7.1568080357142846e-03, -1.8833705357142855e-03,
                             1.3419015066964285e-03,  0.0,
                             -7.0626395089285707e-05};
constexpr double kH0a[14] = {0.00325314276365318, -0.00388321199915849, 0.03466034684485349, -0.03887280126882779,
                             -0.11720388769911527, 0.27529538466888204, 0.7561456438925225,  0.5688104207121227,
                             0.011866092033797,    -0.1067118046866654, 0.0238253847949203,  0.01702522388155399,
                             -0.00543947593727412, -0.00455689562847549};
constexpr double kH0b[14] = {-0.00455689562847549, -0.00543947593727412, 0.01702522388155399, 0.0238253847949203,
                             -0.1067118046866654,  0.011866092033797,    0.5688104207121227,  0.7561456438925225,
                             0.27529538466888204,  -0.11720388769911527, -0.03887280126882779, 0.03466034684485349,
                             -0.00388321199915849, 0.00325314276365318};
constexpr double kH1a[14] = {-0.00455689562847549, 0.00543947593727412, 0.01702522388155399,  -0.0238253847949203,
                             -0.1067118046866654,  -0.011866092033797,  0.5688104207121227,   -0.7561456438925225,
                             0.27529538466888204,  0.11720388769911527, -0.03887280126882779, -0.03466034684485349,
                             -0.00388321199915849, -0.00325314276365318};
constexpr double kH1b[14] = {-0.00325314276365318, -0.00388321199915849, -0.03466034684485349, -0.03887280126882779,
                             0.11720388769911527,  0.27529538466888204,  -0.7561456438925225,  0.5688104207121227,
                             -0.011866092033797,   -0.1067118046866654,  -0.0238253847949203,  0.01702522388155399,
                             0.00543947593727412,  -0.00455689562847549};

// The published Q-shift highpass pair leaks about 9.3e-7 of DC. Removing the
// tap mean (6.7e-8 per tap) makes the DC gain exactly zero.
std::array<double, 14> zero_dc(const double (&h)[14]) {
  double mean = 0;
  for (double v : h) mean += v;
  mean /= 14.0;
  std::array<double, 14> out{};
  for (std::size_t i = 0; i < 14; ++i) out[i] = h[i] - mean;
  return out;
}

const std::array<double, 14> kH1aZ = zero_dc(kH1a);
const std::array<double, 14> kH1bZ = zero_dc(kH1b);
}  // namespace

std::span<const double> h0o() { return kH0o; }
std::span<const double> h1o() { return kH1o; }
std::span<const double> h0a() { return kH0a; }
std::span<const double> h0b() { return kH0b; }
std::span<const double> h1a() { return kH1aZ; }
std::span<const double> h1b() { return kH1bZ; }

}  // namespace filters

namespace {

// 2-D plane, row-major [rows, cols].
struct Plane {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;

  Plane() = default;
  Plane(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

Plane transpose(const Plane& p) {
  Plane t(p.cols, p.rows);
  for (std::size_t r = 0; r < p.rows; ++r) {
    for (std::size_t c = 0; c < p.cols; ++c) t(c, r) = p(r, c);
  }
  return t;
}

// Symmetric extension with repeated end samples.
std::size_t reflect_index(long x, std::size_t n) {
  const long period = 2 * static_cast<long>(n);
  long m = x % period;
  if (m < 0) m += period;
  if (m >= static_cast<long>(n)) m = period - 1 - m;
  return static_cast<std::size_t>(m);
}

// Valid convolution down the columns of the rows listed in `idx`.
void column_convolve_add(const Plane& x, const std::vector<std::size_t>& idx, std::span<const double> h, Plane& out,
                         std::size_t out_row0, std::size_t out_step) {
  const std::size_t m = h.size();
  const std::size_t n_out = idx.size() - m + 1;
  for (std::size_t i = 0; i < n_out; ++i) {
    double* dst = &out.v[(out_row0 + i * out_step) * out.cols];
    for (std::size_t k = 0; k < m; ++k) {
      const double hk = h[k];
      if (hk == 0.0) continue;
      const double* src = &x.v[idx[i + m - 1 - k] * x.cols];
      for (std::size_t c = 0; c < x.cols; ++c) dst[c] += hk * src[c];
    }
  }
}

// Filter the columns with an odd-length filter, output the same size.
Plane colfilter(const Plane& x, std::span<const double> h) {
  const long m2 = static_cast<long>(h.size() / 2);
  std::vector<std::size_t> idx;
  for (long i = -m2; i < static_cast<long>(x.rows) + m2; ++i) idx.push_back(reflect_index(i, x.rows));
  Plane y(idx.size() - h.size() + 1, x.cols);
  column_convolve_add(x, idx, h, y, 0, 1);
  return y;
}

// Filter the columns with the tree-a/tree-b pair and decimate by two.
Plane coldfilt(const Plane& x, std::span<const double> ha, std::span<const double> hb) {
  const std::size_t r = x.rows;
  if (r % 4 != 0) throw ConfigError("dtcwt: row count must be a multiple of 4");
  const long m = static_cast<long>(ha.size());
  std::vector<std::size_t> xe;
  for (long i = -m; i < static_cast<long>(r) + m; ++i) xe.push_back(reflect_index(i, r));
  std::vector<double> hao, hae, hbo, hbe;
  for (std::size_t i = 0; i < ha.size(); ++i) {
    (i % 2 == 0 ? hao : hae).push_back(ha[i]);
    (i % 2 == 0 ? hbo : hbe).push_back(hb[i]);
  }
  std::vector<long> t;
  for (long i = 5; i < static_cast<long>(r) + 2 * m - 2; i += 4) t.push_back(i);
  auto pick = [&](long shift) {
    std::vector<std::size_t> out;
    for (long ti : t) out.push_back(xe[static_cast<std::size_t>(ti + shift)]);
    return out;
  };
  double dot = 0;
  for (std::size_t i = 0; i < ha.size(); ++i) dot += ha[i] * hb[i];
  const std::size_t s1 = dot > 0 ? 0 : 1, s2 = 1 - s1;
  Plane y(r / 2, x.cols);
  column_convolve_add(x, pick(-1), hao, y, s1, 2);
  column_convolve_add(x, pick(-3), hae, y, s1, 2);
  column_convolve_add(x, pick(0), hbo, y, s2, 2);
  column_convolve_add(x, pick(-2), hbe, y, s2, 2);
  return y;
}

// Quads to the two complex subbands: p = (a + jb)/sqrt2, q = (d - jc)/sqrt2;
// z = (p - q, p + q).
void q2c(const Plane& y, ComplexBand& z0, ComplexBand& z1, std::size_t ch) {
  const double s = std::sqrt(0.5);
  const std::size_t h = y.rows / 2, w = y.cols / 2;
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double a = y(2 * i, 2 * j), b = y(2 * i, 2 * j + 1);
      const double c = y(2 * i + 1, 2 * j), d = y(2 * i + 1, 2 * j + 1);
      const double pr = a * s, pi = b * s, qr = d * s, qi = -c * s;
      z0.re.at(ch, i, j) = pr - qr;
      z0.im.at(ch, i, j) = pi - qi;
      z1.re.at(ch, i, j) = pr + qr;
      z1.im.at(ch, i, j) = pi + qi;
    }
  }
}

void alloc_level(std::array<ComplexBand, 6>& bands, std::size_t c, std::size_t h, std::size_t w) {
  for (auto& b : bands) {
    b.re = TensorD(Shape{c, h, w});
    b.im = TensorD(Shape{c, h, w});
  }
}

Plane channel_plane(const TensorD& img, std::size_t ch) {
  Plane p(img.dim(1), img.dim(2));
  std::copy(img.data() + ch * p.v.size(), img.data() + (ch + 1) * p.v.size(), p.v.begin());
  return p;
}

Plane pad_edges(const Plane& p, bool rows, bool cols) {
  const std::size_t r = p.rows + (rows ? 2 : 0), c = p.cols + (cols ? 2 : 0);
  Plane out(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t si = rows ? std::clamp<long>(static_cast<long>(i) - 1, 0, static_cast<long>(p.rows) - 1) : i;
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t sj = cols ? std::clamp<long>(static_cast<long>(j) - 1, 0, static_cast<long>(p.cols) - 1) : j;
      out(i, j) = p(si, sj);
    }
  }
  return out;
}

void check_levels(const TensorD& img, std::size_t levels, const char* what) {
  if (img.rank() != 3) throw ConfigError(std::string(what) + ": expected [C,H,W], got " + shape_str(img.shape()));
  if (levels < 1) throw ConfigError(std::string(what) + ": levels must be >= 1");
  if (levels > 16 || (std::size_t{1} << levels) > std::min(img.dim(1), img.dim(2))) {
    throw ConfigError(std::string(what) + ": " + std::to_string(levels) + " levels too many for image " +
                      shape_str(img.shape()));
  }
}

}  // namespace

WaveletPyramid dtcwt_forward(const TensorD& img, std::size_t levels) {
  check_levels(img, levels, "dtcwt");
  const std::size_t C = img.dim(0);
  WaveletPyramid pyr;
  pyr.highpass.resize(levels);
  for (std::size_t ch = 0; ch < C; ++ch) {
    Plane x = channel_plane(img, ch);
    if (x.rows % 2 != 0 || x.cols % 2 != 0) {
      // Duplicate the last row / column to reach an even size.
      Plane e(x.rows + x.rows % 2, x.cols + x.cols % 2);
      for (std::size_t i = 0; i < e.rows; ++i) {
        for (std::size_t j = 0; j < e.cols; ++j) e(i, j) = x(std::min(i, x.rows - 1), std::min(j, x.cols - 1));
      }
      x = std::move(e);
    }
    const Plane lo = transpose(colfilter(x, filters::h0o()));
    const Plane hi = transpose(colfilter(x, filters::h1o()));
    Plane lolo = transpose(colfilter(lo, filters::h0o()));
    auto& l1 = pyr.highpass[0];
    if (ch == 0) alloc_level(l1, C, lolo.rows / 2, lolo.cols / 2);
    q2c(transpose(colfilter(hi, filters::h0o())), l1[0], l1[5], ch);
    q2c(transpose(colfilter(lo, filters::h1o())), l1[2], l1[3], ch);
    q2c(transpose(colfilter(hi, filters::h1o())), l1[1], l1[4], ch);
    for (std::size_t level = 1; level < levels; ++level) {
      if (lolo.rows % 4 != 0 || lolo.cols % 4 != 0) lolo = pad_edges(lolo, lolo.rows % 4 != 0, lolo.cols % 4 != 0);
      const Plane lo2 = transpose(coldfilt(lolo, filters::h0b(), filters::h0a()));
      const Plane hi2 = transpose(coldfilt(lolo, filters::h1b(), filters::h1a()));
      lolo = transpose(coldfilt(lo2, filters::h0b(), filters::h0a()));
      auto& lv = pyr.highpass[level];
      if (ch == 0) alloc_level(lv, C, lolo.rows / 2, lolo.cols / 2);
      q2c(transpose(coldfilt(hi2, filters::h0b(), filters::h0a())), lv[0], lv[5], ch);
      q2c(transpose(coldfilt(lo2, filters::h1b(), filters::h1a())), lv[2], lv[3], ch);
      q2c(transpose(coldfilt(hi2, filters::h1b(), filters::h1a())), lv[1], lv[4], ch);
    }
    if (ch == 0) pyr.lowpass = TensorD(Shape{C, lolo.rows, lolo.cols});
    std::copy(lolo.v.begin(), lolo.v.end(), pyr.lowpass.data() + ch * lolo.v.size());
  }
  return pyr;
}

TensorF dtcwt_feature_map(const WaveletPyramid& pyr) {
  if (pyr.levels() < 1) throw ConfigError("dtcwt_feature_map: pyramid has no levels");
  const auto& l1 = pyr.highpass[0];
  const std::size_t C = l1[0].re.dim(0), h = l1[0].re.dim(1), w = l1[0].re.dim(2);
  const TensorD low = image::resize_bilinear(pyr.lowpass, h, w);
  TensorF out(Shape{7 * C, h, w});
  const std::size_t n = h * w;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t o = 0; o < 6; ++o) {
      const double* re = l1[o].re.data() + c * n;
      const double* im = l1[o].im.data() + c * n;
      float* dst = out.data() + (c * 7 + o) * n;
      for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<float>(std::sqrt(re[i] * re[i] + im[i] * im[i]));
    }
    const double* lp = low.data() + c * n;
    float* dst = out.data() + (c * 7 + 6) * n;
    for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<float>(lp[i]);
  }
  return out;
}

TensorF dtcwt_features(const TensorF& img) { return dtcwt_feature_map(dtcwt_forward(img.cast<double>(), 2)); }

RealPyramid dwt_forward(const TensorD& img, std::size_t levels) {
  check_levels(img, levels, "dwt");
  const std::size_t C = img.dim(0);
  RealPyramid pyr;
  pyr.highpass.resize(levels);
  std::vector<Plane> cur;
  for (std::size_t ch = 0; ch < C; ++ch) cur.push_back(channel_plane(img, ch));
  auto decimate_rows = [](const Plane& p) {
    Plane d((p.rows + 1) / 2, p.cols);
    for (std::size_t i = 0; i < d.rows; ++i) std::copy_n(&p.v[2 * i * p.cols], p.cols, &d.v[i * p.cols]);
    return d;
  };
  for (std::size_t level = 0; level < levels; ++level) {
    for (std::size_t ch = 0; ch < C; ++ch) {
      const Plane& x = cur[ch];
      const Plane lo = transpose(decimate_rows(colfilter(x, filters::h0o())));
      const Plane hi = transpose(decimate_rows(colfilter(x, filters::h1o())));
      const Plane ll = transpose(decimate_rows(colfilter(lo, filters::h0o())));
      const Plane bands[3] = {transpose(decimate_rows(colfilter(lo, filters::h1o()))),
                              transpose(decimate_rows(colfilter(hi, filters::h0o()))),
                              transpose(decimate_rows(colfilter(hi, filters::h1o())))};
      for (std::size_t b = 0; b < 3; ++b) {
        TensorD& dst = pyr.highpass[level][b];
        if (ch == 0) dst = TensorD(Shape{C, bands[b].rows, bands[b].cols});
        std::copy(bands[b].v.begin(), bands[b].v.end(), dst.data() + ch * bands[b].v.size());
      }
      cur[ch] = ll;
    }
  }
  pyr.lowpass = TensorD(Shape{C, cur[0].rows, cur[0].cols});
  for (std::size_t ch = 0; ch < C; ++ch) std::copy(cur[ch].v.begin(), cur[ch].v.end(), pyr.lowpass.data() + ch * cur[ch].v.size());
  return pyr;
}

// ---- registry -------------------------------------------------------------------

Operator operator_from_name(const std::string& name) {
  if (name == "plain" || name == "identity") return Operator::kIdentity;
  if (name == "lbp") return Operator::kLbp;
  if (name == "rgnorm" || name == "rg") return Operator::kRg;
  if (name == "dtcwt") return Operator::kDtcwt;
  throw ConfigError("unknown operator '" + name + "' (expected plain, lbp, rgnorm or dtcwt)");
}

std::string operator_name(Operator op) {
  switch (op) {
    case Operator::kIdentity: return "plain";
    case Operator::kLbp: return "lbp";
    case Operator::kRg: return "rgnorm";
    case Operator::kDtcwt: return "dtcwt";
  }
  return "?";
}

std::size_t operator_channels(Operator op) {
  switch (op) {
    case Operator::kIdentity: return 3;
    case Operator::kLbp: return 1;
    case Operator::kRg: return 2;
    case Operator::kDtcwt: return 21;
  }
  return 0;
}

std::size_t operator_scale(Operator op) { return op == Operator::kDtcwt ? 2 : 1; }

TensorF apply_operator(Operator op, const TensorF& rgb) {
  require_rgb(rgb, "apply_operator");
  switch (op) {
    case Operator::kIdentity: return rgb;
    case Operator::kLbp: return lbp(luminance(rgb));
    case Operator::kRg: return rg_normalize(rgb);
    case Operator::kDtcwt: return dtcwt_features(rgb);
  }
  throw ConfigError("unknown operator");
}

}  // namespace iclp::ops
