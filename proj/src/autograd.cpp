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

#include "iclp/autograd.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace iclp::nn {

// ---- Tape --------------------------------------------------------------------

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  Node node;
  node.value = std::make_shared<const Tensor<T>>(std::move(value));
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::boundary(Var<T> v) {
  if (!owns(v)) throw ConfigError("boundary: variable does not belong to this tape");
  Node node;
  node.value = nodes_[v.id].value;
  node.requires_grad = false;
  node.boundary = true;
  nodes_.push_back(std::move(node));
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::span<const Var<T>> inputs, Backward backward) {
  bool any = false;
  for (const auto& in : inputs) {
    if (!owns(in)) throw ConfigError("op input does not belong to this tape");
    any = any || nodes_[in.id].requires_grad;
  }
  Node node;
  node.value = std::make_shared<const Tensor<T>>(std::move(value));
  node.requires_grad = any;
  if (any) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (!owns(loss)) throw ConfigError("backward: loss is not on this tape");
  if (nodes_[loss.id].value->size() != 1) {
    throw ConfigError("backward: loss must be a scalar, got shape " + shape_str(nodes_[loss.id].value->shape()));
  }
  require_finite(*nodes_[loss.id].value, "loss");
  if (!nodes_[loss.id].requires_grad) return;
  grad_accum(loss)[0] += T{1};
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.backward) continue;
    // Closures only touch grads of earlier nodes; nodes_ is not resized here.
    node.backward(*this, node.grad);
  }
}

template <typename T>
const Tensor<T>* Tape<T>::grad(Var<T> v) const {
  const Node& node = nodes_.at(v.id);
  return node.has_grad ? &node.grad : nullptr;
}

template <typename T>
Tensor<T> Tape<T>::grad_or_zero(Var<T> v) const {
  const Node& node = nodes_.at(v.id);
  return node.has_grad ? node.grad : Tensor<T>(node.value->shape());
}

template <typename T>
Tensor<T>& Tape<T>::grad_accum(Var<T> v) {
  Node& node = nodes_.at(v.id);
  if (!node.has_grad) {
    node.grad = Tensor<T>(node.value->shape());
    node.has_grad = true;
  }
  return node.grad;
}

// ---- gemm --------------------------------------------------------------------

template <>
void gemm<float>(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, float alpha, const float* a,
                 std::size_t lda, const float* b, std::size_t ldb, float beta, float* c, std::size_t ldc) {
  if (m == 0 || n == 0) return;
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb), beta,
              c, static_cast<int>(ldc));
}

template <>
void gemm<double>(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, double alpha, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double beta, double* c, std::size_t ldc) {
  if (m == 0 || n == 0) return;
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb), beta,
              c, static_cast<int>(ldc));
}

namespace {

template <typename T>
void require_same_tape(Var<T> a, Var<T> b) {
  if (a.tape != b.tape) throw ConfigError("variables from different tapes");
}

struct ConvGeometry {
  std::size_t n, c, h, w, o, k, stride, pad, ho, wo;
  std::size_t kdim() const { return c * k * k; }
  std::size_t pixels() const { return ho * wo; }
};

template <typename T>
ConvGeometry conv_geometry(const Shape& in, const Shape& wt, const Shape& bias, std::size_t stride,
                           std::size_t padding) {
  if (in.size() != 3 && in.size() != 4) {
    throw ConfigError("conv2d: input must be [C,H,W] or [N,C,H,W], got " + shape_str(in));
  }
  const bool batched = in.size() == 4;
  ConvGeometry g{};
  g.n = batched ? in[0] : 1;
  g.c = in[batched ? 1 : 0];
  g.h = in[batched ? 2 : 1];
  g.w = in[batched ? 3 : 2];
  if (wt.size() != 4 || wt[2] != wt[3]) throw ConfigError("conv2d: weight must be [O,C,k,k], got " + shape_str(wt));
  if (wt[1] != g.c) {
    throw ConfigError("conv2d: input has " + std::to_string(g.c) + " channels but weight expects " +
                      std::to_string(wt[1]));
  }
  g.o = wt[0];
  g.k = wt[2];
  if (bias.size() != 1 || bias[0] != g.o) {
    throw ConfigError("conv2d: bias must be [" + std::to_string(g.o) + "], got " + shape_str(bias));
  }
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (g.k > g.h + 2 * padding || g.k > g.w + 2 * padding) {
    throw ConfigError("conv2d: kernel " + std::to_string(g.k) + " exceeds padded input " + std::to_string(g.h) + "x" +
                      std::to_string(g.w) + " (padding " + std::to_string(padding) + ")");
  }
  g.stride = stride;
  g.pad = padding;
  g.ho = (g.h + 2 * padding - g.k) / stride + 1;
  g.wo = (g.w + 2 * padding - g.k) / stride + 1;
  return g;
}

// Valid output column range [lo, hi) for kernel offset kx: the input index
// ox*stride + kx - pad must fall inside [0, w).
inline void valid_range(const ConvGeometry& g, std::size_t kx, std::size_t& lo, std::size_t& hi) {
  const long pad = static_cast<long>(g.pad), st = static_cast<long>(g.stride), k = static_cast<long>(kx);
  long l = pad - k > 0 ? (pad - k + st - 1) / st : 0;
  long h = (static_cast<long>(g.w) + pad - k + st - 1) / st;
  h = std::clamp(h, 0L, static_cast<long>(g.wo));
  l = std::clamp(l, 0L, h);
  lo = static_cast<std::size_t>(l);
  hi = static_cast<std::size_t>(h);
}

// cols[K, nc*P]; column (s*P + p) belongs to sample n0+s.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, std::size_t n0, std::size_t nc, T* cols) {
  const std::size_t P = g.pixels();
  const std::size_t ld = nc * P;
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        std::size_t lo, hi;
        valid_range(g, kx, lo, hi);
        const long off = static_cast<long>(kx) - static_cast<long>(g.pad);
        T* row = cols + ((ch * g.k + ky) * g.k + kx) * ld;
        for (std::size_t s = 0; s < nc; ++s) {
          const T* plane = x + ((n0 + s) * g.c + ch) * g.h * g.w;
          T* dst = row + s * P;
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
            T* d = dst + oy * g.wo;
            if (iy < 0 || iy >= static_cast<long>(g.h)) {
              std::fill(d, d + g.wo, T{0});
              continue;
            }
            const T* src = plane + static_cast<std::size_t>(iy) * g.w;
            std::fill(d, d + lo, T{0});
            if (g.stride == 1) {
              std::copy(src + (static_cast<long>(lo) + off), src + (static_cast<long>(hi) + off), d + lo);
            } else {
              for (std::size_t ox = lo; ox < hi; ++ox) d[ox] = src[static_cast<long>(ox * g.stride) + off];
            }
            std::fill(d + hi, d + g.wo, T{0});
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, std::size_t n0, std::size_t nc, T* dx) {
  const std::size_t P = g.pixels();
  const std::size_t ld = nc * P;
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        std::size_t lo, hi;
        valid_range(g, kx, lo, hi);
        const long off = static_cast<long>(kx) - static_cast<long>(g.pad);
        const T* row = cols + ((ch * g.k + ky) * g.k + kx) * ld;
        for (std::size_t s = 0; s < nc; ++s) {
          T* plane = dx + ((n0 + s) * g.c + ch) * g.h * g.w;
          const T* src = row + s * P;
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            T* d = plane + static_cast<std::size_t>(iy) * g.w;
            const T* sp = src + oy * g.wo;
            for (std::size_t ox = lo; ox < hi; ++ox) d[static_cast<long>(ox * g.stride) + off] += sp[ox];
          }
        }
      }
    }
  }
}

template <typename T>
std::unique_ptr<T[]> scratch(std::size_t n) {
  return std::unique_ptr<T[]>(new T[n]);
}

std::size_t conv_chunk(const ConvGeometry& g) {
  constexpr std::size_t kMaxColumns = 1u << 10;
  return std::clamp<std::size_t>(kMaxColumns / std::max<std::size_t>(g.pixels(), 1), 1, g.n);
}

template <typename T>
Tensor<T> conv_forward_impl(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, const ConvGeometry& g,
                            bool batched) {
  const std::size_t P = g.pixels();
  const std::size_t K = g.kdim();
  Shape out_shape = batched ? Shape{g.n, g.o, g.ho, g.wo} : Shape{g.o, g.ho, g.wo};
  Tensor<T> out(out_shape);
  const std::size_t chunk = conv_chunk(g);
  auto cols = scratch<T>(K * chunk * P);
  auto res = scratch<T>(g.o * chunk * P);
  for (std::size_t n0 = 0; n0 < g.n; n0 += chunk) {
    const std::size_t nc = std::min(chunk, g.n - n0);
    const std::size_t cols_n = nc * P;
    T* col_ptr = cols.get();
    if (g.k == 1 && g.stride == 1 && g.pad == 0 && nc == 1) {
      col_ptr = const_cast<T*>(x.data() + n0 * g.c * g.h * g.w);
    } else {
      im2col(x.data(), g, n0, nc, cols.get());
    }
    gemm<T>(false, false, g.o, cols_n, K, T{1}, w.data(), K, col_ptr, cols_n, T{0}, res.get(), cols_n);
    for (std::size_t s = 0; s < nc; ++s) {
      for (std::size_t o = 0; o < g.o; ++o) {
        const T* src = res.get() + o * cols_n + s * P;
        T* dst = out.data() + ((n0 + s) * g.o + o) * P;
        const T bo = b[o];
        for (std::size_t p = 0; p < P; ++p) dst[p] = src[p] + bo;
      }
    }
  }
  return out;
}

}  // namespace

// ---- ops -----------------------------------------------------------------------

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride,
                         std::size_t padding) {
  const ConvGeometry g = conv_geometry<T>(input.shape(), weight.shape(), bias.shape(), stride, padding);
  return conv_forward_impl(input, weight, bias, g, input.rank() == 4);
}

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, std::size_t stride, std::size_t padding) {
  require_same_tape(input, weight);
  require_same_tape(input, bias);
  Tape<T>& tape = *input.tape;
  const ConvGeometry g = conv_geometry<T>(input.shape(), weight.shape(), bias.shape(), stride, padding);
  const bool batched = input.value().rank() == 4;
  Tensor<T> out = conv_forward_impl(input.value(), weight.value(), bias.value(), g, batched);
  const Var<T> ins[] = {input, weight, bias};
  return tape.record(std::move(out), ins, [input, weight, bias, g](Tape<T>& t, const Tensor<T>& gout) {
    const std::size_t P = g.pixels();
    const std::size_t K = g.kdim();
    const std::size_t chunk = conv_chunk(g);
    const bool need_x = t.requires_grad(input);
    const bool need_w = t.requires_grad(weight);
    const bool need_b = t.requires_grad(bias);
    const Tensor<T>& x = t.value(input);
    const Tensor<T>& w = t.value(weight);
    T* dx = need_x ? t.grad_accum(input).data() : nullptr;
    T* dw = need_w ? t.grad_accum(weight).data() : nullptr;
    T* db = need_b ? t.grad_accum(bias).data() : nullptr;
    auto cols = scratch<T>(K * chunk * P);
    auto dmat = scratch<T>(g.o * chunk * P);
    for (std::size_t n0 = 0; n0 < g.n; n0 += chunk) {
      const std::size_t nc = std::min(chunk, g.n - n0);
      const std::size_t cols_n = nc * P;
      for (std::size_t s = 0; s < nc; ++s) {
        for (std::size_t o = 0; o < g.o; ++o) {
          const T* src = gout.data() + ((n0 + s) * g.o + o) * P;
          std::copy(src, src + P, dmat.get() + o * cols_n + s * P);
        }
      }
      if (db) {
        for (std::size_t o = 0; o < g.o; ++o) {
          T acc{0};
          const T* row = dmat.get() + o * cols_n;
          for (std::size_t j = 0; j < cols_n; ++j) acc += row[j];
          db[o] += acc;
        }
      }
      if (dw) {
        im2col(x.data(), g, n0, nc, cols.get());
        gemm<T>(false, true, g.o, K, cols_n, T{1}, dmat.get(), cols_n, cols.get(), cols_n, T{1}, dw, K);
      }
      if (dx) {
        gemm<T>(true, false, K, cols_n, g.o, T{1}, w.data(), K, dmat.get(), cols_n, T{0}, cols.get(), cols_n);
        col2im_add(cols.get(), g, n0, nc, dx);
      }
    }
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out) v = v > T{0} ? v : T{0};
  const Var<T> ins[] = {x};
  return x.tape->record(std::move(out), ins, [x](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& xv = t.value(x);
    Tensor<T>& dx = t.grad_accum(x);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      if (xv[i] > T{0}) dx[i] += g[i];
    }
  });
}

template <typename T>
Var<T> max_pool2d(Var<T> x, std::size_t kernel, std::size_t stride) {
  const Shape& s = x.shape();
  if (s.size() != 3 && s.size() != 4) throw ConfigError("max_pool2d: expected [C,H,W] or [N,C,H,W], got " + shape_str(s));
  const bool batched = s.size() == 4;
  const std::size_t planes = batched ? s[0] * s[1] : s[0];
  const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
  if (h == 0 || w == 0) throw ConfigError("max_pool2d: empty spatial extent");
  if (kernel < 1 || stride < 1 || kernel > h || kernel > w) {
    throw ConfigError("max_pool2d: kernel " + std::to_string(kernel) + " invalid for " + shape_str(s));
  }
  const std::size_t ho = (h - kernel) / stride + 1, wo = (w - kernel) / stride + 1;
  Shape os = s;
  os[os.size() - 2] = ho;
  os[os.size() - 1] = wo;
  Tensor<T> out(os);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const Tensor<T>& xv = x.value();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = xv.data() + p * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = (oy * stride) * w + ox * stride;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const std::size_t idx = (oy * stride + ky) * w + ox * stride + kx;
            if (src[idx] > src[best]) best = idx;
          }
        }
        const std::size_t o = (p * ho + oy) * wo + ox;
        out[o] = src[best];
        (*argmax)[o] = p * h * w + best;
      }
    }
  }
  const Var<T> ins[] = {x};
  return x.tape->record(std::move(out), ins, [x, argmax](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& dx = t.grad_accum(x);
    for (std::size_t o = 0; o < g.size(); ++o) dx[(*argmax)[o]] += g[o];
  });
}

template <typename T>
Var<T> spatial_mean(Var<T> x) {
  const Shape& s = x.shape();
  if (s.size() < 3) throw ConfigError("spatial_mean: expected at least 3 axes, got " + shape_str(s));
  const std::size_t hw = s[s.size() - 2] * s[s.size() - 1];
  if (hw == 0) throw ConfigError("spatial_mean: empty spatial extent");
  Shape os(s.begin(), s.end() - 2);
  Tensor<T> out(os);
  const Tensor<T>& xv = x.value();
  for (std::size_t p = 0; p < out.size(); ++p) {
    T acc{0};
    const T* src = xv.data() + p * hw;
    for (std::size_t i = 0; i < hw; ++i) acc += src[i];
    out[p] = acc / static_cast<T>(hw);
  }
  const Var<T> ins[] = {x};
  return x.tape->record(std::move(out), ins, [x, hw](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& dx = t.grad_accum(x);
    const T inv = T{1} / static_cast<T>(hw);
    for (std::size_t p = 0; p < g.size(); ++p) {
      const T v = g[p] * inv;
      T* d = dx.data() + p * hw;
      for (std::size_t i = 0; i < hw; ++i) d[i] += v;
    }
  });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, std::optional<Var<T>> bias) {
  require_same_tape(x, weight);
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (ws.size() != 2) throw ConfigError("linear: weight must be [out,in], got " + shape_str(ws));
  const bool vec = xs.size() == 1;
  if (!vec && xs.size() != 2) throw ConfigError("linear: input must be [in] or [N,in], got " + shape_str(xs));
  const std::size_t n = vec ? 1 : xs[0];
  const std::size_t in = xs.back();
  const std::size_t outd = ws[0];
  if (ws[1] != in) {
    throw ConfigError("linear: input dimension " + std::to_string(in) + " does not match weight " + shape_str(ws));
  }
  if (bias) {
    require_same_tape(x, *bias);
    if (bias->shape() != Shape{outd}) throw ConfigError("linear: bias must be [" + std::to_string(outd) + "]");
  }
  Tensor<T> out(vec ? Shape{outd} : Shape{n, outd});
  gemm<T>(false, true, n, outd, in, T{1}, x.value().data(), in, weight.value().data(), in, T{0}, out.data(), outd);
  if (bias) {
    const Tensor<T>& bv = bias->value();
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < outd; ++j) out[r * outd + j] += bv[j];
    }
  }
  std::vector<Var<T>> ins = {x, weight};
  if (bias) ins.push_back(*bias);
  return x.tape->record(std::move(out), ins, [x, weight, bias, n, in, outd](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(x)) {
      gemm<T>(false, false, n, in, outd, T{1}, g.data(), outd, t.value(weight).data(), in, T{1},
              t.grad_accum(x).data(), in);
    }
    if (t.requires_grad(weight)) {
      gemm<T>(true, false, outd, in, n, T{1}, g.data(), outd, t.value(x).data(), in, T{1},
              t.grad_accum(weight).data(), in);
    }
    if (bias && t.requires_grad(*bias)) {
      Tensor<T>& db = t.grad_accum(*bias);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < outd; ++j) db[j] += g[r * outd + j];
      }
    }
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_tape(a, b);
  if (a.shape() != b.shape()) throw ConfigError("add: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const Var<T> ins[] = {a, b};
  return a.tape->record(std::move(out), ins, [a, b](Tape<T>& t, const Tensor<T>& g) {
    for (Var<T> v : {a, b}) {
      if (!t.requires_grad(v)) continue;
      Tensor<T>& d = t.grad_accum(v);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_tape(a, b);
  if (a.shape() != b.shape()) throw ConfigError("mul: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const Var<T> ins[] = {a, b};
  return a.tape->record(std::move(out), ins, [a, b](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(a)) {
      Tensor<T>& d = t.grad_accum(a);
      const Tensor<T>& bv2 = t.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bv2[i];
    }
    if (t.requires_grad(b)) {
      Tensor<T>& d = t.grad_accum(b);
      const Tensor<T>& av = t.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out) v *= factor;
  const Var<T> ins[] = {a};
  return a.tape->record(std::move(out), ins, [a, factor](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& d = t.grad_accum(a);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * factor;
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T acc{0};
  for (const T& v : x.value()) acc += v;
  const Var<T> ins[] = {x};
  return x.tape->record(Tensor<T>(Shape{}, std::vector<T>{acc}), ins, [x](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& d = t.grad_accum(x);
    for (auto& v : d) v += g[0];
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ConfigError("mean of empty tensor");
  return scale(sum(x), T{1} / static_cast<T>(n));
}

template <typename T>
Var<T> gather_rows(Var<T> x, std::span<const std::size_t> index) {
  const Shape& s = x.shape();
  if (s.size() != 2) throw ConfigError("gather_rows: expected [N,d], got " + shape_str(s));
  const std::size_t d = s[1];
  Tensor<T> out(Shape{index.size(), d});
  const Tensor<T>& xv = x.value();
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= s[0]) throw ConfigError("gather_rows: index " + std::to_string(index[r]) + " out of range");
    std::copy(xv.data() + index[r] * d, xv.data() + (index[r] + 1) * d, out.data() + r * d);
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(index.begin(), index.end());
  const Var<T> ins[] = {x};
  return x.tape->record(std::move(out), ins, [x, idx, d](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& dx = t.grad_accum(x);
    for (std::size_t r = 0; r < idx->size(); ++r) {
      T* dst = dx.data() + (*idx)[r] * d;
      const T* src = g.data() + r * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
}

template <typename T>
Var<T> rowwise_dot(Var<T> a, Var<T> b) {
  require_same_tape(a, b);
  if (a.shape() != b.shape() || a.shape().size() != 2) {
    throw ConfigError("rowwise_dot: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t n = a.shape()[0], d = a.shape()[1];
  Tensor<T> out(Shape{n});
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t r = 0; r < n; ++r) {
    T acc{0};
    for (std::size_t j = 0; j < d; ++j) acc += av[r * d + j] * bv[r * d + j];
    out[r] = acc;
  }
  const Var<T> ins[] = {a, b};
  return a.tape->record(std::move(out), ins, [a, b, n, d](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& av2 = t.value(a);
    const Tensor<T>& bv2 = t.value(b);
    if (t.requires_grad(a)) {
      Tensor<T>& da = t.grad_accum(a);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < d; ++j) da[r * d + j] += g[r] * bv2[r * d + j];
    }
    if (t.requires_grad(b)) {
      Tensor<T>& db = t.grad_accum(b);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < d; ++j) db[r * d + j] += g[r] * av2[r * d + j];
    }
  });
}

template <typename T>
Var<T> hinge(Var<T> scores, std::span<const T> labels) {
  const Tensor<T>& s = scores.value();
  if (s.size() != labels.size()) throw ConfigError("hinge: score/label count mismatch");
  Tensor<T> out(s.shape());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = std::max(T{0}, T{1} - labels[i] * s[i]);
  auto y = std::make_shared<std::vector<T>>(labels.begin(), labels.end());
  const Var<T> ins[] = {scores};
  return scores.tape->record(std::move(out), ins, [scores, y](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& sv = t.value(scores);
    Tensor<T>& ds = t.grad_accum(scores);
    for (std::size_t i = 0; i < sv.size(); ++i) {
      if (T{1} - (*y)[i] * sv[i] > T{0}) ds[i] -= g[i] * (*y)[i];
    }
  });
}

template <typename T>
Var<T> dropout(Var<T> x, T p, Rng& rng, bool training) {
  if (!(p >= T{0} && p < T{1})) throw ConfigError("dropout: p must be in [0,1)");
  if (!training || p == T{0}) return x;
  auto mask = std::make_shared<std::vector<T>>(x.value().size());
  const T keep = T{1} / (T{1} - p);
  for (auto& m : *mask) m = rng.uniform() < static_cast<double>(p) ? T{0} : keep;
  Tensor<T> out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*mask)[i];
  const Var<T> ins[] = {x};
  return x.tape->record(std::move(out), ins, [x, mask](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& dx = t.grad_accum(x);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (*mask)[i];
  });
}

template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, std::span<const int> labels) {
  const Shape& s = logits.shape();
  if (s.size() != 2 || s[0] != labels.size()) throw ConfigError("softmax_cross_entropy: logits " + shape_str(s));
  const std::size_t n = s[0], k = s[1];
  auto prob = std::make_shared<Tensor<T>>(s);
  const Tensor<T>& lv = logits.value();
  T total{0};
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k) throw ConfigError("softmax_cross_entropy: label out of range");
    const T* row = lv.data() + r * k;
    const T mx = *std::max_element(row, row + k);
    T z{0};
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < k; ++j) (*prob)[r * k + j] = std::exp(row[j] - mx) / z;
    total += -(row[labels[r]] - mx - std::log(z));
  }
  auto lab = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  const Var<T> ins[] = {logits};
  return logits.tape->record(Tensor<T>(Shape{}, std::vector<T>{total / static_cast<T>(n)}), ins,
                             [logits, prob, lab, n, k](Tape<T>& t, const Tensor<T>& g) {
                               Tensor<T>& d = t.grad_accum(logits);
                               const T sc = g[0] / static_cast<T>(n);
                               for (std::size_t r = 0; r < n; ++r) {
                                 for (std::size_t j = 0; j < k; ++j) {
                                   const T target = static_cast<int>(j) == (*lab)[r] ? T{1} : T{0};
                                   d[r * k + j] += sc * ((*prob)[r * k + j] - target);
                                 }
                               }
                             });
}

template <typename T>
Var<T> sigmoid_bce(Var<T> logits, const Tensor<T>& targets) {
  const Tensor<T>& lv = logits.value();
  if (lv.shape() != targets.shape()) throw ConfigError("sigmoid_bce: shape mismatch");
  if (lv.size() == 0) throw ConfigError("sigmoid_bce: empty input");
  T total{0};
  for (std::size_t i = 0; i < lv.size(); ++i) {
    const T x = lv[i], y = targets[i];
    // log(1+exp(-|x|)) + max(x,0) - x*y
    total += std::max(x, T{0}) - x * y + std::log1p(std::exp(-std::abs(x)));
  }
  auto tgt = std::make_shared<Tensor<T>>(targets);
  const std::size_t n = lv.size();
  const Var<T> ins[] = {logits};
  return logits.tape->record(Tensor<T>(Shape{}, std::vector<T>{total / static_cast<T>(n)}), ins,
                             [logits, tgt, n](Tape<T>& t, const Tensor<T>& g) {
                               const Tensor<T>& lv2 = t.value(logits);
                               Tensor<T>& d = t.grad_accum(logits);
                               const T sc = g[0] / static_cast<T>(n);
                               for (std::size_t i = 0; i < n; ++i) {
                                 const T sig = T{1} / (T{1} + std::exp(-lv2[i]));
                                 d[i] += sc * (sig - (*tgt)[i]);
                               }
                             });
}

template <typename T>
Var<T> mse(Var<T> pred, const Tensor<T>& target) {
  const Tensor<T>& pv = pred.value();
  if (pv.shape() != target.shape()) throw ConfigError("mse: shape mismatch");
  if (pv.size() == 0) throw ConfigError("mse: empty input");
  T total{0};
  for (std::size_t i = 0; i < pv.size(); ++i) total += (pv[i] - target[i]) * (pv[i] - target[i]);
  auto tgt = std::make_shared<Tensor<T>>(target);
  const std::size_t n = pv.size();
  const Var<T> ins[] = {pred};
  return pred.tape->record(Tensor<T>(Shape{}, std::vector<T>{total / static_cast<T>(n)}), ins,
                           [pred, tgt, n](Tape<T>& t, const Tensor<T>& g) {
                             const Tensor<T>& pv2 = t.value(pred);
                             Tensor<T>& d = t.grad_accum(pred);
                             const T sc = T{2} * g[0] / static_cast<T>(n);
                             for (std::size_t i = 0; i < n; ++i) d[i] += sc * (pv2[i] - (*tgt)[i]);
                           });
}

template <typename T>
Var<T> group_mean(Var<T> x, std::size_t group) {
  const Shape& s = x.shape();
  if (s.size() != 2 || group == 0 || s[0] % group != 0) {
    throw ConfigError("group_mean: cannot group " + shape_str(s) + " by " + std::to_string(group));
  }
  const std::size_t n = s[0] / group, d = s[1];
  Tensor<T> out(Shape{n, d});
  const Tensor<T>& xv = x.value();
  const T inv = T{1} / static_cast<T>(group);
  for (std::size_t r = 0; r < s[0]; ++r) {
    for (std::size_t j = 0; j < d; ++j) out[(r / group) * d + j] += xv[r * d + j] * inv;
  }
  const Var<T> ins[] = {x};
  return x.tape->record(std::move(out), ins, [x, group, d, inv](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& dx = t.grad_accum(x);
    for (std::size_t r = 0; r < dx.shape()[0]; ++r) {
      for (std::size_t j = 0; j < d; ++j) dx[r * d + j] += g[(r / group) * d + j] * inv;
    }
  });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  const Var<T> ins[] = {x};
  return x.tape->record(std::move(out), ins, [x](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& dx = t.grad_accum(x);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
  });
}

#define ICLP_INSTANTIATE(T)                                                                                 \
  template class Tape<T>;                                                                                   \
  template Tensor<T> conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,   \
                                       std::size_t);                                                        \
  template Var<T> conv2d<T>(Var<T>, Var<T>, Var<T>, std::size_t, std::size_t);                              \
  template Var<T> relu<T>(Var<T>);                                                                          \
  template Var<T> max_pool2d<T>(Var<T>, std::size_t, std::size_t);                                          \
  template Var<T> spatial_mean<T>(Var<T>);                                                                  \
  template Var<T> linear<T>(Var<T>, Var<T>, std::optional<Var<T>>);                                         \
  template Var<T> add<T>(Var<T>, Var<T>);                                                                   \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                                   \
  template Var<T> scale<T>(Var<T>, T);                                                                      \
  template Var<T> sum<T>(Var<T>);                                                                           \
  template Var<T> mean<T>(Var<T>);                                                                          \
  template Var<T> gather_rows<T>(Var<T>, std::span<const std::size_t>);                                     \
  template Var<T> rowwise_dot<T>(Var<T>, Var<T>);                                                           \
  template Var<T> hinge<T>(Var<T>, std::span<const T>);                                                     \
  template Var<T> dropout<T>(Var<T>, T, Rng&, bool);                                                        \
  template Var<T> softmax_cross_entropy<T>(Var<T>, std::span<const int>);                                   \
  template Var<T> sigmoid_bce<T>(Var<T>, const Tensor<T>&);                                                 \
  template Var<T> mse<T>(Var<T>, const Tensor<T>&);                                                         \
  template Var<T> group_mean<T>(Var<T>, std::size_t);                                                       \
  template Var<T> reshape<T>(Var<T>, Shape);

ICLP_INSTANTIATE(float)
ICLP_INSTANTIATE(double)

#undef ICLP_INSTANTIATE

}  // namespace iclp::nn
