#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "wavecube/error.hpp"
#include "wavecube/filters.hpp"
#include "wavecube/nn/tape.hpp"
#include "wavecube/nn/tensor.hpp"
#include "wavecube/parallel.hpp"
#include "wavecube/transform.hpp"

namespace wavecube::nn {

enum class Mode { train, eval };

namespace detail {

struct Range {
  std::size_t lo = 0, hi = 0;
};

// Output positions o in [0, out) whose input tap o*stride + tap - pad lies in [0, in).
inline Range tap_range(std::size_t out, std::size_t in, std::size_t stride, std::size_t pad,
                       std::size_t tap) {
  std::size_t lo = tap < pad ? (pad - tap + stride - 1) / stride : 0;
  if (in + pad <= tap) return {0, 0};
  const std::size_t hi = std::min(out, (in - 1 + pad - tap) / stride + 1);
  return {lo, std::max(lo, hi)};
}

// orow[o] += w * irow[o*stride + tap - pad] for o in r. `irow` is the row start.
template <class T>
inline void row_axpy(T* orow, const T* irow, T w, Range r, std::size_t stride, std::size_t tap,
                     std::size_t pad) {
  if (stride == 1) {
    const T* src = irow + tap - pad;  // only dereferenced inside r
    for (std::size_t o = r.lo; o < r.hi; ++o) orow[o] += w * src[o];
  } else {
    for (std::size_t o = r.lo; o < r.hi; ++o) orow[o] += w * irow[o * stride + tap - pad];
  }
}

// irow[o*stride + tap - pad] += w * grow[o] for o in r.
template <class T>
inline void row_scatter(T* irow, const T* grow, T w, Range r, std::size_t stride, std::size_t tap,
                        std::size_t pad) {
  if (stride == 1) {
    T* dst = irow + tap - pad;
    for (std::size_t o = r.lo; o < r.hi; ++o) dst[o] += w * grow[o];
  } else {
    for (std::size_t o = r.lo; o < r.hi; ++o) irow[o * stride + tap - pad] += w * grow[o];
  }
}

template <class T>
inline T row_dot(const T* grow, const T* irow, Range r, std::size_t stride, std::size_t tap,
                 std::size_t pad) {
  T acc = T(0);
  if (stride == 1) {
    const T* src = irow + tap - pad;
    for (std::size_t o = r.lo; o < r.hi; ++o) acc += grow[o] * src[o];
  } else {
    for (std::size_t o = r.lo; o < r.hi; ++o) acc += grow[o] * irow[o * stride + tap - pad];
  }
  return acc;
}

// Fused 3-tap rows for the common 3x3x3 / stride 1 / pad 1 case.
template <class T>
inline void row_conv3(T* orow, const T* irow, const T* w, std::size_t n) {
  const T w0 = w[0], w1 = w[1], w2 = w[2];
  if (n == 1) {
    orow[0] += w1 * irow[0];
    return;
  }
  orow[0] += w1 * irow[0] + w2 * irow[1];
  for (std::size_t x = 1; x + 1 < n; ++x) orow[x] += w0 * irow[x - 1] + w1 * irow[x] + w2 * irow[x + 1];
  orow[n - 1] += w0 * irow[n - 2] + w1 * irow[n - 1];
}

template <class T>
inline void row_conv3_adjoint(T* irow, const T* grow, const T* w, std::size_t n) {
  const T w0 = w[0], w1 = w[1], w2 = w[2];
  if (n == 1) {
    irow[0] += w1 * grow[0];
    return;
  }
  irow[0] += w1 * grow[0] + w0 * grow[1];
  for (std::size_t x = 1; x + 1 < n; ++x) irow[x] += w2 * grow[x - 1] + w1 * grow[x] + w0 * grow[x + 1];
  irow[n - 1] += w2 * grow[n - 2] + w1 * grow[n - 1];
}

struct ConvGeom {
  std::size_t k, stride, pad;
  Extent3 in, out;
  bool fused3() const noexcept { return k == 3 && stride == 1 && pad == 1; }
};

template <class T>
void conv_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, const ConvGeom& g,
                  Tensor<T>& y) {
  const std::size_t B = x.shape().b, IC = x.shape().c, OC = w.shape().b, k = g.k;
  const std::size_t k3 = k * k * k;
  parallel_for(B * OC, [&](std::size_t bo) {
    const std::size_t b = bo / OC, oc = bo % OC;
    T* out = y.slice(b, oc);
    std::fill(out, out + g.out.size(), bias[oc]);
    for (std::size_t ic = 0; ic < IC; ++ic) {
      const T* in = x.slice(b, ic);
      const T* wk = w.data() + (oc * IC + ic) * k3;
      for (std::size_t kz = 0; kz < k; ++kz) {
        const Range rz = tap_range(g.out.d, g.in.d, g.stride, g.pad, kz);
        for (std::size_t ky = 0; ky < k; ++ky) {
          const Range ry = tap_range(g.out.m, g.in.m, g.stride, g.pad, ky);
          const T* wrow = wk + (kz * k + ky) * k;
          for (std::size_t oz = rz.lo; oz < rz.hi; ++oz) {
            const std::size_t iz = oz * g.stride + kz - g.pad;
            for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
              const std::size_t iy = oy * g.stride + ky - g.pad;
              T* orow = out + (oz * g.out.m + oy) * g.out.n;
              const T* irow = in + (iz * g.in.m + iy) * g.in.n;
              if (g.fused3()) {
                row_conv3(orow, irow, wrow, g.out.n);
              } else {
                for (std::size_t kx = 0; kx < k; ++kx)
                  row_axpy(orow, irow, wrow[kx], tap_range(g.out.n, g.in.n, g.stride, g.pad, kx),
                           g.stride, kx, g.pad);
              }
            }
          }
        }
      }
    }
  });
}

template <class T>
void conv_backward_input(const Tensor<T>& gy, const Tensor<T>& w, const ConvGeom& g, Tensor<T>& gx) {
  const std::size_t B = gy.shape().b, OC = gy.shape().c, IC = w.shape().c, k = g.k;
  const std::size_t k3 = k * k * k;
  parallel_for(B * IC, [&](std::size_t bi) {
    const std::size_t b = bi / IC, ic = bi % IC;
    T* din = gx.slice(b, ic);
    for (std::size_t oc = 0; oc < OC; ++oc) {
      const T* gout = gy.slice(b, oc);
      const T* wk = w.data() + (oc * IC + ic) * k3;
      for (std::size_t kz = 0; kz < k; ++kz) {
        const Range rz = tap_range(g.out.d, g.in.d, g.stride, g.pad, kz);
        for (std::size_t ky = 0; ky < k; ++ky) {
          const Range ry = tap_range(g.out.m, g.in.m, g.stride, g.pad, ky);
          const T* wrow = wk + (kz * k + ky) * k;
          for (std::size_t oz = rz.lo; oz < rz.hi; ++oz) {
            const std::size_t iz = oz * g.stride + kz - g.pad;
            for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
              const std::size_t iy = oy * g.stride + ky - g.pad;
              const T* grow = gout + (oz * g.out.m + oy) * g.out.n;
              T* irow = din + (iz * g.in.m + iy) * g.in.n;
              if (g.fused3()) {
                row_conv3_adjoint(irow, grow, wrow, g.out.n);
              } else {
                for (std::size_t kx = 0; kx < k; ++kx)
                  row_scatter(irow, grow, wrow[kx],
                              tap_range(g.out.n, g.in.n, g.stride, g.pad, kx), g.stride, kx, g.pad);
              }
            }
          }
        }
      }
    }
  });
}

template <class T>
void conv_backward_weight(const Tensor<T>& gy, const Tensor<T>& x, const ConvGeom& g, Tensor<T>& gw) {
  const std::size_t B = gy.shape().b, OC = gy.shape().c, IC = x.shape().c, k = g.k;
  const std::size_t k3 = k * k * k;
  parallel_for(OC, [&](std::size_t oc) {
    for (std::size_t ic = 0; ic < IC; ++ic) {
      T* dw = gw.data() + (oc * IC + ic) * k3;
      for (std::size_t b = 0; b < B; ++b) {
        const T* gout = gy.slice(b, oc);
        const T* in = x.slice(b, ic);
        for (std::size_t kz = 0; kz < k; ++kz) {
          const Range rz = tap_range(g.out.d, g.in.d, g.stride, g.pad, kz);
          for (std::size_t ky = 0; ky < k; ++ky) {
            const Range ry = tap_range(g.out.m, g.in.m, g.stride, g.pad, ky);
            for (std::size_t kx = 0; kx < k; ++kx) {
              const Range rx = tap_range(g.out.n, g.in.n, g.stride, g.pad, kx);
              T acc = T(0);
              for (std::size_t oz = rz.lo; oz < rz.hi; ++oz) {
                const std::size_t iz = oz * g.stride + kz - g.pad;
                for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
                  const std::size_t iy = oy * g.stride + ky - g.pad;
                  acc += row_dot(gout + (oz * g.out.m + oy) * g.out.n,
                                 in + (iz * g.in.m + iy) * g.in.n, rx, g.stride, kx, g.pad);
                }
              }
              dw[(kz * k + ky) * k + kx] += acc;
            }
          }
        }
      }
    }
  });
}

template <class T>
void bias_backward(const Tensor<T>& gy, Tensor<T>& gb) {
  const Shape5& s = gy.shape();
  for (std::size_t c = 0; c < s.c; ++c) {
    T acc = T(0);
    for (std::size_t b = 0; b < s.b; ++b) {
      const T* g = gy.slice(b, c);
      for (std::size_t i = 0; i < s.spatial(); ++i) acc += g[i];
    }
    gb[c] += acc;
  }
}

// One linear-interpolation pass along `axis` of every (b, c) block, len -> 2 len,
// with corner alignment (first and last samples map onto each other).
struct InterpTable {
  std::vector<std::size_t> i0, i1;
  std::vector<double> w;
};

inline InterpTable interp_table(std::size_t in) {
  const std::size_t out = 2 * in;
  InterpTable t;
  t.i0.resize(out);
  t.i1.resize(out);
  t.w.resize(out);
  for (std::size_t o = 0; o < out; ++o) {
    if (in == 1) {
      t.i0[o] = t.i1[o] = 0;
      t.w[o] = 0.0;
      continue;
    }
    const double pos = static_cast<double>(o) * static_cast<double>(in - 1) /
                       static_cast<double>(out - 1);
    std::size_t i0 = static_cast<std::size_t>(std::floor(pos));
    if (i0 >= in - 1) i0 = in - 2;
    t.i0[o] = i0;
    t.i1[o] = i0 + 1;
    t.w[o] = pos - static_cast<double>(i0);
  }
  return t;
}

template <class T>
void interp_axis(const T* in, std::size_t blocks, Extent3 e, int axis, T* out) {
  const auto v = wavecube::detail::axis_view(e, axis);
  const InterpTable tab = interp_table(v.len);
  const std::size_t outer = blocks * v.outer, olen = 2 * v.len;
  for (std::size_t o = 0; o < outer; ++o) {
    const T* src = in + o * v.len * v.inner;
    T* dst = out + o * olen * v.inner;
    for (std::size_t j = 0; j < olen; ++j) {
      const T w1 = static_cast<T>(tab.w[j]), w0 = T(1) - w1;
      const T* a = src + tab.i0[j] * v.inner;
      const T* b = src + tab.i1[j] * v.inner;
      T* r = dst + j * v.inner;
      for (std::size_t q = 0; q < v.inner; ++q) r[q] = w0 * a[q] + w1 * b[q];
    }
  }
}

template <class T>
void interp_axis_adjoint(const T* gout, std::size_t blocks, Extent3 e, int axis, T* gin) {
  const auto v = wavecube::detail::axis_view(e, axis);
  const InterpTable tab = interp_table(v.len);
  const std::size_t outer = blocks * v.outer, olen = 2 * v.len;
  for (std::size_t o = 0; o < outer; ++o) {
    const T* src = gout + o * olen * v.inner;
    T* dst = gin + o * v.len * v.inner;
    for (std::size_t j = 0; j < olen; ++j) {
      const T w1 = static_cast<T>(tab.w[j]), w0 = T(1) - w1;
      T* a = dst + tab.i0[j] * v.inner;
      T* b = dst + tab.i1[j] * v.inner;
      const T* r = src + j * v.inner;
      for (std::size_t q = 0; q < v.inner; ++q) {
        a[q] += w0 * r[q];
        b[q] += w1 * r[q];
      }
    }
  }
}

inline void require_even(const Shape5& s, const char* what) {
  if (s.d % 2 || s.m % 2 || s.n % 2 || s.spatial() == 0)
    throw Error(Errc::odd_extent, std::string(what) + " needs even spatial extents, got " + s.str());
}

}  // namespace detail

/// Convolution with a cubic kernel; `w` is out x in x k x k x k, `bias` is
/// 1 x out x 1 x 1 x 1. Output extent (in + 2 pad - k) / stride + 1 per axis.
template <class T>
Var conv3d(Tape<T>& t, Var x, Var w, Var bias, std::size_t stride = 1, std::size_t pad = 1) {
  const Shape5 xs = t.shape(x), ws = t.shape(w);
  if (ws.c != xs.c)
    throw Error(Errc::channel_mismatch, "conv expects " + std::to_string(ws.c) +
                                            " input channels, got " + std::to_string(xs.c));
  if (t.value(bias).size() != ws.b)
    throw Error(Errc::shape_mismatch, "conv bias size does not match output channels");
  const std::size_t k = ws.d;
  if (stride == 2 && (xs.d % 2 || xs.m % 2 || xs.n % 2))
    throw Error(Errc::odd_extent, "stride-2 convolution needs even extents, got " + xs.str());
  if (xs.d + 2 * pad < k || xs.m + 2 * pad < k || xs.n + 2 * pad < k)
    throw Error(Errc::too_small, "input " + xs.str() + " smaller than kernel");
  detail::ConvGeom g{k, stride, pad, xs.extent(), {}};
  g.out = {(xs.d + 2 * pad - k) / stride + 1, (xs.m + 2 * pad - k) / stride + 1,
           (xs.n + 2 * pad - k) / stride + 1};
  Tensor<T> y(Shape5{xs.b, ws.b, g.out.d, g.out.m, g.out.n});
  detail::conv_forward(t.value(x), t.value(w), t.value(bias), g, y);
  return t.push(std::move(y), t.any_requires_grad({x, w, bias}),
                [x, w, bias, g](Tape<T>& t, std::size_t self) {
                  const Tensor<T>& gy = t.grad(self);
                  if (t.requires_grad(x)) detail::conv_backward_input(gy, t.value(w), g, t.grad(x));
                  if (t.requires_grad(w)) detail::conv_backward_weight(gy, t.value(x), g, t.grad(w));
                  if (t.requires_grad(bias)) detail::bias_backward(gy, t.grad(bias));
                });
}

/// Transposed convolution with a 2x2x2 kernel and stride 2; `w` is out x in x 2 x 2 x 2.
template <class T>
Var deconv2(Tape<T>& t, Var x, Var w, Var bias) {
  const Shape5 xs = t.shape(x), ws = t.shape(w);
  if (ws.c != xs.c)
    throw Error(Errc::channel_mismatch, "deconv expects " + std::to_string(ws.c) +
                                            " input channels, got " + std::to_string(xs.c));
  if (ws.d != 2 || ws.m != 2 || ws.n != 2)
    throw Error(Errc::shape_mismatch, "deconv kernel must be 2x2x2");
  const std::size_t IC = xs.c, OC = ws.b;
  const Extent3 ie = xs.extent();
  const Extent3 oe{2 * ie.d, 2 * ie.m, 2 * ie.n};
  Tensor<T> y(Shape5{xs.b, OC, oe.d, oe.m, oe.n});
  {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& wv = t.value(w);
    const Tensor<T>& bv = t.value(bias);
    parallel_for(xs.b * OC, [&](std::size_t bo) {
      const std::size_t b = bo / OC, oc = bo % OC;
      T* out = y.slice(b, oc);
      std::fill(out, out + oe.size(), bv[oc]);
      for (std::size_t ic = 0; ic < IC; ++ic) {
        const T* in = xv.slice(b, ic);
        const T* wk = wv.data() + (oc * IC + ic) * 8;
        for (std::size_t z = 0; z < ie.d; ++z)
          for (std::size_t kz = 0; kz < 2; ++kz)
            for (std::size_t yy = 0; yy < ie.m; ++yy)
              for (std::size_t ky = 0; ky < 2; ++ky) {
                const T w0 = wk[(kz * 2 + ky) * 2], w1 = wk[(kz * 2 + ky) * 2 + 1];
                const T* irow = in + (z * ie.m + yy) * ie.n;
                T* orow = out + ((2 * z + kz) * oe.m + 2 * yy + ky) * oe.n;
                for (std::size_t xx = 0; xx < ie.n; ++xx) {
                  orow[2 * xx] += w0 * irow[xx];
                  orow[2 * xx + 1] += w1 * irow[xx];
                }
              }
      }
    });
  }
  return t.push(std::move(y), t.any_requires_grad({x, w, bias}),
                [x, w, bias, ie, oe, IC, OC](Tape<T>& t, std::size_t self) {
                  const Tensor<T>& gy = t.grad(self);
                  const std::size_t B = gy.shape().b;
                  if (t.requires_grad(x)) {
                    const Tensor<T>& wv = t.value(w);
                    Tensor<T>& gx = t.grad(x);
                    parallel_for(B * IC, [&](std::size_t bi) {
                      const std::size_t b = bi / IC, ic = bi % IC;
                      T* din = gx.slice(b, ic);
                      for (std::size_t oc = 0; oc < OC; ++oc) {
                        const T* gout = gy.slice(b, oc);
                        const T* wk = wv.data() + (oc * IC + ic) * 8;
                        for (std::size_t z = 0; z < ie.d; ++z)
                          for (std::size_t kz = 0; kz < 2; ++kz)
                            for (std::size_t yy = 0; yy < ie.m; ++yy)
                              for (std::size_t ky = 0; ky < 2; ++ky) {
                                const T w0 = wk[(kz * 2 + ky) * 2], w1 = wk[(kz * 2 + ky) * 2 + 1];
                                T* irow = din + (z * ie.m + yy) * ie.n;
                                const T* grow = gout + ((2 * z + kz) * oe.m + 2 * yy + ky) * oe.n;
                                for (std::size_t xx = 0; xx < ie.n; ++xx)
                                  irow[xx] += w0 * grow[2 * xx] + w1 * grow[2 * xx + 1];
                              }
                      }
                    });
                  }
                  if (t.requires_grad(w)) {
                    const Tensor<T>& xv = t.value(x);
                    Tensor<T>& gw = t.grad(w);
                    parallel_for(OC, [&](std::size_t oc) {
                      for (std::size_t ic = 0; ic < IC; ++ic) {
                        T* dw = gw.data() + (oc * IC + ic) * 8;
                        for (std::size_t b = 0; b < B; ++b) {
                          const T* in = xv.slice(b, ic);
                          const T* gout = gy.slice(b, oc);
                          for (std::size_t z = 0; z < ie.d; ++z)
                            for (std::size_t kz = 0; kz < 2; ++kz)
                              for (std::size_t yy = 0; yy < ie.m; ++yy)
                                for (std::size_t ky = 0; ky < 2; ++ky) {
                                  const T* irow = in + (z * ie.m + yy) * ie.n;
                                  const T* grow = gout + ((2 * z + kz) * oe.m + 2 * yy + ky) * oe.n;
                                  T a0 = T(0), a1 = T(0);
                                  for (std::size_t xx = 0; xx < ie.n; ++xx) {
                                    a0 += irow[xx] * grow[2 * xx];
                                    a1 += irow[xx] * grow[2 * xx + 1];
                                  }
                                  dw[(kz * 2 + ky) * 2] += a0;
                                  dw[(kz * 2 + ky) * 2 + 1] += a1;
                                }
                        }
                      }
                    });
                  }
                  if (t.requires_grad(bias)) detail::bias_backward(gy, t.grad(bias));
                });
}

/// Argmax positions of a 2x2x2 max-pool, as flat offsets within each (b, c) block.
using PoolIndices = std::shared_ptr<const std::vector<std::uint32_t>>;

struct PoolResult {
  Var out;
  PoolIndices indices;
  Extent3 input_extent;
};

/// 2x2x2 max-pool, stride 2. Ties keep the first voxel in z-y-x scan order.
template <class T>
PoolResult maxpool2(Tape<T>& t, Var x) {
  const Shape5 xs = t.shape(x);
  detail::require_even(xs, "max-pool");
  const Extent3 ie = xs.extent();
  const Extent3 oe{ie.d / 2, ie.m / 2, ie.n / 2};
  Tensor<T> y(Shape5{xs.b, xs.c, oe.d, oe.m, oe.n});
  auto idx = std::make_shared<std::vector<std::uint32_t>>(y.size());
  const Tensor<T>& xv = t.value(x);
  for (std::size_t bc = 0; bc < xs.b * xs.c; ++bc) {
    const T* in = xv.data() + bc * ie.size();
    T* out = y.data() + bc * oe.size();
    std::uint32_t* id = idx->data() + bc * oe.size();
    for (std::size_t z = 0; z < oe.d; ++z)
      for (std::size_t yy = 0; yy < oe.m; ++yy)
        for (std::size_t xx = 0; xx < oe.n; ++xx) {
          std::size_t best = (2 * z * ie.m + 2 * yy) * ie.n + 2 * xx;
          for (std::size_t dz = 0; dz < 2; ++dz)
            for (std::size_t dy = 0; dy < 2; ++dy)
              for (std::size_t dx = 0; dx < 2; ++dx) {
                const std::size_t p = ((2 * z + dz) * ie.m + 2 * yy + dy) * ie.n + 2 * xx + dx;
                if (in[p] > in[best]) best = p;
              }
          const std::size_t o = (z * oe.m + yy) * oe.n + xx;
          out[o] = in[best];
          id[o] = static_cast<std::uint32_t>(best);
        }
  }
  PoolIndices shared = idx;
  Var out = t.push(std::move(y), t.requires_grad(x), [x, shared, ie, oe](Tape<T>& t, std::size_t self) {
    const Tensor<T>& gy = t.grad(self);
    Tensor<T>& gx = t.grad(x);
    const std::size_t blocks = gy.shape().b * gy.shape().c;
    for (std::size_t bc = 0; bc < blocks; ++bc) {
      const T* g = gy.data() + bc * oe.size();
      T* d = gx.data() + bc * ie.size();
      const std::uint32_t* id = shared->data() + bc * oe.size();
      for (std::size_t o = 0; o < oe.size(); ++o) d[id[o]] += g[o];
    }
  });
  return {out, shared, ie};
}

/// Scatters each value to its recorded argmax position in a zero block of `extent`.
template <class T>
Var maxunpool2(Tape<T>& t, Var x, const PoolIndices& indices, Extent3 extent) {
  const Shape5 xs = t.shape(x);
  if (!indices || indices->size() != xs.size() || extent.d != 2 * xs.d || extent.m != 2 * xs.m ||
      extent.n != 2 * xs.n)
    throw Error(Errc::shape_mismatch, "max-unpool indices do not match input " + xs.str());
  const Extent3 oe = extent;
  const std::size_t isz = xs.spatial();
  Tensor<T> y(Shape5{xs.b, xs.c, oe.d, oe.m, oe.n});
  const Tensor<T>& xv = t.value(x);
  for (std::size_t bc = 0; bc < xs.b * xs.c; ++bc) {
    const T* in = xv.data() + bc * isz;
    T* out = y.data() + bc * oe.size();
    const std::uint32_t* id = indices->data() + bc * isz;
    for (std::size_t i = 0; i < isz; ++i) out[id[i]] = in[i];
  }
  return t.push(std::move(y), t.requires_grad(x), [x, indices, isz, oe](Tape<T>& t, std::size_t self) {
    const Tensor<T>& gy = t.grad(self);
    Tensor<T>& gx = t.grad(x);
    const std::size_t blocks = gx.shape().b * gx.shape().c;
    for (std::size_t bc = 0; bc < blocks; ++bc) {
      const T* g = gy.data() + bc * oe.size();
      T* d = gx.data() + bc * isz;
      const std::uint32_t* id = indices->data() + bc * isz;
      for (std::size_t i = 0; i < isz; ++i) d[i] += g[id[i]];
    }
  });
}

/// Trilinear x2 up-sampling, corner aligned: output o along an axis of input
/// length L samples position o (L - 1) / (2L - 1). A linear ramp stays linear.
template <class T>
Var interpolate2(Tape<T>& t, Var x) {
  const Shape5 xs = t.shape(x);
  const std::size_t blocks = xs.b * xs.c;
  const Extent3 e0 = xs.extent();
  const Extent3 e1{e0.d, e0.m, 2 * e0.n};
  const Extent3 e2{e0.d, 2 * e0.m, 2 * e0.n};
  const Extent3 e3{2 * e0.d, 2 * e0.m, 2 * e0.n};
  std::vector<T> a(blocks * e1.size()), b(blocks * e2.size());
  Tensor<T> y(Shape5{xs.b, xs.c, e3.d, e3.m, e3.n});
  detail::interp_axis(t.value(x).data(), blocks, e0, 2, a.data());
  detail::interp_axis(a.data(), blocks, e1, 1, b.data());
  detail::interp_axis(b.data(), blocks, e2, 0, y.data());
  return t.push(std::move(y), t.requires_grad(x), [x, blocks, e0, e1, e2](Tape<T>& t, std::size_t self) {
    std::vector<T> gb(blocks * e2.size(), T(0)), ga(blocks * e1.size(), T(0));
    detail::interp_axis_adjoint(t.grad(self).data(), blocks, e2, 0, gb.data());
    detail::interp_axis_adjoint(gb.data(), blocks, e1, 1, ga.data());
    detail::interp_axis_adjoint(ga.data(), blocks, e0, 2, t.grad(x).data());
  });
}

/// Per-channel batch normalisation. Train mode normalises with batch
/// statistics and updates the running buffers (`momentum` weight on the new
/// value, unbiased variance); eval mode uses the running buffers.
template <class T>
Var batchnorm(Tape<T>& t, Var x, Var gamma, Var beta, Parameter<T>& running_mean,
              Parameter<T>& running_var, Mode mode, double momentum = 0.1, double eps = 1e-5) {
  const Shape5 xs = t.shape(x);
  const std::size_t C = xs.c, S = xs.spatial(), N = xs.b * S;
  if (t.value(gamma).size() != C || t.value(beta).size() != C || running_mean.value.size() != C)
    throw Error(Errc::channel_mismatch, "batch-norm channel count mismatch for input " + xs.str());
  const Tensor<T>& xv = t.value(x);
  const Tensor<T>& gv = t.value(gamma);
  const Tensor<T>& bv = t.value(beta);
  Tensor<T> y(xs);
  auto xhat = std::make_shared<Tensor<T>>(xs);
  auto inv_std = std::make_shared<std::vector<T>>(C);
  for (std::size_t c = 0; c < C; ++c) {
    double mean, var;
    if (mode == Mode::train) {
      double s = 0.0;
      for (std::size_t b = 0; b < xs.b; ++b) {
        const T* p = xv.slice(b, c);
        for (std::size_t i = 0; i < S; ++i) s += p[i];
      }
      mean = s / static_cast<double>(N);
      double q = 0.0;
      for (std::size_t b = 0; b < xs.b; ++b) {
        const T* p = xv.slice(b, c);
        for (std::size_t i = 0; i < S; ++i) {
          const double dlt = p[i] - mean;
          q += dlt * dlt;
        }
      }
      var = q / static_cast<double>(N);
      const double unbiased = N > 1 ? q / static_cast<double>(N - 1) : var;
      running_mean.value[c] =
          static_cast<T>((1.0 - momentum) * running_mean.value[c] + momentum * mean);
      running_var.value[c] =
          static_cast<T>((1.0 - momentum) * running_var.value[c] + momentum * unbiased);
    } else {
      mean = running_mean.value[c];
      var = running_var.value[c];
    }
    const T is = static_cast<T>(1.0 / std::sqrt(var + eps));
    (*inv_std)[c] = is;
    const T mu = static_cast<T>(mean), g = gv[c], bb = bv[c];
    for (std::size_t b = 0; b < xs.b; ++b) {
      const T* p = xv.slice(b, c);
      T* h = xhat->slice(b, c);
      T* o = y.slice(b, c);
      for (std::size_t i = 0; i < S; ++i) {
        h[i] = (p[i] - mu) * is;
        o[i] = g * h[i] + bb;
      }
    }
  }
  return t.push(std::move(y), t.any_requires_grad({x, gamma, beta}),
                [x, gamma, beta, xhat, inv_std, mode, C, S, N](Tape<T>& t, std::size_t self) {
                  const Tensor<T>& gy = t.grad(self);
                  const std::size_t B = gy.shape().b;
                  for (std::size_t c = 0; c < C; ++c) {
                    T sum_g = T(0), sum_gh = T(0);
                    for (std::size_t b = 0; b < B; ++b) {
                      const T* g = gy.slice(b, c);
                      const T* h = xhat->slice(b, c);
                      for (std::size_t i = 0; i < S; ++i) {
                        sum_g += g[i];
                        sum_gh += g[i] * h[i];
                      }
                    }
                    if (t.requires_grad(gamma)) t.grad(gamma)[c] += sum_gh;
                    if (t.requires_grad(beta)) t.grad(beta)[c] += sum_g;
                    if (!t.requires_grad(x)) continue;
                    const T scale = t.value(gamma)[c] * (*inv_std)[c];
                    Tensor<T>& gx = t.grad(x);
                    if (mode == Mode::eval) {
                      for (std::size_t b = 0; b < B; ++b) {
                        const T* g = gy.slice(b, c);
                        T* d = gx.slice(b, c);
                        for (std::size_t i = 0; i < S; ++i) d[i] += scale * g[i];
                      }
                    } else {
                      const T inv_n = T(1) / static_cast<T>(N);
                      const T mg = sum_g * inv_n, mgh = sum_gh * inv_n;
                      for (std::size_t b = 0; b < B; ++b) {
                        const T* g = gy.slice(b, c);
                        const T* h = xhat->slice(b, c);
                        T* d = gx.slice(b, c);
                        for (std::size_t i = 0; i < S; ++i) d[i] += scale * (g[i] - mg - h[i] * mgh);
                      }
                    }
                  }
                });
}

template <class T>
Var relu(Tape<T>& t, Var x) {
  const Tensor<T>& xv = t.value(x);
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > T(0) ? xv[i] : T(0);
  return t.push(std::move(y), t.requires_grad(x), [x](Tape<T>& t, std::size_t self) {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& gy = t.grad(self);
    Tensor<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < gy.size(); ++i)
      if (xv[i] > T(0)) gx[i] += gy[i];
  });
}

/// Elementwise hard shrinkage; gradient passes where |x| > lambda.
template <class T>
Var hard_shrink(Tape<T>& t, Var x, double lambda) {
  const T lam = static_cast<T>(lambda);
  const Tensor<T>& xv = t.value(x);
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = wavecube::hard_shrink(xv[i], lam);
  return t.push(std::move(y), t.requires_grad(x), [x, lam](Tape<T>& t, std::size_t self) {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& gy = t.grad(self);
    Tensor<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < gy.size(); ++i)
      if (xv[i] > lam || xv[i] < -lam) gx[i] += gy[i];
  });
}

/// Channel concatenation [a; b].
template <class T>
Var concat_channels(Tape<T>& t, Var a, Var b) {
  const Shape5 as = t.shape(a), bs = t.shape(b);
  if (as.b != bs.b || as.extent() != bs.extent())
    throw Error(Errc::shape_mismatch, "cannot concatenate " + as.str() + " with " + bs.str());
  const std::size_t S = as.spatial();
  Tensor<T> y(Shape5{as.b, as.c + bs.c, as.d, as.m, as.n});
  const Tensor<T>& av = t.value(a);
  const Tensor<T>& bv = t.value(b);
  for (std::size_t n = 0; n < as.b; ++n) {
    std::copy(av.slice(n, 0), av.slice(n, 0) + as.c * S, y.slice(n, 0));
    std::copy(bv.slice(n, 0), bv.slice(n, 0) + bs.c * S, y.slice(n, as.c));
  }
  return t.push(std::move(y), t.any_requires_grad({a, b}),
                [a, b, ac = as.c, bc = bs.c, S](Tape<T>& t, std::size_t self) {
                  const Tensor<T>& gy = t.grad(self);
                  for (std::size_t n = 0; n < gy.shape().b; ++n) {
                    if (t.requires_grad(a)) {
                      const T* g = gy.slice(n, 0);
                      T* d = t.grad(a).slice(n, 0);
                      for (std::size_t i = 0; i < ac * S; ++i) d[i] += g[i];
                    }
                    if (t.requires_grad(b)) {
                      const T* g = gy.slice(n, ac);
                      T* d = t.grad(b).slice(n, 0);
                      for (std::size_t i = 0; i < bc * S; ++i) d[i] += g[i];
                    }
                  }
                });
}

/// Channels [begin, end) of x.
template <class T>
Var channel_slice(Tape<T>& t, Var x, std::size_t begin, std::size_t end) {
  const Shape5 xs = t.shape(x);
  if (begin >= end || end > xs.c)
    throw Error(Errc::shape_mismatch, "channel slice out of range for " + xs.str());
  const std::size_t S = xs.spatial(), C = end - begin;
  Tensor<T> y(Shape5{xs.b, C, xs.d, xs.m, xs.n});
  const Tensor<T>& xv = t.value(x);
  for (std::size_t n = 0; n < xs.b; ++n)
    std::copy(xv.slice(n, begin), xv.slice(n, begin) + C * S, y.slice(n, 0));
  return t.push(std::move(y), t.requires_grad(x), [x, begin, C, S](Tape<T>& t, std::size_t self) {
    const Tensor<T>& gy = t.grad(self);
    Tensor<T>& gx = t.grad(x);
    for (std::size_t n = 0; n < gy.shape().b; ++n) {
      const T* g = gy.slice(n, 0);
      T* d = gx.slice(n, begin);
      for (std::size_t i = 0; i < C * S; ++i) d[i] += g[i];
    }
  });
}

/// Per-channel 3D DWT. Output has 8c channels laid out subband-major: channel
/// s*c + ch holds subband s (tag order lll..hhh) of input channel ch.
/// Backward applies the adjoint analysis operator (transposed scatter with
/// the decomposition filters), which equals the IDWT for orthogonal banks.
template <class T>
Var dwt_all(Tape<T>& t, Var x, const FilterBank& bank) {
  const Shape5 xs = t.shape(x);
  detail::require_even(xs, "DWT layer");
  const std::size_t C = xs.c;
  const Extent3 e = xs.extent(), h{e.d / 2, e.m / 2, e.n / 2};
  Tensor<T> y(Shape5{xs.b, 8 * C, h.d, h.m, h.n});
  const Tensor<T>& xv = t.value(x);
  parallel_for(xs.b * C, [&](std::size_t bc) {
    const std::size_t b = bc / C, c = bc % C;
    std::array<T*, 8> out{};
    for (std::size_t s = 0; s < 8; ++s) out[s] = y.slice(b, s * C + c);
    wavecube::detail::analyze3(xv.slice(b, c), e, bank.lo_dec, bank.hi_dec, out);
  });
  return t.push(std::move(y), t.requires_grad(x),
                [x, lo = bank.lo_dec, hi = bank.hi_dec, C, e, h](Tape<T>& t, std::size_t self) {
                  const Tensor<T>& gy = t.grad(self);
                  Tensor<T>& gx = t.grad(x);
                  parallel_for(gy.shape().b * C, [&](std::size_t bc) {
                    const std::size_t b = bc / C, c = bc % C;
                    std::array<const T*, 8> in{};
                    for (std::size_t s = 0; s < 8; ++s) in[s] = gy.slice(b, s * C + c);
                    std::vector<T> tmp(e.size());
                    wavecube::detail::synthesize3(in, h, lo, hi, tmp.data());
                    T* d = gx.slice(b, c);
                    for (std::size_t i = 0; i < tmp.size(); ++i) d[i] += tmp[i];
                  });
                });
}

/// Inverse of `dwt_all`'s layout: 8c subband-major channels -> c channels at
/// twice the extent, synthesised with the reconstruction filters.
template <class T>
Var idwt_all(Tape<T>& t, Var s, const FilterBank& bank) {
  const Shape5 ss = t.shape(s);
  if (ss.c % 8 != 0 || ss.c == 0)
    throw Error(Errc::shape_mismatch, "IDWT layer needs 8c channels, got " + ss.str());
  const std::size_t C = ss.c / 8;
  const Extent3 h = ss.extent(), e{2 * h.d, 2 * h.m, 2 * h.n};
  Tensor<T> y(Shape5{ss.b, C, e.d, e.m, e.n});
  const Tensor<T>& sv = t.value(s);
  parallel_for(ss.b * C, [&](std::size_t bc) {
    const std::size_t b = bc / C, c = bc % C;
    std::array<const T*, 8> in{};
    for (std::size_t k = 0; k < 8; ++k) in[k] = sv.slice(b, k * C + c);
    wavecube::detail::synthesize3(in, h, bank.lo_rec, bank.hi_rec, y.slice(b, c));
  });
  return t.push(std::move(y), t.requires_grad(s),
                [s, lo = bank.lo_rec, hi = bank.hi_rec, C, e, h](Tape<T>& t, std::size_t self) {
                  const Tensor<T>& gy = t.grad(self);
                  Tensor<T>& gs = t.grad(s);
                  parallel_for(gy.shape().b * C, [&](std::size_t bc) {
                    const std::size_t b = bc / C, c = bc % C;
                    std::array<std::vector<T>, 8> tmp;
                    std::array<T*, 8> out{};
                    for (std::size_t k = 0; k < 8; ++k) {
                      tmp[k].resize(h.size());
                      out[k] = tmp[k].data();
                    }
                    wavecube::detail::analyze3(gy.slice(b, c), e, lo, hi, out);
                    for (std::size_t k = 0; k < 8; ++k) {
                      T* d = gs.slice(b, k * C + c);
                      for (std::size_t i = 0; i < h.size(); ++i) d[i] += tmp[k][i];
                    }
                  });
                });
}

struct DwtOutput {
  Var low;   // c channels
  Var high;  // 7c channels, subband-major (llh .. hhh)
};

template <class T>
DwtOutput dwt_layer(Tape<T>& t, Var x, const FilterBank& bank) {
  const std::size_t C = t.shape(x).c;
  const Var all = dwt_all(t, x, bank);
  return {channel_slice(t, all, 0, C), channel_slice(t, all, C, 8 * C)};
}

template <class T>
Var idwt_layer(Tape<T>& t, Var low, Var high, const FilterBank& bank) {
  const Shape5 ls = t.shape(low), hs = t.shape(high);
  if (hs.c != 7 * ls.c || hs.b != ls.b || hs.extent() != ls.extent())
    throw Error(Errc::shape_mismatch,
                "IDWT layer: low " + ls.str() + " incompatible with high " + hs.str());
  return idwt_all(t, concat_channels(t, low, high), bank);
}

template <class T>
Var sum(Tape<T>& t, Var x) {
  T acc = T(0);
  for (const T v : t.value(x).storage()) acc += v;
  return t.push(Tensor<T>(Shape5{1, 1, 1, 1, 1}, acc), t.requires_grad(x),
                [x](Tape<T>& t, std::size_t self) {
                  const T g = t.grad(self)[0];
                  for (T& v : t.grad(x).storage()) v += g;
                });
}

/// <x, r> for a constant tensor r of the same shape.
template <class T>
Var dot(Tape<T>& t, Var x, Tensor<T> r) {
  const Tensor<T>& xv = t.value(x);
  if (xv.shape() != r.shape())
    throw Error(Errc::shape_mismatch, "dot: " + xv.shape().str() + " vs " + r.shape().str());
  T acc = T(0);
  for (std::size_t i = 0; i < r.size(); ++i) acc += xv[i] * r[i];
  auto rr = std::make_shared<Tensor<T>>(std::move(r));
  return t.push(Tensor<T>(Shape5{1, 1, 1, 1, 1}, acc), t.requires_grad(x),
                [x, rr](Tape<T>& t, std::size_t self) {
                  const T g = t.grad(self)[0];
                  Tensor<T>& gx = t.grad(x);
                  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * (*rr)[i];
                });
}

/// Class-weighted softmax cross-entropy, normalised by the sum of applied
/// weights: sum_v w[y_v] (-log p_v[y_v]) / sum_v w[y_v].
/// `labels` holds one class index per voxel in b, z, y, x order.
template <class T>
Var weighted_cross_entropy(Tape<T>& t, Var logits, std::span<const std::uint8_t> labels,
                           std::span<const double> weights) {
  const Shape5 ls = t.shape(logits);
  const std::size_t C = ls.c, S = ls.spatial();
  if (labels.size() != ls.b * S)
    throw Error(Errc::shape_mismatch, "labels have " + std::to_string(labels.size()) +
                                          " voxels, logits " + ls.str());
  if (weights.size() != C)
    throw Error(Errc::shape_mismatch, "need one class weight per logit channel");
  const Tensor<T>& lv = t.value(logits);
  auto probs = std::make_shared<Tensor<T>>(ls);
  double loss = 0.0, wsum = 0.0;
  std::vector<double> z(C);
  for (std::size_t b = 0; b < ls.b; ++b)
    for (std::size_t i = 0; i < S; ++i) {
      const std::uint8_t y = labels[b * S + i];
      if (y >= C)
        throw Error(Errc::label_out_of_range,
                    "label " + std::to_string(y) + " outside [0, " + std::to_string(C) + ")");
      double mx = -INFINITY;
      for (std::size_t c = 0; c < C; ++c) {
        z[c] = lv.slice(b, c)[i];
        mx = std::max(mx, z[c]);
      }
      double se = 0.0;
      for (std::size_t c = 0; c < C; ++c) se += std::exp(z[c] - mx);
      const double lse = mx + std::log(se);
      for (std::size_t c = 0; c < C; ++c) probs->slice(b, c)[i] = static_cast<T>(std::exp(z[c] - lse));
      loss += weights[y] * (lse - z[y]);
      wsum += weights[y];
    }
  const double norm = wsum > 0.0 ? 1.0 / wsum : 0.0;
  std::vector<double> w(weights.begin(), weights.end());
  std::vector<std::uint8_t> lab(labels.begin(), labels.end());
  return t.push(Tensor<T>(Shape5{1, 1, 1, 1, 1}, static_cast<T>(loss * norm)), t.requires_grad(logits),
                [logits, probs, w = std::move(w), lab = std::move(lab), norm, C, S](Tape<T>& t,
                                                                                    std::size_t self) {
                  const double g = t.grad(self)[0] * norm;
                  Tensor<T>& gl = t.grad(logits);
                  for (std::size_t b = 0; b < gl.shape().b; ++b)
                    for (std::size_t i = 0; i < S; ++i) {
                      const std::uint8_t y = lab[b * S + i];
                      const double s = g * w[y];
                      for (std::size_t c = 0; c < C; ++c) {
                        const double p = probs->slice(b, c)[i];
                        gl.slice(b, c)[i] += static_cast<T>(s * (p - (c == y ? 1.0 : 0.0)));
                      }
                    }
                });
}

}  // namespace wavecube::nn
