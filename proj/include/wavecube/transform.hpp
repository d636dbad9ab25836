#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "wavecube/error.hpp"
#include "wavecube/filters.hpp"
#include "wavecube/volume.hpp"

namespace wavecube {

/// The eight single-level subbands of a 3D DWT, indexed in `subband_tags` order.
template <class T>
struct SubbandSet {
  std::string wavelet;
  std::array<Volume3D<T>, 8> bands;

  const Extent3& extent() const noexcept { return bands[0].extent(); }
  Volume3D<T>& operator[](std::size_t i) noexcept { return bands[i]; }
  const Volume3D<T>& operator[](std::size_t i) const noexcept { return bands[i]; }
  Volume3D<T>& band(std::string_view tag) { return bands[subband_index(tag)]; }
  const Volume3D<T>& band(std::string_view tag) const { return bands[subband_index(tag)]; }

  bool operator==(const SubbandSet&) const = default;
};

struct ShrinkConfig {
  double threshold = 0.25;

  explicit ShrinkConfig(double lambda = 0.25) : threshold(lambda) {
    if (!(lambda >= 0.0))
      throw Error(Errc::invalid_argument, "shrink threshold must be >= 0");
  }
};

/// Strict-inequality hard threshold: |x| == lambda maps to zero.
template <class T>
constexpr T hard_shrink(T x, T lambda) noexcept {
  return (x > lambda || x < -lambda) ? x : T(0);
}

namespace detail {

// An axis pass views a 3D block as (outer, len, inner) with `inner` contiguous.
struct AxisView {
  std::size_t outer;
  std::size_t len;
  std::size_t inner;
};

constexpr AxisView axis_view(Extent3 e, int axis) noexcept {
  switch (axis) {
    case 0: return {1, e.d, e.m * e.n};
    case 1: return {e.d, e.m, e.n};
    default: return {e.d * e.m, e.n, 1};
  }
}

constexpr Extent3 halve(Extent3 e, int axis) noexcept {
  if (axis == 0) e.d /= 2;
  else if (axis == 1) e.m /= 2;
  else e.n /= 2;
  return e;
}

constexpr Extent3 twice(Extent3 e, int axis) noexcept {
  if (axis == 0) e.d *= 2;
  else if (axis == 1) e.m *= 2;
  else e.n *= 2;
  return e;
}

// lo[i] = sum_k flo[k] * in[(2i + k) mod len] along `axis` (periodic), same for hi.
template <class T>
void analyze_axis(const T* in, Extent3 e, int axis, const std::vector<double>& flo,
                  const std::vector<double>& fhi, T* lo, T* hi) {
  const AxisView v = axis_view(e, axis);
  const std::size_t half = v.len / 2;
  const std::size_t taps = flo.size();
  for (std::size_t o = 0; o < v.outer; ++o) {
    const T* src = in + o * v.len * v.inner;
    T* dl = lo + o * half * v.inner;
    T* dh = hi + o * half * v.inner;
    for (std::size_t i = 0; i < half; ++i) {
      T* rl = dl + i * v.inner;
      T* rh = dh + i * v.inner;
      for (std::size_t q = 0; q < v.inner; ++q) rl[q] = rh[q] = T(0);
      for (std::size_t k = 0; k < taps; ++k) {
        const T cl = static_cast<T>(flo[k]);
        const T ch = static_cast<T>(fhi[k]);
        const T* row = src + ((2 * i + k) % v.len) * v.inner;
        for (std::size_t q = 0; q < v.inner; ++q) {
          rl[q] += cl * row[q];
          rh[q] += ch * row[q];
        }
      }
    }
  }
}

// out[(2i + k) mod len] = sum over i, k of flo[k] * lo[i] + fhi[k] * hi[i]; `e` is the
// half-resolution extent of lo/hi.
template <class T>
void synthesize_axis(const T* lo, const T* hi, Extent3 e, int axis, const std::vector<double>& flo,
                     const std::vector<double>& fhi, T* out) {
  const AxisView v = axis_view(e, axis);
  const std::size_t len = 2 * v.len;
  const std::size_t taps = flo.size();
  for (std::size_t o = 0; o < v.outer; ++o) {
    const T* sl = lo + o * v.len * v.inner;
    const T* sh = hi + o * v.len * v.inner;
    T* dst = out + o * len * v.inner;
    for (std::size_t q = 0; q < len * v.inner; ++q) dst[q] = T(0);
    for (std::size_t i = 0; i < v.len; ++i) {
      const T* rl = sl + i * v.inner;
      const T* rh = sh + i * v.inner;
      for (std::size_t k = 0; k < taps; ++k) {
        const T cl = static_cast<T>(flo[k]);
        const T ch = static_cast<T>(fhi[k]);
        T* row = dst + ((2 * i + k) % len) * v.inner;
        for (std::size_t q = 0; q < v.inner; ++q) row[q] += cl * rl[q] + ch * rh[q];
      }
    }
  }
}

/// Separable single-level periodic analysis of a contiguous block with even extents.
/// Writes the eight subbands (each e/2) to `out` in tag order. Filtering runs
/// along z, then y, then x.
template <class T>
void analyze3(const T* in, Extent3 e, const std::vector<double>& flo,
              const std::vector<double>& fhi, const std::array<T*, 8>& out) {
  const Extent3 ez = halve(e, 0);
  const Extent3 ezy = halve(ez, 1);
  std::vector<T> z_lo(ez.size()), z_hi(ez.size());
  analyze_axis(in, e, 0, flo, fhi, z_lo.data(), z_hi.data());
  std::array<std::vector<T>, 4> zy;
  for (auto& b : zy) b.resize(ezy.size());
  analyze_axis(z_lo.data(), ez, 1, flo, fhi, zy[0].data(), zy[1].data());
  analyze_axis(z_hi.data(), ez, 1, flo, fhi, zy[2].data(), zy[3].data());
  for (std::size_t b = 0; b < 4; ++b)
    analyze_axis(zy[b].data(), ezy, 2, flo, fhi, out[2 * b], out[2 * b + 1]);
}

/// Inverse of `analyze3`'s structure: transposed scatter with the given filters.
/// `half` is the subband extent; `out` receives 2*half and is overwritten.
template <class T>
void synthesize3(const std::array<const T*, 8>& in, Extent3 half, const std::vector<double>& flo,
                 const std::vector<double>& fhi, T* out) {
  const Extent3 eyx = twice(half, 2);   // after undoing x
  const Extent3 ezy = twice(eyx, 1);    // after undoing y
  std::array<std::vector<T>, 4> zy;
  for (std::size_t b = 0; b < 4; ++b) {
    zy[b].resize(eyx.size());
    synthesize_axis(in[2 * b], in[2 * b + 1], half, 2, flo, fhi, zy[b].data());
  }
  std::vector<T> z_lo(ezy.size()), z_hi(ezy.size());
  synthesize_axis(zy[0].data(), zy[1].data(), eyx, 1, flo, fhi, z_lo.data());
  synthesize_axis(zy[2].data(), zy[3].data(), eyx, 1, flo, fhi, z_hi.data());
  synthesize_axis(z_lo.data(), z_hi.data(), ezy, 0, flo, fhi, out);
}

inline void check_even(Extent3 e) {
  if (e.d == 0 || e.m == 0 || e.n == 0 || e.d % 2 || e.m % 2 || e.n % 2)
    throw Error(Errc::odd_extent, "DWT needs even, nonzero extents; got " + e.str());
}

}  // namespace detail

/// Single-level 3D DWT with periodic boundaries.
///
/// Each subband is (down2)(f_tag * x) where the 3D filter is the tensor
/// product of the bank's decomposition filters and `*` is taken in correlation
/// orientation: X_tag[i,j,k] = sum f_tag[a,b,c] x[2i+a, 2j+b, 2k+c] (indices mod
/// extent). A delta at the origin therefore yields f_tag[0,0,0] in every band.
template <class T>
SubbandSet<T> dwt3(const Volume3D<T>& x, const FilterBank& bank) {
  const Extent3 e = x.extent();
  detail::check_even(e);
  const std::size_t len = bank.length();
  if (e.d < len || e.m < len || e.n < len)
    throw Error(Errc::too_small, "extent " + e.str() + " is shorter than the " +
                                     std::to_string(len) + "-tap '" + bank.name + "' filter");
  SubbandSet<T> out;
  out.wavelet = bank.name;
  const Extent3 h{e.d / 2, e.m / 2, e.n / 2};
  std::array<T*, 8> ptrs{};
  for (std::size_t t = 0; t < 8; ++t) {
    out.bands[t] = Volume3D<T>(h);
    ptrs[t] = out.bands[t].storage().data();
  }
  detail::analyze3(x.storage().data(), e, bank.lo_dec, bank.hi_dec, ptrs);
  return out;
}

/// Inverse 3D DWT: sum over tags of frec_tag * (up2) X_tag, same boundary
/// and orientation conventions as dwt3.
template <class T>
Volume3D<T> idwt3(const SubbandSet<T>& s, const FilterBank& bank) {
  const Extent3 h = s.bands[0].extent();
  for (std::size_t t = 1; t < 8; ++t)
    if (s.bands[t].extent() != h)
      throw Error(Errc::shape_mismatch, "subband " + std::string(subband_tags[t]) + " is " +
                                            s.bands[t].extent().str() + ", expected " + h.str());
  if (h.size() == 0) throw Error(Errc::shape_mismatch, "empty subbands");
  Volume3D<T> out(Extent3{2 * h.d, 2 * h.m, 2 * h.n});
  std::array<const T*, 8> ptrs{};
  for (std::size_t t = 0; t < 8; ++t) ptrs[t] = s.bands[t].storage().data();
  detail::synthesize3(ptrs, h, bank.lo_rec, bank.hi_rec, out.storage().data());
  return out;
}

/// Naive down-sampling: out(i,j,k) = x(2i,2j,2k), floor-halved extents.
template <class T>
Volume3D<T> downsample2(const Volume3D<T>& x) {
  const Extent3 e = x.extent();
  Volume3D<T> out(Extent3{e.d / 2, e.m / 2, e.n / 2});
  for (std::size_t z = 0; z < out.depth(); ++z)
    for (std::size_t y = 0; y < out.height(); ++y)
      for (std::size_t k = 0; k < out.width(); ++k) out(z, y, k) = x(2 * z, 2 * y, 2 * k);
  return out;
}

/// Naive up-sampling: input on the even lattice, zeros elsewhere.
template <class T>
Volume3D<T> upsample2(const Volume3D<T>& x) {
  const Extent3 e = x.extent();
  Volume3D<T> out(Extent3{2 * e.d, 2 * e.m, 2 * e.n});
  for (std::size_t z = 0; z < e.d; ++z)
    for (std::size_t y = 0; y < e.m; ++y)
      for (std::size_t k = 0; k < e.n; ++k) out(2 * z, 2 * y, 2 * k) = x(z, y, k);
  return out;
}

/// Hard-thresholds the seven high-frequency subbands; lll passes through.
template <class T>
SubbandSet<T> hard_shrink(const SubbandSet<T>& s, const ShrinkConfig& cfg) {
  SubbandSet<T> out = s;
  const T lambda = static_cast<T>(cfg.threshold);
  for (std::size_t t = 1; t < 8; ++t)
    for (T& v : out.bands[t].storage()) v = hard_shrink(v, lambda);
  return out;
}

}  // namespace wavecube
