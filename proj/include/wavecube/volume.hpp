#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <type_traits>
#include <string>
#include <vector>

#include "wavecube/error.hpp"

namespace wavecube {

/// Extents of a dense grid in z-y-x (depth, height, width) order.
struct Extent3 {
  std::size_t d = 0;
  std::size_t m = 0;
  std::size_t n = 0;

  constexpr std::size_t size() const noexcept { return d * m * n; }
  constexpr std::size_t operator[](int axis) const noexcept {
    return axis == 0 ? d : (axis == 1 ? m : n);
  }
  constexpr bool operator==(const Extent3&) const = default;

  std::string str() const {
    return std::to_string(d) + "x" + std::to_string(m) + "x" + std::to_string(n);
  }
};

inline std::ostream& operator<<(std::ostream& os, const Extent3& e) { return os << e.str(); }

/// Dense 3D grid stored row-major with x fastest.
template <class T>
class Volume3D {
 public:
  using value_type = T;

  Volume3D() = default;
  explicit Volume3D(Extent3 e, T fill = T{}) : extent_(e), data_(e.size(), fill) {}
  Volume3D(std::size_t d, std::size_t m, std::size_t n, T fill = T{})
      : Volume3D(Extent3{d, m, n}, fill) {}
  Volume3D(Extent3 e, std::vector<T> values) : extent_(e), data_(std::move(values)) {
    if (data_.size() != e.size())
      throw Error(Errc::extent_mismatch, "value count " + std::to_string(data_.size()) +
                                             " does not match extent " + e.str());
  }

  const Extent3& extent() const noexcept { return extent_; }
  std::size_t depth() const noexcept { return extent_.d; }
  std::size_t height() const noexcept { return extent_.m; }
  std::size_t width() const noexcept { return extent_.n; }
  std::size_t size() const noexcept { return data_.size(); }

  std::size_t index(std::size_t z, std::size_t y, std::size_t x) const noexcept {
    return (z * extent_.m + y) * extent_.n + x;
  }
  T& operator()(std::size_t z, std::size_t y, std::size_t x) noexcept { return data_[index(z, y, x)]; }
  const T& operator()(std::size_t z, std::size_t y, std::size_t x) const noexcept {
    return data_[index(z, y, x)];
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  bool all_finite() const noexcept {
    if constexpr (std::is_floating_point_v<T>) {
      for (const T v : data_)
        if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool operator==(const Volume3D&) const = default;

  template <class U>
  Volume3D<U> cast() const {
    Volume3D<U> out(extent_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.storage()[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  Extent3 extent_{};
  std::vector<T> data_;
};

/// Binary 0/1 voxel labels: 0 background, 1 nerve fiber.
using LabelVolume = Volume3D<std::uint8_t>;

/// Copies the sub-block [origin, origin + e) of `v`; voxels outside `v` read as zero.
template <class T>
Volume3D<T> crop(const Volume3D<T>& v, Extent3 origin, Extent3 e) {
  Volume3D<T> out(e);
  const Extent3& src = v.extent();
  for (std::size_t z = 0; z < e.d; ++z) {
    const std::size_t sz = origin.d + z;
    if (sz >= src.d) break;
    for (std::size_t y = 0; y < e.m; ++y) {
      const std::size_t sy = origin.m + y;
      if (sy >= src.m) break;
      for (std::size_t x = 0; x < e.n; ++x) {
        const std::size_t sx = origin.n + x;
        if (sx >= src.n) break;
        out(z, y, x) = v(sz, sy, sx);
      }
    }
  }
  return out;
}

/// Writes `block` into `v` at `origin`, dropping voxels that fall outside `v`.
template <class T>
void paste(Volume3D<T>& v, Extent3 origin, const Volume3D<T>& block) {
  const Extent3& e = block.extent();
  const Extent3& dst = v.extent();
  for (std::size_t z = 0; z < e.d && origin.d + z < dst.d; ++z)
    for (std::size_t y = 0; y < e.m && origin.m + y < dst.m; ++y)
      for (std::size_t x = 0; x < e.n && origin.n + x < dst.n; ++x)
        v(origin.d + z, origin.m + y, origin.n + x) = block(z, y, x);
}

}  // namespace wavecube
