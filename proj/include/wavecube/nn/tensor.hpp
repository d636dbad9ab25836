#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "wavecube/error.hpp"
#include "wavecube/volume.hpp"

namespace wavecube::nn {

/// batch x channels x depth x height x width. Parameters reuse the same
/// five slots (e.g. conv weights are out x in x k x k x k).
struct Shape5 {
  std::size_t b = 0, c = 0, d = 0, m = 0, n = 0;

  constexpr std::size_t size() const noexcept { return b * c * d * m * n; }
  constexpr std::size_t spatial() const noexcept { return d * m * n; }
  constexpr Extent3 extent() const noexcept { return {d, m, n}; }
  constexpr bool operator==(const Shape5&) const = default;

  std::string str() const {
    return std::to_string(b) + "x" + std::to_string(c) + "x" + std::to_string(d) + "x" +
           std::to_string(m) + "x" + std::to_string(n);
  }
};

/// Dense 5D activation or parameter block.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape5 s, T fill = T{}) : shape_(s), data_(s.size(), fill) {}
  Tensor(Shape5 s, std::vector<T> values) : shape_(s), data_(std::move(values)) {
    if (data_.size() != s.size())
      throw Error(Errc::shape_mismatch, "tensor " + s.str() + " given " +
                                            std::to_string(data_.size()) + " values");
  }

  const Shape5& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Pointer to the contiguous spatial block of (batch, channel).
  T* slice(std::size_t b, std::size_t c) noexcept {
    return data_.data() + (b * shape_.c + c) * shape_.spatial();
  }
  const T* slice(std::size_t b, std::size_t c) const noexcept {
    return data_.data() + (b * shape_.c + c) * shape_.spatial();
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const noexcept {
    for (const T v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape5 shape_{};
  std::vector<T> data_;
};

/// Wraps a single volume as a 1 x 1 x d x m x n tensor.
template <class T, class U>
Tensor<T> from_volume(const Volume3D<U>& v) {
  const Extent3 e = v.extent();
  Tensor<T> t(Shape5{1, 1, e.d, e.m, e.n});
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<T>(v.storage()[i]);
  return t;
}

template <class T>
Volume3D<T> to_volume(const Tensor<T>& t, std::size_t b, std::size_t c) {
  const Shape5& s = t.shape();
  std::vector<T> vals(t.slice(b, c), t.slice(b, c) + s.spatial());
  return Volume3D<T>(s.extent(), std::move(vals));
}

}  // namespace wavecube::nn
