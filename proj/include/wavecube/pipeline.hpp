#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <map>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "wavecube/data/cubes.hpp"
#include "wavecube/error.hpp"
#include "wavecube/nn/tensor.hpp"
#include "wavecube/parallel.hpp"
#include "wavecube/volume.hpp"

namespace wavecube {

struct CubeGrid {
  Extent3 original;
  Extent3 padded;
  Extent3 cube;
  std::vector<Extent3> origins;  // z-major, then y, then x
};

template <class T>
struct PlacedCube {
  Extent3 origin;
  Volume3D<T> values;
};

template <class T>
struct Partition {
  CubeGrid grid;
  std::vector<PlacedCube<T>> cubes;
};

inline CubeGrid make_grid(Extent3 original, Extent3 cube) {
  if (cube.size() == 0) throw Error(Errc::invalid_argument, "cube shape must be positive");
  CubeGrid g;
  g.original = original;
  g.cube = cube;
  g.padded = data::padded_extent(original, cube);
  for (std::size_t z = 0; z < g.padded.d; z += cube.d)
    for (std::size_t y = 0; y < g.padded.m; y += cube.m)
      for (std::size_t x = 0; x < g.padded.n; x += cube.n) g.origins.push_back({z, y, x});
  return g;
}

/// Zero-pads `v` at the high end to cube multiples and cuts it into
/// non-overlapping cubes.
template <class T>
Partition<T> partition(const Volume3D<T>& v, Extent3 cube) {
  Partition<T> p;
  p.grid = make_grid(v.extent(), cube);
  p.cubes.reserve(p.grid.origins.size());
  for (const Extent3& o : p.grid.origins) p.cubes.push_back({o, crop(v, o, cube)});
  return p;
}

/// Places each cube at its origin (in any order) and crops the padding.
template <class T>
Volume3D<T> assemble(const CubeGrid& grid, const std::vector<PlacedCube<T>>& cubes) {
  if (cubes.size() != grid.origins.size())
    throw Error(Errc::shape_mismatch, "grid has " + std::to_string(grid.origins.size()) + " cubes, got " +
                                          std::to_string(cubes.size()));
  auto key = [](Extent3 o) { return std::tuple{o.d, o.m, o.n}; };
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, bool> seen;
  for (const Extent3& o : grid.origins) seen.emplace(key(o), false);
  Volume3D<T> out(grid.original);
  for (const auto& c : cubes) {
    auto it = seen.find(key(c.origin));
    if (it == seen.end())
      throw Error(Errc::shape_mismatch, "cube origin " + c.origin.str() + " is not on the grid");
    if (it->second) throw Error(Errc::shape_mismatch, "cube origin " + c.origin.str() + " given twice");
    if (c.values.extent() != grid.cube)
      throw Error(Errc::shape_mismatch, "cube at " + c.origin.str() + " is " + c.values.extent().str() +
                                            ", grid cube is " + grid.cube.str());
    it->second = true;
    paste(out, c.origin, c.values);
  }
  return out;
}

/// Per-voxel argmax over class channels of batch item `b`; ties keep the
/// lower class index, so equal logits go to background.
template <class T>
LabelVolume argmax_labels(const nn::Tensor<T>& logits, std::size_t b = 0) {
  const nn::Shape5& s = logits.shape();
  LabelVolume out(s.extent());
  for (std::size_t i = 0; i < s.spatial(); ++i) {
    std::size_t best = 0;
    T bv = logits.slice(b, 0)[i];
    for (std::size_t c = 1; c < s.c; ++c) {
      const T v = logits.slice(b, c)[i];
      if (v > bv) {
        bv = v;
        best = c;
      }
    }
    out.storage()[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

struct SegmentOptions {
  std::size_t workers = 1;
  bool keep_logits = false;
  std::string provenance;
};

struct SegmentationResult {
  LabelVolume labels;
  std::vector<PlacedCube<float>> logits;  // foreground-minus-background margin per cube, if kept
  std::string provenance;
};

/// Tiles `v`, runs `net.infer` per cube and reassembles the argmax labels.
/// With workers > 1 cubes run concurrently, each single-threaded inside; the
/// result does not depend on the worker count.
template <class Net>
SegmentationResult segment_volume(const Volume3D<float>& v, Net& net, Extent3 cube,
                                  const SegmentOptions& opt = {}) {
  const Partition<float> part = partition(v, cube);
  const std::size_t n = part.cubes.size();
  std::vector<PlacedCube<std::uint8_t>> labels(n);
  std::vector<PlacedCube<float>> margins(opt.keep_logits ? n : 0);

  auto run = [&](std::size_t i) {
    const auto& c = part.cubes[i];
    try {
      const auto logits = net.infer(nn::from_volume<float>(c.values));
      labels[i] = {c.origin, argmax_labels(logits)};
      if (opt.keep_logits) {
        Volume3D<float> m(c.values.extent());
        for (std::size_t k = 0; k < m.size(); ++k)
          m.storage()[k] = static_cast<float>(logits.slice(0, 1)[k] - logits.slice(0, 0)[k]);
        margins[i] = {c.origin, std::move(m)};
      }
    } catch (const Error& e) {
      throw Error(e.code(), "cube at origin " + c.origin.str() + ": " + e.message());
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(opt.workers, 1, std::max<std::size_t>(1, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        detail::in_parallel_region = true;
        try {
          for (std::size_t i = next++; i < n; i = next++) run(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  SegmentationResult res;
  res.labels = assemble(part.grid, labels);
  res.logits = std::move(margins);
  res.provenance = opt.provenance;
  return res;
}

struct IoU {
  double background = 0.0;
  double foreground = 0.0;
  double mean = 0.0;
};

/// Pools intersection and union counts over any number of volume pairs.
/// Any nonzero label counts as foreground; a class absent from every pair scores 1.
class IoUAccumulator {
 public:
  void add(const LabelVolume& pred, const LabelVolume& truth) {
    if (pred.extent() != truth.extent())
      throw Error(Errc::extent_mismatch, "prediction " + pred.extent().str() + " vs truth " + truth.extent().str());
    const auto& p = pred.storage();
    const auto& t = truth.storage();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const bool a = p[i] != 0, b = t[i] != 0;
      inter_[1] += a && b;
      union_[1] += a || b;
      inter_[0] += !a && !b;
      union_[0] += !a || !b;
    }
  }

  IoU result() const {
    auto ratio = [](std::size_t i, std::size_t u) {
      return u == 0 ? 1.0 : static_cast<double>(i) / static_cast<double>(u);
    };
    IoU r;
    r.background = ratio(inter_[0], union_[0]);
    r.foreground = ratio(inter_[1], union_[1]);
    r.mean = 0.5 * (r.background + r.foreground);
    return r;
  }

 private:
  std::size_t inter_[2] = {0, 0};
  std::size_t union_[2] = {0, 0};
};

inline IoU iou(const LabelVolume& pred, const LabelVolume& truth) {
  IoUAccumulator acc;
  acc.add(pred, truth);
  return acc.result();
}

}  // namespace wavecube
