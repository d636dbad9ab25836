#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>

#include "wavecube/data/swc.hpp"
#include "wavecube/error.hpp"
#include "wavecube/volume.hpp"

namespace wavecube::data {

struct PhantomConfig {
  Extent3 extent{32, 128, 128};
  std::size_t tubes = 4;
  double radius_min = 1.0;
  double radius_max = 2.5;
  std::size_t nodes_per_tube = 16;
  double foreground = 1.0;
  double background = 0.0;
  double noise_sigma = 0.0;
  double impulse_fraction = 0.0;
  std::size_t gaps_per_tube = 0;  // image-only breaks along each tube
  std::uint64_t seed = 0;

  void validate() const {
    if (extent.size() == 0) throw Error(Errc::invalid_argument, "phantom extent must be positive");
    if (!(radius_min > 0.0) || !(radius_max >= radius_min))
      throw Error(Errc::invalid_argument, "need 0 < radius_min <= radius_max");
    if (!(noise_sigma >= 0.0)) throw Error(Errc::invalid_argument, "noise sigma must be >= 0");
    if (!(impulse_fraction >= 0.0 && impulse_fraction <= 1.0))
      throw Error(Errc::invalid_argument, "impulse fraction must lie in [0, 1]");
    if (nodes_per_tube < 2) throw Error(Errc::invalid_argument, "a tube needs at least two nodes");
  }
};

struct Phantom {
  Volume3D<float> image;
  LabelVolume labels;
  SwcMorphology morphology;
};

namespace detail {

// Independent streams so that geometry does not depend on noise settings.
inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t which) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(which)};
  return std::mt19937_64(seq);
}

}  // namespace detail

/// Random smooth polylines traced into an SWC morphology. Steps favour the
/// long axes so tubes stay inside thin volumes for longer.
inline SwcMorphology random_tubes(const PhantomConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng = detail::stream(cfg.seed, 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Extent3 e = cfg.extent;
  const double span[3] = {double(e.n), double(e.m), double(e.d)};  // x, y, z
  const double longest = std::max({span[0], span[1], span[2]});
  const double step = longest / static_cast<double>(cfg.nodes_per_tube - 1) * 1.25;

  SwcMorphology m;
  long next_id = 1;
  for (std::size_t t = 0; t < cfg.tubes; ++t) {
    double p[3], dir[3];
    for (int a = 0; a < 3; ++a) p[a] = unit(rng) * (span[a] - 1.0);
    auto normalise = [&] {
      double len = 0.0;
      for (int a = 0; a < 3; ++a) len += dir[a] * dir[a];
      len = std::sqrt(len);
      if (len == 0.0) {
        dir[0] = 1.0;
        len = 1.0;
      }
      for (int a = 0; a < 3; ++a) dir[a] /= len;
    };
    for (int a = 0; a < 3; ++a) dir[a] = gauss(rng) * span[a] / longest;
    normalise();
    // Start at one end so the tube crosses the volume rather than leaving at once.
    for (int a = 0; a < 3; ++a)
      p[a] = std::clamp(p[a] - dir[a] * step * 0.5 * double(cfg.nodes_per_tube - 1), 0.0, span[a] - 1.0);
    const double r0 = cfg.radius_min + unit(rng) * (cfg.radius_max - cfg.radius_min);
    long parent = -1;
    for (std::size_t k = 0; k < cfg.nodes_per_tube; ++k) {
      const double r = std::clamp(r0 * (1.0 + 0.1 * gauss(rng)), cfg.radius_min, cfg.radius_max);
      m.nodes.push_back({next_id, 3, p[0], p[1], p[2], r, parent});
      parent = next_id++;
      for (int a = 0; a < 3; ++a) dir[a] += 0.35 * gauss(rng) * span[a] / longest;
      normalise();
      for (int a = 0; a < 3; ++a) p[a] += step * dir[a];
    }
  }
  return m;
}

/// Tubular phantom: labels are the rasterized tubes, the image composites
/// foreground over background, then optional gaps, Gaussian noise and
/// impulse noise (voxels replaced by the foreground or background level).
inline Phantom generate_phantom(const PhantomConfig& cfg) {
  cfg.validate();
  Phantom ph;
  ph.morphology = random_tubes(cfg);
  ph.labels = rasterize(ph.morphology, cfg.extent);
  ph.image = Volume3D<float>(cfg.extent, static_cast<float>(cfg.background));
  const float fg = static_cast<float>(cfg.foreground), bg = static_cast<float>(cfg.background);
  for (std::size_t i = 0; i < ph.image.size(); ++i)
    if (ph.labels.storage()[i]) ph.image.storage()[i] = fg;

  if (cfg.gaps_per_tube > 0 && !ph.morphology.empty()) {
    std::mt19937_64 rng = detail::stream(cfg.seed, 2);
    const auto& nodes = ph.morphology.nodes;
    for (std::size_t t = 0; t < cfg.tubes; ++t) {
      const std::size_t base = t * cfg.nodes_per_tube;
      // Interior nodes only, so a gap never sits on a tube end.
      std::uniform_int_distribution<std::size_t> pick(base + 1, base + std::max<std::size_t>(cfg.nodes_per_tube, 3) - 2);
      for (std::size_t g = 0; g < cfg.gaps_per_tube; ++g) {
        const SwcNode& n = nodes[cfg.nodes_per_tube > 2 ? pick(rng) : base];
        const double r = n.radius + 1.0;
        const Extent3& e = cfg.extent;
        for (std::size_t z = 0; z < e.d; ++z)
          for (std::size_t y = 0; y < e.m; ++y)
            for (std::size_t x = 0; x < e.n; ++x) {
              const double dz = double(z) - n.z, dy = double(y) - n.y, dx = double(x) - n.x;
              if (dz * dz + dy * dy + dx * dx <= r * r) ph.image(z, y, x) = bg;
            }
      }
    }
  }

  std::mt19937_64 noise = detail::stream(cfg.seed, 3);
  if (cfg.noise_sigma > 0.0) {
    std::normal_distribution<double> g(0.0, cfg.noise_sigma);
    for (float& v : ph.image.storage()) v = static_cast<float>(v + g(noise));
  }
  if (cfg.impulse_fraction > 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (float& v : ph.image.storage()) {
      const double hit = u(noise), level = u(noise);
      if (hit < cfg.impulse_fraction) v = level < 0.5 ? fg : bg;
    }
  }
  return ph;
}

}  // namespace wavecube::data
