#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "wavecube/error.hpp"
#include "wavecube/volume.hpp"

namespace wavecube::data {

struct SwcNode {
  long id = 0;
  int type = 0;
  double x = 0, y = 0, z = 0;  // voxel units, x along width, z along depth
  double radius = 0;
  long parent = -1;

  bool operator==(const SwcNode&) const = default;
};

struct SwcMorphology {
  std::vector<SwcNode> nodes;

  bool empty() const noexcept { return nodes.empty(); }
  std::size_t size() const noexcept { return nodes.size(); }
};

namespace detail {

// Checks id uniqueness, parent existence and acyclicity.
inline void check_tree(const SwcMorphology& m, const std::vector<std::size_t>& line_of) {
  std::unordered_map<long, std::size_t> at;
  for (std::size_t i = 0; i < m.nodes.size(); ++i) {
    if (!at.emplace(m.nodes[i].id, i).second)
      throw Error(Errc::duplicate_id, "node id " + std::to_string(m.nodes[i].id) + " repeated on line " +
                                          std::to_string(line_of[i]));
  }
  for (std::size_t i = 0; i < m.nodes.size(); ++i) {
    const long p = m.nodes[i].parent;
    if (p != -1 && !at.count(p))
      throw Error(Errc::dangling_parent, "node " + std::to_string(m.nodes[i].id) +
                                             " names missing parent id " + std::to_string(p));
  }
  // 0 = unvisited, 1 = on the current walk, 2 = known to reach a root.
  std::vector<std::uint8_t> state(m.nodes.size(), 0);
  std::vector<std::size_t> walk;
  for (std::size_t start = 0; start < m.nodes.size(); ++start) {
    walk.clear();
    std::size_t i = start;
    while (state[i] == 0) {
      state[i] = 1;
      walk.push_back(i);
      const long p = m.nodes[i].parent;
      if (p == -1) break;
      i = at.at(p);
      if (state[i] == 1)
        throw Error(Errc::cycle, "parent chain through node " + std::to_string(m.nodes[i].id) +
                                     " loops back on itself");
    }
    for (const std::size_t w : walk) state[w] = 2;
  }
}

}  // namespace detail

/// Parses the 7-column SWC text format: id type x y z radius parent.
inline SwcMorphology parse_swc(std::string_view text) {
  SwcMorphology m;
  std::vector<std::size_t> line_of;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    SwcNode n;
    std::string extra;
    if (!(ls >> n.id >> n.type >> n.x >> n.y >> n.z >> n.radius >> n.parent) || (ls >> extra))
      throw Error(Errc::malformed_line, "line " + std::to_string(lineno) + ": '" + line +
                                            "' (expected id type x y z radius parent)");
    if (!std::isfinite(n.x) || !std::isfinite(n.y) || !std::isfinite(n.z) || !std::isfinite(n.radius) ||
        n.radius < 0.0)
      throw Error(Errc::malformed_line, "line " + std::to_string(lineno) + ": non-finite or negative value");
    if (n.parent < 0 && n.parent != -1)
      throw Error(Errc::malformed_line, "line " + std::to_string(lineno) + ": parent must be -1 or an id");
    m.nodes.push_back(n);
    line_of.push_back(lineno);
  }
  detail::check_tree(m, line_of);
  return m;
}

inline std::string serialize_swc(const SwcMorphology& m) {
  std::ostringstream os;
  os << "# id type x y z radius parent\n" << std::setprecision(17);
  for (const auto& n : m.nodes)
    os << n.id << ' ' << n.type << ' ' << n.x << ' ' << n.y << ' ' << n.z << ' ' << n.radius << ' '
       << n.parent << '\n';
  return os.str();
}

/// Per-axis multipliers applied to SWC coordinates before rasterizing, for
/// traces recorded in physical units on anisotropic grids. Radii are used as given.
struct SwcScale {
  double x = 1.0, y = 1.0, z = 1.0;
};

namespace detail {

struct P3 {
  double x, y, z;
};

inline double dot(P3 a, P3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline P3 sub(P3 a, P3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }

// Smallest value of |p - s(t)| - r(t) over t in [0, 1], where s runs from a to b
// and r from ra to rb linearly. The function is convex in t, so its minimum
// sits at the stationary point (when inside the segment) or an endpoint.
inline double capsule_margin(P3 p, P3 a, P3 b, double ra, double rb) {
  const P3 u = sub(b, a), w = sub(p, a);
  const double len2 = dot(u, u);
  auto f = [&](double t) {
    const P3 q{w.x - t * u.x, w.y - t * u.y, w.z - t * u.z};
    return std::sqrt(dot(q, q)) - (ra + t * (rb - ra));
  };
  double best = std::min(f(0.0), f(1.0));
  if (len2 > 0.0) {
    const double len = std::sqrt(len2);
    const double dr = rb - ra;
    if (std::abs(dr) < len) {
      const double t0 = dot(w, u) / len2;
      const double h2 = std::max(0.0, dot(w, w) - t0 * t0 * len2);
      const double t = t0 + dr * std::sqrt(h2) / (len * std::sqrt(len2 - dr * dr));
      best = std::min(best, f(std::clamp(t, 0.0, 1.0)));
    }
  }
  return best;
}

}  // namespace detail

/// Voxel (z, y, x) is labelled when its centre lies within r(t) of some point
/// s(t) on a parent-child segment (radii interpolated linearly), or within the
/// radius of a node that has neither parent nor children.
inline LabelVolume rasterize(const SwcMorphology& m, Extent3 e, SwcScale scale = {}) {
  LabelVolume out(e);
  if (m.empty() || e.size() == 0) return out;
  std::unordered_map<long, std::size_t> at;
  for (std::size_t i = 0; i < m.nodes.size(); ++i) at.emplace(m.nodes[i].id, i);
  std::vector<bool> has_child(m.nodes.size(), false);
  for (const auto& n : m.nodes)
    if (n.parent != -1) has_child[at.at(n.parent)] = true;

  auto pos = [&](const SwcNode& n) { return detail::P3{n.x * scale.x, n.y * scale.y, n.z * scale.z}; };
  constexpr double eps = 1e-9;

  // Visits the clipped voxel box around [lo, hi] and labels voxels where `inside` holds.
  auto sweep = [&](detail::P3 lo, detail::P3 hi, auto&& inside) {
    auto range = [](double a, double b, std::size_t n, std::size_t& first, std::size_t& last) {
      const double f = std::ceil(a - eps), l = std::floor(b + eps);
      if (l < 0.0 || f > static_cast<double>(n) - 1.0 || f > l) return false;
      first = static_cast<std::size_t>(std::max(0.0, f));
      last = static_cast<std::size_t>(std::min(static_cast<double>(n) - 1.0, l));
      return true;
    };
    std::size_t z0, z1, y0, y1, x0, x1;
    if (!range(lo.z, hi.z, e.d, z0, z1) || !range(lo.y, hi.y, e.m, y0, y1) || !range(lo.x, hi.x, e.n, x0, x1))
      return;
    for (std::size_t z = z0; z <= z1; ++z)
      for (std::size_t y = y0; y <= y1; ++y)
        for (std::size_t x = x0; x <= x1; ++x)
          if (!out(z, y, x) && inside(detail::P3{double(x), double(y), double(z)})) out(z, y, x) = 1;
  };

  for (std::size_t i = 0; i < m.nodes.size(); ++i) {
    const SwcNode& n = m.nodes[i];
    const detail::P3 c = pos(n);
    if (n.parent == -1) {
      if (has_child[i]) continue;
      const double r = n.radius;
      sweep({c.x - r, c.y - r, c.z - r}, {c.x + r, c.y + r, c.z + r}, [&](detail::P3 p) {
        const detail::P3 d = detail::sub(p, c);
        return detail::dot(d, d) <= r * r + eps;
      });
      continue;
    }
    const SwcNode& par = m.nodes[at.at(n.parent)];
    const detail::P3 a = pos(par);
    const double r = std::max(n.radius, par.radius);
    const detail::P3 lo{std::min(a.x, c.x) - r, std::min(a.y, c.y) - r, std::min(a.z, c.z) - r};
    const detail::P3 hi{std::max(a.x, c.x) + r, std::max(a.y, c.y) + r, std::max(a.z, c.z) + r};
    sweep(lo, hi, [&](detail::P3 p) { return detail::capsule_margin(p, a, c, par.radius, n.radius) <= eps; });
  }
  return out;
}

}  // namespace wavecube::data
