#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "wavecube/data/nvol.hpp"
#include "wavecube/error.hpp"
#include "wavecube/volume.hpp"

namespace wavecube::data {

struct CubeRecord {
  Volume3D<float> image;
  LabelVolume label;
  Extent3 origin;
  std::string source;
};

struct CutResult {
  std::vector<CubeRecord> cubes;
  std::size_t requested = 0;
  std::size_t attempts = 0;
  bool exhausted = false;  // retry budget ran out before `requested` cubes were accepted
};

/// Rounds every extent up to a multiple of `cube`.
inline Extent3 padded_extent(Extent3 e, Extent3 cube) {
  auto up = [](std::size_t v, std::size_t q) { return (v + q - 1) / q * q; };
  return {up(e.d, cube.d), up(e.m, cube.m), up(e.n, cube.n)};
}

inline double foreground_fraction(const LabelVolume& l) {
  if (l.size() == 0) return 0.0;
  std::size_t fg = 0;
  for (const auto v : l.storage()) fg += v != 0;
  return static_cast<double>(fg) / static_cast<double>(l.size());
}

struct CutConfig {
  Extent3 cube{32, 128, 128};
  std::size_t count = 1;
  std::uint64_t seed = 0;
  double min_foreground = 0.001;
  std::size_t max_attempts = 0;  // 0: 20 draws per requested cube plus 100
  std::string source;
};

/// Draws cube origins uniformly over the zero-padded volume (padding added at
/// the high end), keeping cubes whose label foreground fraction reaches
/// `min_foreground`.
inline CutResult cut_cubes(const Volume3D<float>& image, const LabelVolume& labels, const CutConfig& cfg) {
  if (image.extent() != labels.extent())
    throw Error(Errc::extent_mismatch, "image " + image.extent().str() + " vs labels " + labels.extent().str());
  if (cfg.cube.size() == 0) throw Error(Errc::invalid_argument, "cube shape must be positive");
  if (image.size() == 0) throw Error(Errc::invalid_argument, "cannot cut cubes from an empty volume");
  const Extent3 padded = padded_extent(image.extent(), cfg.cube);
  CutResult res;
  res.requested = cfg.count;
  const std::size_t budget = cfg.max_attempts ? cfg.max_attempts : 20 * cfg.count + 100;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> oz(0, padded.d - cfg.cube.d), oy(0, padded.m - cfg.cube.m),
      ox(0, padded.n - cfg.cube.n);
  while (res.cubes.size() < cfg.count && res.attempts < budget) {
    ++res.attempts;
    const Extent3 origin{oz(rng), oy(rng), ox(rng)};
    LabelVolume lab = crop(labels, origin, cfg.cube);
    if (foreground_fraction(lab) < cfg.min_foreground) continue;
    res.cubes.push_back({crop(image, origin, cfg.cube), std::move(lab), origin, cfg.source});
  }
  res.exhausted = res.cubes.size() < cfg.count;
  return res;
}

// A cube directory holds <stem>_image.nvol / <stem>_label.nvol pairs and an
// index.tsv listing stem, origin and source per cube.

inline void write_cube_dir(const std::filesystem::path& dir, const std::vector<CubeRecord>& cubes) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::io, "cannot create " + dir.string() + ": " + ec.message());
  std::ofstream index(dir / "index.tsv", std::ios::trunc);
  if (!index) throw Error(Errc::io, "cannot write " + (dir / "index.tsv").string());
  index << "stem\toz\toy\tox\tsource\n";
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    std::ostringstream stem;
    stem << "cube_" << std::setw(5) << std::setfill('0') << i;
    write_volume(dir / (stem.str() + "_image.nvol"), cubes[i].image);
    write_volume(dir / (stem.str() + "_label.nvol"), cubes[i].label);
    const Extent3& o = cubes[i].origin;
    index << stem.str() << '\t' << o.d << '\t' << o.m << '\t' << o.n << '\t' << cubes[i].source << '\n';
  }
  if (!index) throw Error(Errc::io, "write failed for " + (dir / "index.tsv").string());
}

inline std::vector<CubeRecord> read_cube_dir(const std::filesystem::path& dir) {
  std::ifstream index(dir / "index.tsv");
  if (!index) throw Error(Errc::io, "cannot open " + (dir / "index.tsv").string());
  std::vector<CubeRecord> out;
  std::string line;
  std::getline(index, line);  // header
  std::size_t lineno = 1;
  while (std::getline(index, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string stem;
    CubeRecord rec;
    if (!(ls >> stem >> rec.origin.d >> rec.origin.m >> rec.origin.n))
      throw Error(Errc::malformed_line, (dir / "index.tsv").string() + " line " + std::to_string(lineno));
    std::getline(ls >> std::ws, rec.source);
    rec.image = read_volume_as_float(dir / (stem + "_image.nvol"));
    rec.label = read_volume<std::uint8_t>(dir / (stem + "_label.nvol"));
    if (rec.image.extent() != rec.label.extent())
      throw Error(Errc::extent_mismatch, stem + ": image and label extents differ");
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace wavecube::data
