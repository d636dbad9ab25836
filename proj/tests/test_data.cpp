#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <unistd.h>

#include "oracles.hpp"
#include "wavecube/data/cubes.hpp"
#include "wavecube/data/nvol.hpp"
#include "wavecube/data/phantom.hpp"
#include "wavecube/data/swc.hpp"

using namespace wavecube;
using namespace wavecube::data;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("wavecube_test_data_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

template <class F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::io;
}

std::size_t count_ones(const LabelVolume& l) {
  std::size_t c = 0;
  for (auto v : l.storage()) c += v != 0;
  return c;
}

SwcMorphology segment(double x0, double y0, double z0, double x1, double y1, double z1, double r) {
  SwcMorphology m;
  m.nodes.push_back({1, 3, x0, y0, z0, r, -1});
  m.nodes.push_back({2, 3, x1, y1, z1, r, 1});
  return m;
}

// Brute-force lattice count for a straight tube along x of constant radius.
std::size_t tube_lattice_count(Extent3 e, double x0, double x1, double y, double z, double r) {
  std::size_t c = 0;
  for (std::size_t k = 0; k < e.d; ++k)
    for (std::size_t j = 0; j < e.m; ++j)
      for (std::size_t i = 0; i < e.n; ++i) {
        const double dx = std::max({x0 - double(i), double(i) - x1, 0.0});
        const double dy = double(j) - y, dz = double(k) - z;
        c += dx * dx + dy * dy + dz * dz <= r * r;
      }
  return c;
}

double capsule_volume(double r, double len) {
  return std::numbers::pi * r * r * len + 4.0 / 3.0 * std::numbers::pi * r * r * r;
}

}  // namespace

TEST(Nvol, FloatAndLabelRoundTrip) {
  TempDir dir("nvol");
  const auto img = oracle::random_volume<float>(Extent3{3, 5, 7}, 2);
  write_volume(dir.path / "a.nvol", img);
  EXPECT_EQ(read_volume<float>(dir.path / "a.nvol"), img);

  LabelVolume lab(Extent3{2, 3, 4});
  lab(1, 2, 3) = 1;
  write_volume(dir.path / "b.nvol", lab);
  EXPECT_EQ(read_volume<std::uint8_t>(dir.path / "b.nvol"), lab);
  EXPECT_EQ(read_volume_as_float(dir.path / "b.nvol")(1, 2, 3), 1.0f);
}

TEST(Nvol, HeaderLayout) {
  const auto buf = encode_volume(Volume3D<float>(Extent3{1, 2, 258}, 0.0f));
  ASSERT_EQ(buf.size(), nvol_header_bytes + 2 * 258 * 4);
  EXPECT_EQ(std::string(buf.begin(), buf.begin() + 4), "NVOL");
  EXPECT_EQ(buf[4], 1);
  EXPECT_EQ(buf[5], 1);
  EXPECT_EQ(static_cast<unsigned char>(buf[14]), 2u);  // 258 = 0x0102, little-endian
  EXPECT_EQ(static_cast<unsigned char>(buf[15]), 1u);
  EXPECT_EQ(encode_volume(LabelVolume(Extent3{1, 1, 1}))[5], 2);
}

TEST(Nvol, TruncatedPayloadAndBadMagic) {
  auto buf = encode_volume(Volume3D<float>(Extent3{2, 2, 2}, 1.0f));
  buf.pop_back();
  EXPECT_EQ(code_of([&] { decode_any(buf); }), Errc::truncated_payload);
  EXPECT_EQ(code_of([&] { decode_any(std::vector<char>(buf.begin(), buf.begin() + 10)); }), Errc::truncated_payload);
  buf[0] = 'X';
  EXPECT_EQ(code_of([&] { decode_any(buf); }), Errc::bad_magic);
  auto bad_dtype = encode_volume(LabelVolume(Extent3{1, 1, 1}));
  bad_dtype[5] = 9;
  EXPECT_EQ(code_of([&] { decode_any(bad_dtype); }), Errc::bad_magic);
}

TEST(Nvol, DtypeMismatchAndMissingFile) {
  TempDir dir("dtype");
  write_volume(dir.path / "l.nvol", LabelVolume(Extent3{1, 1, 1}));
  EXPECT_EQ(code_of([&] { read_volume<float>(dir.path / "l.nvol"); }), Errc::extent_mismatch);
  EXPECT_EQ(code_of([&] { read_volume<float>(dir.path / "missing.nvol"); }), Errc::io);
}

TEST(Swc, SingleRoot) {
  const auto m = parse_swc("1 2 10.0 20.0 5.0 1.5 -1\n");
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m.nodes[0].parent, -1);
  EXPECT_EQ(m.nodes[0].radius, 1.5);
  EXPECT_EQ(m.nodes[0].x, 10.0);
  EXPECT_EQ(m.nodes[0].z, 5.0);
}

TEST(Swc, CommentsOnlyIsEmpty) {
  EXPECT_TRUE(parse_swc("# a\n   # b\n\n").empty());
  EXPECT_TRUE(parse_swc("").empty());
}

TEST(Swc, DanglingParentNamesTheId) {
  try {
    parse_swc("1 2 0 0 0 1 -1\n2 2 1 0 0 1 99\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::dangling_parent);
    EXPECT_NE(std::string(e.what()).find("99"), std::string::npos) << e.what();
  }
}

TEST(Swc, StructuralErrors) {
  EXPECT_EQ(code_of([] { parse_swc("1 2 0 0 0 1 -1\n1 2 1 0 0 1 -1\n"); }), Errc::duplicate_id);
  EXPECT_EQ(code_of([] { parse_swc("1 2 0 0 0 1 2\n2 2 1 0 0 1 1\n"); }), Errc::cycle);
  EXPECT_EQ(code_of([] { parse_swc("1 2 0 0 0 1 1\n"); }), Errc::cycle);
  EXPECT_EQ(code_of([] { parse_swc("1 2 0 0 0 1 -5\n"); }), Errc::malformed_line);
  EXPECT_EQ(code_of([] { parse_swc("1 2 0 0 0 -1 -1\n"); }), Errc::malformed_line);
  EXPECT_EQ(code_of([] { parse_swc("1 2 0 0 0 1 -1 extra\n"); }), Errc::malformed_line);
}

TEST(Swc, MalformedLineReportsNumberAndContent) {
  try {
    parse_swc("# header\n1 2 0 0 0 1 -1\n2 2 zero 0 0 1 1\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::malformed_line);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("2 2 zero 0 0 1 1"), std::string::npos) << msg;
  }
}

TEST(Swc, SerializeRoundTrip) {
  PhantomConfig cfg;
  cfg.extent = {16, 32, 32};
  cfg.seed = 17;
  const auto m = random_tubes(cfg);
  ASSERT_FALSE(m.empty());
  EXPECT_EQ(parse_swc(serialize_swc(m)).nodes, m.nodes);
}

TEST(Rasterize, CentredSphereHas33Voxels) {
  SwcMorphology m;
  m.nodes.push_back({1, 1, 8.0, 8.0, 8.0, 2.0, -1});
  const auto lab = rasterize(m, Extent3{16, 16, 16});
  EXPECT_EQ(oracle::ball_lattice_count(16, 8, 8, 8, 2.0), 33u);
  EXPECT_EQ(count_ones(lab), 33u);
  EXPECT_EQ(lab(8, 8, 10), 1);
  EXPECT_EQ(lab(8, 9, 10), 0);
}

TEST(Rasterize, EmptyMorphologyGivesZeros) {
  EXPECT_EQ(count_ones(rasterize(SwcMorphology{}, Extent3{4, 5, 6})), 0u);
}

TEST(Rasterize, AxisSegmentMatchesLatticeOracle) {
  const Extent3 e{16, 64, 64};
  const double r = 1.5;
  for (const auto& [y, z] : {std::pair{32.0, 8.0}, std::pair{32.0, 8.5}, std::pair{32.5, 8.5}, std::pair{32.3, 7.8}}) {
    const auto lab = rasterize(segment(20, y, z, 40, y, z, r), e);
    EXPECT_EQ(count_ones(lab), tube_lattice_count(e, 20, 40, y, z, r)) << y << " " << z;
  }
  // Lattice-centred and cell-centred placements bracket the analytic volume widely.
  EXPECT_EQ(count_ones(rasterize(segment(20, 32, 8, 40, 32, 8, r), e)), 199u);
  EXPECT_EQ(count_ones(rasterize(segment(20, 32.5, 8.5, 40, 32.5, 8.5, r), e)), 92u);
}

TEST(Rasterize, AxisSegmentAveragedOverOffsetsMatchesCapsuleVolume) {
  const Extent3 e{16, 64, 64};
  const double r = 1.5, len = 20.0;
  double total = 0.0;
  std::size_t n = 0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      for (int c = 0; c < 4; ++c) {
        const double x0 = 20.0 + 0.25 * c, y = 32.0 + 0.25 * a, z = 8.0 + 0.25 * b;
        total += double(count_ones(rasterize(segment(x0, y, z, x0 + len, y, z, r), e)));
        ++n;
      }
  const double mean = total / double(n), want = capsule_volume(r, len);
  EXPECT_LE(std::abs(mean - want) / want, 0.15) << mean << " vs " << want;
}

TEST(Rasterize, LargerRadiusLabelsSuperset) {
  const Extent3 e{16, 32, 32};
  const auto thin = rasterize(segment(3, 4, 5, 25, 20, 11, 1.0), e);
  const auto thick = rasterize(segment(3, 4, 5, 25, 20, 11, 2.0), e);
  for (std::size_t i = 0; i < thin.size(); ++i)
    if (thin.storage()[i]) EXPECT_EQ(thick.storage()[i], 1);
  EXPECT_GT(count_ones(thick), count_ones(thin));
}

TEST(Rasterize, FrustumInterpolatesRadius) {
  SwcMorphology m;
  m.nodes.push_back({1, 3, 4.0, 16.0, 8.0, 0.5, -1});
  m.nodes.push_back({2, 3, 28.0, 16.0, 8.0, 3.0, 1});
  const auto lab = rasterize(m, Extent3{16, 32, 32});
  EXPECT_EQ(lab(8, 18, 26), 1);  // near the wide end, 2 off axis
  EXPECT_EQ(lab(8, 18, 6), 0);   // near the narrow end, 2 off axis
}

TEST(Rasterize, ClipsOutOfVolumeGeometry) {
  const auto lab = rasterize(segment(-10, 2, 2, 50, 2, 2, 1.0), Extent3{4, 4, 8});
  for (std::size_t x = 0; x < 8; ++x) EXPECT_EQ(lab(2, 2, x), 1);
  SwcMorphology far;
  far.nodes.push_back({1, 1, 100, 100, 100, 2, -1});
  EXPECT_EQ(count_ones(rasterize(far, Extent3{4, 4, 4})), 0u);
}

TEST(CutCubes, ExactSizeVolumeGivesOriginZero) {
  const Volume3D<float> img(Extent3{8, 8, 8}, 1.0f);
  const LabelVolume lab(Extent3{8, 8, 8}, 1);
  CutConfig cfg;
  cfg.cube = {8, 8, 8};
  const auto r = cut_cubes(img, lab, cfg);
  ASSERT_EQ(r.cubes.size(), 1u);
  EXPECT_EQ(r.cubes[0].origin, (Extent3{0, 0, 0}));
  EXPECT_FALSE(r.exhausted);
}

TEST(CutCubes, SameSeedSameOrigins) {
  PhantomConfig pc;
  pc.extent = {16, 48, 48};
  pc.seed = 3;
  const auto ph = generate_phantom(pc);
  CutConfig cfg;
  cfg.cube = {8, 16, 16};
  cfg.count = 6;
  cfg.seed = 99;
  const auto a = cut_cubes(ph.image, ph.labels, cfg), b = cut_cubes(ph.image, ph.labels, cfg);
  ASSERT_EQ(a.cubes.size(), b.cubes.size());
  for (std::size_t i = 0; i < a.cubes.size(); ++i) {
    EXPECT_EQ(a.cubes[i].origin, b.cubes[i].origin);
    EXPECT_EQ(a.cubes[i].image, crop(ph.image, a.cubes[i].origin, cfg.cube));
    EXPECT_EQ(a.cubes[i].label, crop(ph.labels, a.cubes[i].origin, cfg.cube));
    EXPECT_GE(foreground_fraction(a.cubes[i].label), cfg.min_foreground);
  }
}

TEST(CutCubes, ExhaustionIsReported) {
  const Volume3D<float> img(Extent3{8, 8, 8});
  const LabelVolume lab(Extent3{8, 8, 8});
  CutConfig cfg;
  cfg.cube = {4, 4, 4};
  cfg.count = 3;
  cfg.min_foreground = 1.0;
  const auto r = cut_cubes(img, lab, cfg);
  EXPECT_TRUE(r.cubes.empty());
  EXPECT_TRUE(r.exhausted);
  EXPECT_EQ(r.requested, 3u);
  EXPECT_EQ(r.attempts, 20u * 3u + 100u);
}

TEST(CutCubes, OriginsInBoundsForManySeeds) {
  const Extent3 e{10, 21, 13};
  const Volume3D<float> img(e, 1.0f);
  const LabelVolume lab(e, 1);
  CutConfig cfg;
  cfg.cube = {4, 8, 8};
  cfg.count = 2;
  const Extent3 padded = padded_extent(e, cfg.cube);
  EXPECT_EQ(padded, (Extent3{12, 24, 16}));
  for (std::uint64_t s = 0; s < 1000; ++s) {
    cfg.seed = s;
    cfg.min_foreground = 0.0;
    for (const auto& c : cut_cubes(img, lab, cfg).cubes) {
      ASSERT_LE(c.origin.d + cfg.cube.d, padded.d);
      ASSERT_LE(c.origin.m + cfg.cube.m, padded.m);
      ASSERT_LE(c.origin.n + cfg.cube.n, padded.n);
      ASSERT_EQ(c.image.extent(), cfg.cube);
    }
  }
}

TEST(CutCubes, ExtentMismatchRejected) {
  EXPECT_EQ(code_of([] { cut_cubes(Volume3D<float>(Extent3{4, 4, 4}), LabelVolume(Extent3{4, 4, 5}), CutConfig{}); }),
            Errc::extent_mismatch);
}

TEST(CubeDir, RoundTrip) {
  TempDir dir("cubes");
  PhantomConfig pc;
  pc.extent = {8, 32, 32};
  pc.noise_sigma = 0.2;
  const auto ph = generate_phantom(pc);
  CutConfig cfg;
  cfg.cube = {8, 16, 16};
  cfg.count = 3;
  cfg.source = "phantom seed 0";
  const auto cut = cut_cubes(ph.image, ph.labels, cfg);
  write_cube_dir(dir.path, cut.cubes);
  const auto back = read_cube_dir(dir.path);
  ASSERT_EQ(back.size(), cut.cubes.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].image, cut.cubes[i].image);
    EXPECT_EQ(back[i].label, cut.cubes[i].label);
    EXPECT_EQ(back[i].origin, cut.cubes[i].origin);
    EXPECT_EQ(back[i].source, "phantom seed 0");
  }
}

TEST(Phantom, CleanImageThresholdsToLabels) {
  PhantomConfig pc;
  pc.extent = {16, 64, 64};
  pc.seed = 5;
  const auto ph = generate_phantom(pc);
  EXPECT_GT(count_ones(ph.labels), 0u);
  for (std::size_t i = 0; i < ph.image.size(); ++i)
    ASSERT_EQ(ph.image.storage()[i] > 0.5f, ph.labels.storage()[i] != 0) << i;
  EXPECT_EQ(rasterize(ph.morphology, pc.extent), ph.labels);
}

TEST(Phantom, ZeroTubesIsBackground) {
  PhantomConfig pc;
  pc.extent = {8, 8, 8};
  pc.tubes = 0;
  pc.background = 0.25;
  const auto ph = generate_phantom(pc);
  EXPECT_EQ(count_ones(ph.labels), 0u);
  for (float v : ph.image.storage()) EXPECT_EQ(v, 0.25f);
}

TEST(Phantom, DeterministicPerSeed) {
  PhantomConfig pc;
  pc.extent = {16, 32, 32};
  pc.noise_sigma = 0.3;
  pc.impulse_fraction = 0.05;
  pc.seed = 11;
  const auto a = generate_phantom(pc), b = generate_phantom(pc);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.labels, b.labels);
  pc.seed = 12;
  EXPECT_NE(generate_phantom(pc).labels, a.labels);
}

TEST(Phantom, LabelsIgnoreNoiseSettings) {
  PhantomConfig pc;
  pc.extent = {16, 32, 32};
  pc.seed = 21;
  const auto clean = generate_phantom(pc);
  pc.noise_sigma = 0.5;
  pc.impulse_fraction = 0.2;
  pc.gaps_per_tube = 2;
  const auto noisy = generate_phantom(pc);
  EXPECT_EQ(noisy.labels, clean.labels);
  EXPECT_NE(noisy.image, clean.image);
}

TEST(Phantom, ImpulseFractionIsRespected) {
  PhantomConfig pc;
  pc.extent = {16, 64, 64};
  pc.tubes = 0;
  pc.impulse_fraction = 0.05;
  const auto ph = generate_phantom(pc);
  // Half of the impulses pick the background level and leave no trace.
  std::size_t hit = 0;
  for (float v : ph.image.storage()) hit += v == 1.0f;
  const double frac = double(hit) / double(ph.image.size());
  EXPECT_NEAR(frac, 0.025, 0.003);
}

TEST(Phantom, InvalidConfigRejected) {
  PhantomConfig pc;
  pc.radius_min = 3.0;
  pc.radius_max = 2.0;
  EXPECT_EQ(code_of([&] { generate_phantom(pc); }), Errc::invalid_argument);
  pc = PhantomConfig{};
  pc.impulse_fraction = 1.5;
  EXPECT_EQ(code_of([&] { generate_phantom(pc); }), Errc::invalid_argument);
  pc = PhantomConfig{};
  pc.nodes_per_tube = 1;
  EXPECT_EQ(code_of([&] { generate_phantom(pc); }), Errc::invalid_argument);
}

TEST(Phantom, TwoNodeTubesWithGaps) {
  PhantomConfig pc;
  pc.extent = {8, 16, 16};
  pc.nodes_per_tube = 2;
  pc.gaps_per_tube = 1;
  EXPECT_NO_THROW(generate_phantom(pc));
}
