// Acceptance run: one PASS/FAIL line per criterion, plus a TSV report.
//
//   acceptance [--report PATH] [--only N[,N...]]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "wavecube/wavecube.hpp"

using namespace wavecube;
using namespace wavecube::nn;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 3) {
  std::ostringstream s;
  s << std::setprecision(prec) << v;
  return s.str();
}

// Extra rows for the report, filled by criterion 6.
std::vector<std::string> g_table;

const std::vector<std::string> kWavelets{"haar", "db2", "db3", "db4", "ch2.2", "ch4.4"};

// ---- 1 ---------------------------------------------------------------------

template <class T>
double reconstruction_error(const Volume3D<T>& x, const FilterBank& bank) {
  const Volume3D<T> y = idwt3(dwt3(x, bank), bank);
  return oracle::max_abs_diff(x.storage(), y.storage()) / oracle::max_abs(x.storage());
}

Verdict perfect_reconstruction() {
  const auto t0 = Clock::now();
  double worst32 = 0.0, worst64 = 0.0;
  std::string where32, where64;
  std::uint64_t seed = 1;
  std::size_t checked = 0;
  std::vector<std::string> too_small;
  bool rejected = true;
  for (const auto& name : kWavelets) {
    const FilterBank bank = builtin_bank(name);
    for (const Extent3 e : {Extent3{8, 8, 8}, Extent3{16, 32, 32}, Extent3{32, 128, 128}})
      for (int i = 0; i < 20; ++i, ++seed) {
        // dwt3 requires every side >= filter length and must raise TooSmall otherwise.
        if (e.d < bank.length()) {
          try {
            (void)dwt3(oracle::random_volume<double>(e, seed), bank);
            rejected = false;
          } catch (const Error& err) {
            rejected &= err.code() == Errc::too_small;
          }
          if (i == 0) too_small.push_back(name + " " + e.str());
          continue;
        }
        ++checked;
        const double e32 = reconstruction_error(oracle::random_volume<float>(e, seed), bank);
        const double e64 = reconstruction_error(oracle::random_volume<double>(e, seed), bank);
        if (e32 > worst32) worst32 = e32, where32 = name + " " + e.str();
        if (e64 > worst64) worst64 = e64, where64 = name + " " + e.str();
      }
  }
  const double secs = seconds_since(t0);
  std::string skipped;
  for (const auto& t : too_small) skipped += (skipped.empty() ? "" : ", ") + t;
  return {worst32 <= 1e-5 && worst64 <= 1e-10 && secs < 60.0 && rejected,
          std::to_string(checked) + " volumes; " +
              (skipped.empty() ? "" : skipped + " below filter length, TooSmall " +
                                          (rejected ? "raised" : "NOT raised") + "; ") +
              "max rel err f32 " + fmt(worst32) + " (" + where32 + ") <= 1e-5, f64 " + fmt(worst64) + " (" + where64 +
              ") <= 1e-10, " + fmt(secs) + " s < 60 s"};
}

// ---- 2 ---------------------------------------------------------------------

// Sign patterns of the printed 3D Haar filters, each scaled by 1/(2 sqrt 2),
// indexed [slice][row][column].
constexpr int kHaarSigns[8][2][2][2] = {
    {{{1, 1}, {1, 1}}, {{1, 1}, {1, 1}}},          // lll
    {{{1, -1}, {1, -1}}, {{1, -1}, {1, -1}}},      // llh
    {{{1, 1}, {-1, -1}}, {{1, 1}, {-1, -1}}},      // lhl
    {{{1, -1}, {-1, 1}}, {{1, -1}, {-1, 1}}},      // lhh
    {{{1, 1}, {1, 1}}, {{-1, -1}, {-1, -1}}},      // hll
    {{{1, -1}, {1, -1}}, {{-1, 1}, {-1, 1}}},      // hlh
    {{{1, 1}, {-1, -1}}, {{-1, -1}, {1, 1}}},      // hhl
    {{{1, -1}, {-1, 1}}, {{-1, 1}, {1, -1}}},      // hhh
};

Verdict haar_anchor() {
  const FilterBank haar = builtin_bank("haar");
  Volume3D<double> ones(Extent3{8, 8, 8});
  for (auto& v : ones.storage()) v = 1.0;
  const auto s = dwt3(ones, haar);
  const double root8 = 2.0 * std::numbers::sqrt2;
  double low_err = 0.0, high_max = 0.0;
  for (const double v : s[0].storage()) low_err = std::max(low_err, std::abs(v - root8));
  for (std::size_t t = 1; t < 8; ++t) high_max = std::max(high_max, oracle::max_abs(s[t].storage()));

  const auto f = tensor_filters(haar, FilterRole::decomposition);
  const double scale = 1.0 / root8;
  double filter_err = 0.0;
  for (std::size_t t = 0; t < 8; ++t)
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t k = 0; k < 2; ++k)
          filter_err = std::max(filter_err, std::abs(f[t](i, j, k) - scale * kHaarSigns[t][i][j][k]));

  return {low_err <= 1e-12 && high_max <= 1e-12 && filter_err <= 1e-12,
          "|lll - 2sqrt2| " + fmt(low_err) + ", max |high| " + fmt(high_max) + ", 3D filter entry err " +
              fmt(filter_err) + " (all <= 1e-12)"};
}

// ---- 3 ---------------------------------------------------------------------

Verdict gradients() {
  const auto t0 = Clock::now();
  constexpr double tol = 2e-2;
  double worst = 0.0;
  std::string where;
  std::size_t checked = 0;
  auto record = [&](const std::string& kind, const gradcheck::Result& r) {
    checked += r.checked;
    if (r.worst > worst) worst = r.worst, where = kind + " " + r.where;
  };
  using V = std::vector<Var>;
  auto rnd = [](Shape5 s, std::uint64_t seed) { return oracle::random_tensor<double>(s, seed); };

  record("conv3d", gradcheck::check({rnd({2, 2, 4, 5, 4}, 20), rnd({3, 2, 3, 3, 3}, 21), rnd({1, 3, 1, 1, 1}, 22)},
                                    [](Tape<double>& t, const V& v) { return conv3d(t, v[0], v[1], v[2]); }, 60));
  record("conv3d/stride2",
         gradcheck::check({rnd({1, 2, 4, 4, 6}, 25), rnd({2, 2, 2, 2, 2}, 26), rnd({1, 2, 1, 1, 1}, 27)},
                          [](Tape<double>& t, const V& v) { return conv3d(t, v[0], v[1], v[2], 2, 0); }, 40));
  record("deconv2", gradcheck::check({rnd({2, 3, 2, 3, 2}, 28), rnd({2, 3, 2, 2, 2}, 29), rnd({1, 2, 1, 1, 1}, 30)},
                                     [](Tape<double>& t, const V& v) { return deconv2(t, v[0], v[1], v[2]); }, 40));
  record("maxpool/unpool", gradcheck::check({rnd({1, 2, 4, 4, 4}, 31)},
                                            [](Tape<double>& t, const V& v) {
                                              const auto p = maxpool2(t, v[0]);
                                              return maxunpool2(t, relu(t, p.out), p.indices, p.input_extent);
                                            },
                                            128));
  record("interpolate2", gradcheck::check({rnd({1, 2, 2, 3, 4}, 32)},
                                          [](Tape<double>& t, const V& v) { return interpolate2(t, v[0]); }, 48));
  for (const Mode mode : {Mode::train, Mode::eval}) {
    Parameter<double> rm("m", rnd({1, 3, 1, 1, 1}, 33), false);
    Parameter<double> rv("v", Tensor<double>({1, 3, 1, 1, 1}, 1.5), false);
    record(mode == Mode::train ? "batchnorm/train" : "batchnorm/eval",
           gradcheck::check({rnd({2, 3, 2, 3, 2}, 34), rnd({1, 3, 1, 1, 1}, 35), rnd({1, 3, 1, 1, 1}, 36)},
                            [&](Tape<double>& t, const V& v) { return batchnorm(t, v[0], v[1], v[2], rm, rv, mode); },
                            40));
  }
  record("relu/concat/slice/shrink",
         gradcheck::check({rnd({1, 2, 2, 2, 4}, 37), rnd({1, 3, 2, 2, 4}, 38)},
                          [](Tape<double>& t, const V& v) {
                            const Var c = concat_channels(t, relu(t, v[0]), hard_shrink(t, v[1], 0.25));
                            return channel_slice(t, c, 1, 4);
                          },
                          40));
  for (const auto& name : kWavelets) {
    const FilterBank b = builtin_bank(name);
    const std::size_t n = std::max<std::size_t>(4, b.length() + b.length() % 2);
    record("dwt/idwt " + name,
           gradcheck::check({rnd({1, 2, n, n, n}, 39), rnd({1, 2, n / 2, n / 2, n / 2}, 40),
                             rnd({1, 14, n / 2, n / 2, n / 2}, 41)},
                            [&](Tape<double>& t, const V& v) {
                              const auto d = dwt_layer(t, v[0], b);
                              return concat_channels(t, idwt_layer(t, d.low, d.high, b),
                                                     idwt_layer(t, v[1], v[2], b));
                            },
                            40));
  }
  {
    std::vector<std::uint8_t> labels(16);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = (i * 7) % 3 == 0;
    const std::vector<double> w{1.0, 5.0};
    record("weighted_ce", gradcheck::check({rnd({2, 2, 2, 2, 2}, 42)},
                                           [&](Tape<double>& t, const V& v) {
                                             return weighted_cross_entropy(t, v[0], labels, w);
                                           },
                                           32));
  }
  Network<double> net(NetworkSpec::standard(DualStructure::DIDn, "haar"), 21);
  record("DIDn", gradcheck::check_network(net, rnd({1, 1, 16, 16, 16}, 8), 60));

  const double secs = seconds_since(t0);
  return {worst <= tol && secs < 300.0, std::to_string(checked) + " sampled coordinates, worst rel err " +
                                            fmt(worst) + " <= 2e-2 at " + where + ", " + fmt(secs) + " s < 300 s"};
}

// ---- 4 ---------------------------------------------------------------------

Verdict parameter_counts() {
  bool ok = true;
  std::string detail;
  for (const DualStructure s : all_dual_structures) {
    if (s == DualStructure::PU) continue;
    const bool small = s == DualStructure::DI || s == DualStructure::DIDn;
    const double lo = small ? 0.145e6 : 0.17e6, hi = small ? 0.195e6 : 0.23e6;
    for (const auto& w : kWavelets) {
      const std::size_t n = count_parameters(NetworkSpec::standard(s, w));
      if (n < lo || n > hi) ok = false;
      if (w == "haar") detail += std::string(to_string(s)) + " " + std::to_string(n) + ", ";
    }
  }
  for (const auto& w : kWavelets)
    if (count_parameters(NetworkSpec::standard(DualStructure::DIDn, w)) !=
        count_parameters(NetworkSpec::standard(DualStructure::DI, w)))
      ok = false;
  return {ok, detail + "DI/DIDn in [0.145e6, 0.195e6], others in [0.17e6, 0.23e6], DIDn == DI for all wavelets"};
}

// ---- 5 ---------------------------------------------------------------------

Verdict pipeline_identity() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> side(1, 128);
  const std::vector<Extent3> shapes{{16, 64, 64}, {16, 32, 32}, {32, 128, 128}};
  std::size_t identical = 0;
  for (int i = 0; i < 200; ++i) {
    const Extent3 e{side(rng), side(rng), side(rng)};
    Volume3D<std::uint16_t> v(e);
    for (auto& x : v.storage()) x = static_cast<std::uint16_t>(rng());
    const auto p = partition(v, shapes[std::size_t(i) % shapes.size()]);
    identical += assemble(p.grid, p.cubes) == v;
  }

  data::PhantomConfig pc;
  pc.extent = {24, 40, 72};
  pc.noise_sigma = 0.3;
  pc.seed = 77;
  const auto ph = data::generate_phantom(pc);
  Network<float> net(NetworkSpec::standard(DualStructure::DIDn, "haar"), 11);
  std::vector<SegmentationResult> runs;
  for (const std::size_t workers : {1u, 2u, 4u}) {
    SegmentOptions opt;
    opt.workers = workers;
    opt.keep_logits = true;
    runs.push_back(segment_volume(ph.image, net, Extent3{16, 32, 32}, opt));
  }
  bool invariant = true;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    invariant &= runs[r].labels == runs[0].labels;
    invariant &= runs[r].logits.size() == runs[0].logits.size();
    for (std::size_t c = 0; invariant && c < runs[0].logits.size(); ++c)
      invariant &= runs[r].logits[c].values == runs[0].logits[c].values;
  }
  return {identical == 200 && invariant,
          std::to_string(identical) + "/200 fuzzed extents bitwise identical; labels and logits " +
              (invariant ? "identical" : "differ") + " for 1, 2 and 4 workers"};
}

// ---- 6 ---------------------------------------------------------------------

double trailing_mean(const std::vector<double>& losses, std::size_t end, std::size_t window) {
  const std::size_t lo = end > window ? end - window : 0;
  double s = 0.0;
  for (std::size_t k = lo; k < end; ++k) s += losses[k];
  return s / double(end - lo);
}

Verdict desk_scale_learning() {
  const auto t0 = Clock::now();
  std::vector<data::CubeRecord> train, held_out;
  for (std::size_t i = 0; i < 200; ++i) {
    data::PhantomConfig pc;
    pc.extent = {16, 64, 64};
    pc.noise_sigma = 0.3;
    pc.impulse_fraction = 0.05;
    pc.seed = 1000 + i;
    auto ph = data::generate_phantom(pc);
    (i < 150 ? train : held_out).push_back({std::move(ph.image), std::move(ph.labels), {0, 0, 0}, "phantom"});
  }
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 4;
  cfg.seed = 42;
  FitOptions opt;
  opt.validation = &held_out;
  const std::size_t per_epoch = (train.size() + cfg.batch_size - 1) / cfg.batch_size;

  g_table.push_back("arch\twavelet\tepochs\tbg_iou\tfg_iou\tmean_iou\tsmoothed_loss_start\tepoch1\tepoch2\tepoch3\tseconds");
  bool monotone = true;
  double didn_fg = 0.0;
  std::string detail;
  for (const DualStructure s : {DualStructure::DIDn, DualStructure::PU}) {
    const auto ts = Clock::now();
    const auto r = fit(NetworkSpec::standard(s, "haar"), train, cfg, opt);
    const double secs = seconds_since(ts);
    const IoU& v = r.epochs.back().val;
    std::vector<double> smooth{trailing_mean(r.losses, 1, 10)};
    for (std::size_t e = 1; e <= 3; ++e) smooth.push_back(trailing_mean(r.losses, e * per_epoch, 10));
    bool mono = true;
    for (std::size_t k = 1; k < smooth.size(); ++k) mono &= smooth[k] <= smooth[k - 1];
    monotone &= mono;
    if (s == DualStructure::DIDn) didn_fg = v.foreground;

    std::ostringstream row;
    row << to_string(s) << "\thaar\t" << cfg.epochs << std::fixed << std::setprecision(4) << '\t' << v.background
        << '\t' << v.foreground << '\t' << v.mean;
    for (const double x : smooth) row << '\t' << x;
    row << std::setprecision(1) << '\t' << secs;
    g_table.push_back(row.str());
    detail += std::string(to_string(s)) + " fg " + fmt(v.foreground) + " mean " + fmt(v.mean) + " loss " +
              fmt(smooth[0]) + ">" + fmt(smooth[1]) + ">" + fmt(smooth[2]) + ">" + fmt(smooth[3]) +
              (mono ? "" : " (not monotone)") + "; ";
  }
  const double secs = seconds_since(t0);
  return {didn_fg >= 0.60 && monotone && secs < 3600.0,
          detail + "need DIDn fg >= 0.60 on 50 held-out cubes, " + fmt(secs / 60.0) + " min < 60 min"};
}

// ---- 7 ---------------------------------------------------------------------

Verdict hard_shrink_mapping() {
  const std::vector<double> grid{-0.3, -0.25, -0.1, 0.0, 0.1, 0.25, 0.3};
  const std::vector<double> want{-0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.3};
  bool grid_ok = true;
  for (std::size_t i = 0; i < grid.size(); ++i) grid_ok &= hard_shrink(grid[i], 0.25) == want[i];

  // 8 bands of 20x25x25 = 100000 coefficients.
  SubbandSet<double> s;
  s.wavelet = "haar";
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 0.5);
  for (auto& b : s.bands) {
    b = Volume3D<double>(Extent3{20, 25, 25});
    for (auto& x : b.storage()) x = n(rng);
  }
  const ShrinkConfig cfg(0.25);
  const auto once = hard_shrink(s, cfg);
  const bool idempotent = hard_shrink(once, cfg) == once;
  return {grid_ok && idempotent, std::string("boundary grid ") + (grid_ok ? "matches" : "differs") +
                                     ", shrink twice == shrink once on 1e5 coefficients: " +
                                     (idempotent ? "yes" : "no")};
}

// ---- 8 ---------------------------------------------------------------------

std::size_t count_ones(const LabelVolume& l) {
  std::size_t n = 0;
  for (const auto v : l.storage()) n += v;
  return n;
}

Verdict rasterization_oracle() {
  data::SwcMorphology sphere;
  sphere.nodes.push_back({1, 1, 8.0, 8.0, 8.0, 2.0, -1});
  const std::size_t sphere_count = count_ones(data::rasterize(sphere, Extent3{16, 16, 16}));

  // Random orientation and sub-voxel position, capsule kept inside the volume.
  const Extent3 e{32, 64, 64};
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const double r = 2.0 + 1.5 * u(rng), len = 12.0 + 18.0 * u(rng);
    const double cz = 2.0 * u(rng) - 1.0, phi = 2.0 * std::numbers::pi * u(rng), sz = std::sqrt(1.0 - cz * cz);
    const double dx = sz * std::cos(phi), dy = sz * std::sin(phi), dz = cz;
    const double mx = 32.0 + 4.0 * u(rng), my = 32.0 + 4.0 * u(rng), mz = 16.0 + 2.0 * u(rng);
    data::SwcMorphology m;
    m.nodes.push_back({1, 3, mx - 0.5 * len * dx, my - 0.5 * len * dy, mz - 0.5 * len * dz, r, -1});
    m.nodes.push_back({2, 3, mx + 0.5 * len * dx, my + 0.5 * len * dy, mz + 0.5 * len * dz, r, 1});
    const double want = std::numbers::pi * r * r * len + 4.0 / 3.0 * std::numbers::pi * r * r * r;
    const double got = double(count_ones(data::rasterize(m, e)));
    worst = std::max(worst, std::abs(got - want) / want);
  }
  return {sphere_count == 33 && worst <= 0.15, "sphere r=2 labels " + std::to_string(sphere_count) +
                                                   " (want 33); worst capsule error " + fmt(worst * 100.0) +
                                                   "% over 20 segments (<= 15%)"};
}

}  // namespace

int main(int argc, char** argv) {
  std::string report;
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--report" && i + 1 < argc) {
      report = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.push_back(std::stoi(tok));
    } else {
      std::cerr << "usage: acceptance [--report PATH] [--only N[,N...]]\n";
      return 2;
    }
  }

  const std::vector<std::function<Verdict()>> criteria{perfect_reconstruction, haar_anchor,       gradients,
                                                       parameter_counts,       pipeline_identity, desk_scale_learning,
                                                       hard_shrink_mapping,    rasterization_oracle};
  std::vector<std::string> lines;
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = int(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Verdict v;
    try {
      v = criteria[i]();
    } catch (const std::exception& ex) {
      v = {false, std::string("threw: ") + ex.what()};
    }
    failures += !v.pass;
    const std::string line = std::string(v.pass ? "PASS" : "FAIL") + " criterion " + std::to_string(id) + ": " + v.detail;
    std::cout << line << std::endl;
    lines.push_back(std::to_string(id) + "\t" + (v.pass ? "PASS" : "FAIL") + "\t" + v.detail);
  }

  if (!report.empty()) {
    std::ofstream f(report);
    f << "criterion\tstatus\tdetail\n";
    for (const auto& l : lines) f << l << '\n';
    if (!g_table.empty()) {
      f << '\n';
      for (const auto& l : g_table) f << l << '\n';
    }
    if (!f) {
      std::cerr << "cannot write report " << report << '\n';
      return 2;
    }
  }
  return failures == 0 ? 0 : 1;
}
