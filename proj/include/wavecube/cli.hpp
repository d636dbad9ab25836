#pragma once

// Command-line front end. Needs CLI11.hpp on the include path.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "wavecube/arch.hpp"
#include "wavecube/checkpoint.hpp"
#include "wavecube/data/cubes.hpp"
#include "wavecube/data/nvol.hpp"
#include "wavecube/data/phantom.hpp"
#include "wavecube/data/swc.hpp"
#include "wavecube/error.hpp"
#include "wavecube/filters.hpp"
#include "wavecube/parallel.hpp"
#include "wavecube/pipeline.hpp"
#include "wavecube/train.hpp"
#include "wavecube/transform.hpp"

#ifndef WAVECUBE_VERSION
#define WAVECUBE_VERSION "0.1.0"
#endif

namespace wavecube::cli {

enum Exit : int { ok = 0, usage = 1, data_error = 2, numeric = 3 };

struct CommandOutcome {
  int exit = ok;
  std::string message;
  std::string summary;  // machine-readable line also written to the data stream, if any
};

inline int exit_code_for(Errc c) {
  switch (c) {
    case Errc::unknown_wavelet:
    case Errc::unknown_arch:
    case Errc::invalid_argument: return usage;
    case Errc::non_finite_gradient: return numeric;
    default: return data_error;
  }
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline Extent3 parse_extent(const std::string& s) {
  Extent3 e;
  char x1 = 0, x2 = 0;
  std::istringstream in(s);
  std::string rest;
  if (!(in >> e.d >> x1 >> e.m >> x2 >> e.n) || x1 != 'x' || x2 != 'x' || (in >> rest) || e.size() == 0)
    throw Error(Errc::invalid_argument, "extent '" + s + "' is not of the form DxMxN with positive entries");
  return e;
}

namespace detail {

struct Context {
  std::ostream& out;
  std::ostream& err;
  CLI::App* cmd = nullptr;
  std::uint64_t seed = 0;
};

// Logs version, seed, a digest of every option value and each option left at its default.
inline void provenance(Context& ctx) {
  std::vector<std::pair<std::string, std::string>> values;
  std::vector<std::string> defaulted;
  for (const CLI::Option* o : ctx.cmd->get_options()) {
    if (o->get_name() == "--help") continue;
    const std::string name = o->get_name(false, true);
    std::string value;
    if (o->count() > 0) {
      for (const auto& r : o->results()) value += (value.empty() ? "" : ",") + r;
    } else {
      value = o->get_default_str();
      defaulted.push_back(name + "=" + value);
    }
    values.emplace_back(name, value);
  }
  std::sort(values.begin(), values.end());
  std::string canon = ctx.cmd->get_name();
  for (const auto& [k, v] : values) canon += '\n' + k + '=' + v;
  std::ostringstream digest;
  digest << std::hex << std::setw(16) << std::setfill('0') << fnv1a(canon);
  ctx.err << "# wavecube " << WAVECUBE_VERSION << " command=" << ctx.cmd->get_name() << " seed=" << ctx.seed
          << " config=" << digest.str() << '\n';
  for (const auto& d : defaulted) ctx.err << "# default " << d << '\n';
}

inline NetworkSpec spec_from(const std::string& arch, const std::string& wavelet) {
  const DualStructure s = parse_dual_structure(arch);
  if (wavelet != "none") (void)builtin_bank(wavelet);
  if (uses_wavelet(s) && wavelet == "none")
    throw Error(Errc::invalid_argument, arch + " needs --wavelet");
  return NetworkSpec::standard(s, wavelet);
}

}  // namespace detail

/// Parses `args` (without the program name) and runs one command. Data goes
/// to `out`, diagnostics and provenance to `err`.
inline CommandOutcome run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"wavecube: wavelet-integrated encoder-decoder segmentation of 3D line structures", "wavecube"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", std::string(WAVECUBE_VERSION));
  detail::Context ctx{out, err};
  std::function<CommandOutcome()> action;

  // gen-phantom
  data::PhantomConfig ph;
  std::string ph_extent = "32x128x128", ph_image, ph_label, ph_swc;
  {
    auto* c = app.add_subcommand("gen-phantom", "Render a synthetic tubular phantom and its labels");
    c->add_option("--out-image", ph_image, "Image volume (NVOL f32)")->required();
    c->add_option("--out-label", ph_label, "Label volume (NVOL u8)")->required();
    c->add_option("--out-swc", ph_swc, "Also write the tube morphology as SWC");
    c->add_option("--extent", ph_extent, "DxMxN");
    c->add_option("--tubes", ph.tubes);
    c->add_option("--radius-min", ph.radius_min);
    c->add_option("--radius-max", ph.radius_max);
    c->add_option("--nodes-per-tube", ph.nodes_per_tube);
    c->add_option("--foreground", ph.foreground);
    c->add_option("--background", ph.background);
    c->add_option("--sigma", ph.noise_sigma, "Gaussian noise standard deviation");
    c->add_option("--impulse", ph.impulse_fraction, "Fraction of voxels hit by impulse noise");
    c->add_option("--gaps", ph.gaps_per_tube, "Image-only breaks per tube");
    c->add_option("--seed", ph.seed);
    c->callback([&, c] {
      ctx.cmd = c;
      action = [&] {
        ctx.seed = ph.seed;
        detail::provenance(ctx);
        ph.extent = parse_extent(ph_extent);
        const data::Phantom p = data::generate_phantom(ph);
        data::write_volume(ph_image, p.image);
        data::write_volume(ph_label, p.labels);
        if (!ph_swc.empty()) {
          std::ofstream f(ph_swc);
          f << data::serialize_swc(p.morphology);
          if (!f) throw Error(Errc::io, "write failed for " + ph_swc);
        }
        std::size_t fg = 0;
        for (auto v : p.labels.storage()) fg += v;
        return CommandOutcome{ok, "phantom written", "foreground_voxels\t" + std::to_string(fg)};
      };
    });
  }

  // swc2label
  std::string swc_in, swc_extent, swc_out, swc_scale = "1,1,1";
  {
    auto* c = app.add_subcommand("swc2label", "Rasterize an SWC trace into a 0/1 label volume");
    c->add_option("--swc", swc_in)->required();
    c->add_option("--extent", swc_extent, "DxMxN")->required();
    c->add_option("--out", swc_out)->required();
    c->add_option("--scale", swc_scale, "Per-axis coordinate multipliers x,y,z");
    c->callback([&, c] {
      ctx.cmd = c;
      action = [&] {
        detail::provenance(ctx);
        data::SwcScale sc;
        char c1 = 0, c2 = 0;
        std::istringstream s(swc_scale);
        if (!(s >> sc.x >> c1 >> sc.y >> c2 >> sc.z) || c1 != ',' || c2 != ',')
          throw Error(Errc::invalid_argument, "--scale expects x,y,z");
        std::ifstream f(swc_in);
        if (!f) throw Error(Errc::io, "cannot open " + swc_in);
        std::stringstream text;
        text << f.rdbuf();
        const auto m = data::parse_swc(text.str());
        const LabelVolume l = data::rasterize(m, parse_extent(swc_extent), sc);
        data::write_volume(swc_out, l);
        std::size_t fg = 0;
        for (auto v : l.storage()) fg += v;
        return CommandOutcome{ok, "labels written", "labelled_voxels\t" + std::to_string(fg)};
      };
    });
  }

  // make-cubes
  data::CutConfig cut;
  std::string cut_image, cut_label, cut_dir, cut_shape = "32x128x128";
  {
    auto* c = app.add_subcommand("make-cubes", "Cut random image/label cube pairs into a dataset directory");
    c->add_option("--image", cut_image)->required();
    c->add_option("--label", cut_label)->required();
    c->add_option("--out-dir", cut_dir)->required();
    c->add_option("--cube", cut_shape, "DxMxN");
    c->add_option("--count", cut.count);
    c->add_option("--seed", cut.seed);
    c->add_option("--min-foreground", cut.min_foreground);
    c->add_option("--max-attempts", cut.max_attempts, "0 picks a budget from --count");
    c->callback([&, c] {
      ctx.cmd = c;
      action = [&] {
        ctx.seed = cut.seed;
        detail::provenance(ctx);
        cut.cube = parse_extent(cut_shape);
        cut.source = cut_image;
        const auto img = data::read_volume_as_float(cut_image);
        const auto lab = data::read_volume<std::uint8_t>(cut_label);
        const auto res = data::cut_cubes(img, lab, cut);
        data::write_cube_dir(cut_dir, res.cubes);
        if (res.exhausted)
          err << "# retry budget exhausted after " << res.attempts << " draws: " << res.cubes.size() << " of "
              << res.requested << " cubes accepted\n";
        return CommandOutcome{ok, "cubes written",
                              "cubes\t" + std::to_string(res.cubes.size()) + "\trequested\t" +
                                  std::to_string(res.requested) + "\texhausted\t" + (res.exhausted ? "1" : "0")};
      };
    });
  }

  // dwt / idwt / denoise
  std::string wv = "haar", t_in, t_out, t_prefix;
  double lambda = 0.25;
  {
    auto* c = app.add_subcommand("dwt", "Single-level 3D DWT into eight tag-suffixed volumes");
    c->add_option("--wavelet", wv);
    c->add_option("--in", t_in)->required();
    c->add_option("--out-prefix", t_prefix)->required();
    c->callback([&, c] {
      ctx.cmd = c;
      action = [&] {
        detail::provenance(ctx);
        const FilterBank bank = builtin_bank(wv);
        const auto x = data::read_volume_as_float(t_in).cast<double>();
        const auto s = dwt3(x, bank);
        for (std::size_t t = 0; t < 8; ++t)
          data::write_volume(t_prefix + std::string(subband_tags[t]) + ".nvol", s[t].cast<float>());
        return CommandOutcome{ok, "subbands written", "subband_extent\t" + s.extent().str()};
      };
    });
  }
  {
    auto* c = app.add_subcommand("idwt", "Inverse of dwt: read <prefix>lll.nvol .. <prefix>hhh.nvol");
    c->add_option("--wavelet", wv);
    c->add_option("--in-prefix", t_prefix)->required();
    c->add_option("--out", t_out)->required();
    c->callback([&, c] {
      ctx.cmd = c;
      action = [&] {
        detail::provenance(ctx);
        const FilterBank bank = builtin_bank(wv);
        SubbandSet<double> s;
        s.wavelet = bank.name;
        for (std::size_t t = 0; t < 8; ++t)
          s[t] = data::read_volume_as_float(t_prefix + std::string(subband_tags[t]) + ".nvol").cast<double>();
        const auto x = idwt3(s, bank);
        data::write_volume(t_out, x.cast<float>());
        return CommandOutcome{ok, "volume written", "extent\t" + x.extent().str()};
      };
    });
  }
  {
    auto* c = app.add_subcommand("denoise", "DWT, hard-shrink the seven high-frequency subbands, IDWT");
    c->add_option("--wavelet", wv);
    c->add_option("--in", t_in)->required();
    c->add_option("--out", t_out)->required();
    c->add_option("--lambda", lambda, "Hard-shrink threshold");
    c->callback([&, c] {
      ctx.cmd = c;
      action = [&] {
        detail::provenance(ctx);
        const FilterBank bank = builtin_bank(wv);
        const ShrinkConfig cfg(lambda);
        const auto x = data::read_volume_as_float(t_in).cast<double>();
        const auto y = idwt3(hard_shrink(dwt3(x, bank), cfg), bank);
        data::write_volume(t_out, y.cast<float>());
        return CommandOutcome{ok, "denoised volume written", "extent\t" + y.extent().str()};
      };
    });
  }

  // describe / count-params
  std::string arch = "DIDn", arch_wv = "haar", describe_extent = "32x128x128";
  {
    auto* c = app.add_subcommand("describe", "Layer-by-layer report with parameter counts");
    c->add_option("--arch", arch, "PU|PDc|ScIn|DDc|DIn|DI|DIDn");
    c->add_option("--wavelet", arch_wv, "haar|db2|db3|db4|ch2.2|ch4.4, ignored by PU/PDc/ScIn");
    c->add_option("--extent", describe_extent, "Input extent DxMxN");
    c->callback([&, c] {
      ctx.cmd = c;
      action = [&] {
        detail::provenance(ctx);
        const NetworkSpec spec = detail::spec_from(arch, arch_wv);
        const Extent3 e = parse_extent(describe_extent);
        const std::size_t q = spec.divisor();
        if (e.d % q || e.m % q || e.n % q)
          throw Error(Errc::invalid_argument, "--extent " + e.str() + " must be divisible by " + std::to_string(q));
        out << format_report(describe(spec, e));
        return CommandOutcome{ok, "", ""};
      };
    });
  }
  {
    auto* c = app.add_subcommand("count-params", "Print the trainable parameter count");
    c->add_option("--arch", arch, "PU|PDc|ScIn|DDc|DIn|DI|DIDn");
    c->add_option("--wavelet", arch_wv, "haar|db2|db3|db4|ch2.2|ch4.4, ignored by PU/PDc/ScIn");
    c->callback([&, c] {
      ctx.cmd = c;
      action = [&] {
        detail::provenance(ctx);
        return CommandOutcome{ok, "", std::to_string(count_parameters(detail::spec_from(arch, arch_wv)))};
      };
    });
  }

  // train
  TrainConfig tc;
  tc.batch_size = 4;
  tc.epochs = 10;
  std::string data_dir, val_dir, run_dir = "wavecube_run";
  unsigned threads = 0;
  {
    auto* c = app.add_subcommand("train", "Train a network on a cube directory");
    c->add_option("--arch", arch);
    c->add_option("--wavelet", arch_wv);
    c->add_option("--data", data_dir, "Directory written by make-cubes")->required();
    c->add_option("--val-data", val_dir, "Held-out cube directory (default: seeded split of --data)");
    c->add_option("--out-dir", run_dir, "Checkpoints and metrics.tsv");
    c->add_option("--epochs", tc.epochs);
    c->add_option("--batch-size", tc.batch_size);
    c->add_option("--lr", tc.base_lr);
    c->add_option("--momentum", tc.momentum);
    c->add_option("--weight-decay", tc.weight_decay);
    c->add_option("--poly-power", tc.poly_power);
    c->add_option("--val-fraction", tc.val_fraction);
    c->add_option("--seed", tc.seed);
    c->add_option("--threads", threads, "0 uses every hardware thread");
    c->callback([&, c] {
      ctx.cmd = c;
      action = [&] {
        ctx.seed = tc.seed;
        detail::provenance(ctx);
        if (threads) set_num_threads(threads);
        const NetworkSpec spec = detail::spec_from(arch, arch_wv);
        const auto cubes = data::read_cube_dir(data_dir);
        std::vector<data::CubeRecord> val;
        FitOptions fo;
        fo.out_dir = run_dir;
        fo.progress = &err;
        if (!val_dir.empty()) {
          val = data::read_cube_dir(val_dir);
          fo.validation = &val;
        }
        const auto r = fit<float>(spec, cubes, tc, fo);
        out << "epoch\titeration\tlr\tloss\tbg_iou\tfg_iou\tmean_iou\n";
        for (const auto& m : r.epochs)
          out << m.epoch << '\t' << m.iteration << '\t' << m.lr << '\t' << m.loss << '\t' << m.val.background
              << '\t' << m.val.foreground << '\t' << m.val.mean << '\n';
        return CommandOutcome{ok, "checkpoints in " + run_dir, ""};
      };
    });
  }

  // segment
  std::string ckpt, seg_in, seg_out, seg_cube = "32x128x128";
  std::size_t workers = 1;
  {
    auto* c = app.add_subcommand("segment", "Tile, segment and reassemble a whole volume");
    c->add_option("--arch", arch, "Must match the checkpoint");
    c->add_option("--wavelet", arch_wv, "Must match the checkpoint");
    c->add_option("--ckpt", ckpt)->required();
    c->add_option("--in", seg_in)->required();
    c->add_option("--out", seg_out)->required();
    c->add_option("--cube", seg_cube, "Tile extent DxMxN, each divisible by 16");
    c->add_option("--workers", workers, "Cubes segmented concurrently");
    c->callback([&, c] {
      ctx.cmd = c;
      action = [&] {
        detail::provenance(ctx);
        const NetworkSpec want = detail::spec_from(arch, arch_wv);
        const Checkpoint ck = read_checkpoint(ckpt);
        if (ck.spec.dual_structure != want.dual_structure || ck.spec.wavelet != want.wavelet)
          throw Error(Errc::invalid_argument,
                      "checkpoint holds " + std::string(to_string(ck.spec.dual_structure)) + "/" +
                          (ck.spec.wavelet.empty() ? "none" : ck.spec.wavelet) + ", requested " + arch + "/" +
                          (uses_wavelet(want.dual_structure) ? arch_wv : "none"));
        Network<float> net(ck.spec);
        load_into(net, ck);
        const auto v = data::read_volume_as_float(seg_in);
        SegmentOptions so;
        so.workers = workers;
        so.provenance = ckpt;
        const auto res = segment_volume(v, net, parse_extent(seg_cube), so);
        data::write_volume(seg_out, res.labels);
        std::size_t fg = 0;
        for (auto x : res.labels.storage()) fg += x;
        return CommandOutcome{ok, "segmentation written", "foreground_voxels\t" + std::to_string(fg)};
      };
    });
  }

  // eval
  std::string pred, truth;
  {
    auto* c = app.add_subcommand("eval", "Background, foreground and mean IoU, tab-separated");
    c->add_option("--pred", pred)->required();
    c->add_option("--truth", truth)->required();
    c->callback([&, c] {
      ctx.cmd = c;
      action = [&] {
        detail::provenance(ctx);
        const auto r = iou(data::read_volume<std::uint8_t>(pred), data::read_volume<std::uint8_t>(truth));
        std::ostringstream s;
        s << std::setprecision(6) << std::fixed << r.background << '\t' << r.foreground << '\t' << r.mean;
        return CommandOutcome{ok, "", s.str()};
      };
    });
  }

  std::vector<const char*> argv{"wavecube"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return {ok, "help", ""};
  } catch (const CLI::CallForVersion&) {
    out << WAVECUBE_VERSION << '\n';
    return {ok, "version", ""};
  } catch (const CLI::ParseError& e) {
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << "error: " << e.what() << "\n\n" << sub->help();
    return {usage, e.what(), ""};
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return {exit_code_for(e.code()), e.what(), ""};
  }
  if (!action) {
    err << app.help();
    return {usage, "no command", ""};
  }
  try {
    CommandOutcome r = action();
    if (!r.summary.empty()) out << r.summary << '\n';
    if (!r.message.empty()) err << "# " << r.message << '\n';
    return r;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return {exit_code_for(e.code()), e.what(), ""};
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return {data_error, e.what(), ""};
  }
}

}  // namespace wavecube::cli
