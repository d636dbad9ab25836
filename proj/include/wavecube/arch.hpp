#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wavecube/error.hpp"
#include "wavecube/filters.hpp"
#include "wavecube/nn/ops.hpp"
#include "wavecube/nn/tape.hpp"
#include "wavecube/nn/tensor.hpp"

namespace wavecube {

/// How each encoder level hands information to its decoder twin.
enum class DualStructure { PU, PDc, ScIn, DDc, DIn, DI, DIDn };

enum class BranchPayload { pool_indices, skip_copy, high_frequency, high_frequency_denoised };

inline constexpr std::array<DualStructure, 7> all_dual_structures{
    DualStructure::PU, DualStructure::PDc, DualStructure::ScIn, DualStructure::DDc,
    DualStructure::DIn, DualStructure::DI, DualStructure::DIDn};

constexpr std::string_view to_string(DualStructure s) noexcept {
  switch (s) {
    case DualStructure::PU: return "PU";
    case DualStructure::PDc: return "PDc";
    case DualStructure::ScIn: return "ScIn";
    case DualStructure::DDc: return "DDc";
    case DualStructure::DIn: return "DIn";
    case DualStructure::DI: return "DI";
    case DualStructure::DIDn: return "DIDn";
  }
  return "?";
}

inline DualStructure parse_dual_structure(std::string_view name) {
  for (const DualStructure s : all_dual_structures)
    if (to_string(s) == name) return s;
  throw Error(Errc::unknown_arch,
              "'" + std::string(name) + "'; valid architectures: PU, PDc, ScIn, DDc, DIn, DI, DIDn");
}

constexpr bool uses_wavelet(DualStructure s) noexcept {
  return s == DualStructure::DDc || s == DualStructure::DIn || s == DualStructure::DI ||
         s == DualStructure::DIDn;
}

constexpr bool concatenates(DualStructure s) noexcept {
  return s == DualStructure::PDc || s == DualStructure::ScIn || s == DualStructure::DDc ||
         s == DualStructure::DIn;
}

constexpr BranchPayload branch_payload(DualStructure s) noexcept {
  switch (s) {
    case DualStructure::PU: return BranchPayload::pool_indices;
    case DualStructure::DI: return BranchPayload::high_frequency;
    case DualStructure::DIDn: return BranchPayload::high_frequency_denoised;
    default: return BranchPayload::skip_copy;
  }
}

using ChannelPair = std::pair<std::size_t, std::size_t>;

/// Architecture description. Encoder pair (a, b): conv a->b then b->b.
/// Decoder pair (a, b): conv (input)->a then a->b, listed from the deepest level up.
struct NetworkSpec {
  DualStructure dual_structure = DualStructure::DIDn;
  std::string wavelet = "haar";  // empty for PU / PDc / ScIn
  std::size_t levels = 4;
  std::vector<ChannelPair> encoder_channels{{1, 4}, {4, 8}, {8, 16}, {16, 32}};
  ChannelPair bottom_channels{32, 32};
  std::vector<ChannelPair> decoder_channels{{32, 16}, {16, 8}, {8, 4}, {4, 4}};
  std::size_t classes = 2;
  double shrink_lambda = 0.25;

  /// The published channel schedule for `s`; `wavelet` is ignored for pooling variants.
  static NetworkSpec standard(DualStructure s, std::string_view wavelet = "haar") {
    NetworkSpec spec;
    spec.dual_structure = s;
    spec.wavelet = uses_wavelet(s) ? std::string(wavelet) : std::string();
    return spec;
  }

  std::size_t input_channels() const { return encoder_channels.front().first; }
  std::size_t divisor() const { return std::size_t{1} << levels; }

  void validate() const {
    if (uses_wavelet(dual_structure)) {
      if (wavelet.empty())
        throw Error(Errc::invalid_argument,
                    std::string(to_string(dual_structure)) + " needs a wavelet");
      (void)builtin_bank(wavelet);
    } else if (!wavelet.empty()) {
      throw Error(Errc::invalid_argument,
                  std::string(to_string(dual_structure)) + " does not take a wavelet");
    }
    if (levels == 0 || levels > 8 || encoder_channels.size() != levels ||
        decoder_channels.size() != levels)
      throw Error(Errc::invalid_argument, "channel schedule must list one pair per level");
    if (classes < 2) throw Error(Errc::invalid_argument, "need at least two classes");
    if (!(shrink_lambda >= 0.0)) throw Error(Errc::invalid_argument, "shrink_lambda must be >= 0");
    auto positive = [](ChannelPair p) { return p.first > 0 && p.second > 0; };
    for (const auto& p : encoder_channels)
      if (!positive(p)) throw Error(Errc::invalid_argument, "zero channel count");
    for (const auto& p : decoder_channels)
      if (!positive(p)) throw Error(Errc::invalid_argument, "zero channel count");
    if (!positive(bottom_channels)) throw Error(Errc::invalid_argument, "zero channel count");
  }

  std::string serialize() const {
    auto pairs = [](const std::vector<ChannelPair>& v) {
      std::string s;
      for (const auto& [a, b] : v) {
        if (!s.empty()) s += ',';
        s += std::to_string(a) + ':' + std::to_string(b);
      }
      return s;
    };
    std::ostringstream os;
    os.precision(17);
    os << "dual_structure=" << to_string(dual_structure) << '\n'
       << "wavelet=" << (wavelet.empty() ? "none" : wavelet) << '\n'
       << "levels=" << levels << '\n'
       << "encoder_channels=" << pairs(encoder_channels) << '\n'
       << "bottom_channels=" << bottom_channels.first << ':' << bottom_channels.second << '\n'
       << "decoder_channels=" << pairs(decoder_channels) << '\n'
       << "classes=" << classes << '\n'
       << "shrink_lambda=" << shrink_lambda << '\n';
    return os.str();
  }

  /// Parses `serialize` output. Blank lines and '#' comments are skipped; keys
  /// not given keep their standard defaults.
  static NetworkSpec parse(std::string_view text) {
    NetworkSpec spec;
    bool wavelet_given = false;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    auto bad = [&](const std::string& why) {
      return Error(Errc::malformed_line, "spec line " + std::to_string(lineno) + ": " + why);
    };
    auto to_size = [&](const std::string& s) {
      std::size_t pos = 0;
      unsigned long long v = 0;
      try {
        v = std::stoull(s, &pos);
      } catch (const std::exception&) {
        throw bad("expected an integer, got '" + s + "'");
      }
      if (pos != s.size()) throw bad("expected an integer, got '" + s + "'");
      return static_cast<std::size_t>(v);
    };
    auto to_pair = [&](const std::string& s) {
      const auto colon = s.find(':');
      if (colon == std::string::npos) throw bad("expected a:b, got '" + s + "'");
      return ChannelPair{to_size(s.substr(0, colon)), to_size(s.substr(colon + 1))};
    };
    auto to_pairs = [&](const std::string& s) {
      std::vector<ChannelPair> out;
      std::size_t start = 0;
      while (start <= s.size()) {
        const auto comma = s.find(',', start);
        out.push_back(to_pair(s.substr(start, comma == std::string::npos ? std::string::npos
                                                                         : comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      return out;
    };
    while (std::getline(in, line)) {
      ++lineno;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw bad("expected key=value");
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key == "dual_structure") {
        spec.dual_structure = parse_dual_structure(value);
      } else if (key == "wavelet") {
        spec.wavelet = value == "none" ? std::string() : value;
        wavelet_given = true;
      } else if (key == "levels") {
        spec.levels = to_size(value);
      } else if (key == "encoder_channels") {
        spec.encoder_channels = to_pairs(value);
      } else if (key == "bottom_channels") {
        spec.bottom_channels = to_pair(value);
      } else if (key == "decoder_channels") {
        spec.decoder_channels = to_pairs(value);
      } else if (key == "classes") {
        spec.classes = to_size(value);
      } else if (key == "shrink_lambda") {
        try {
          spec.shrink_lambda = std::stod(value);
        } catch (const std::exception&) {
          throw bad("expected a number, got '" + value + "'");
        }
      } else {
        throw bad("unknown key '" + key + "'");
      }
    }
    if (!wavelet_given && !uses_wavelet(spec.dual_structure)) spec.wavelet.clear();
    spec.validate();
    return spec;
  }

  bool operator==(const NetworkSpec&) const = default;
};

/// One row of the layer report.
struct LayerInfo {
  std::string name;
  std::string kind;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;  // 0 for parameter-free layers
  Extent3 in_extent;
  Extent3 out_extent;
  std::size_t parameters = 0;
};

namespace detail {

struct LayerPlan {
  // Decoder conv input channels per level (index 0 = shallowest).
  std::vector<std::size_t> decoder_in;
  // Channels leaving the up-sampling op at each level.
  std::vector<std::size_t> upsampled;
};

// Channel arithmetic for every level; throws ChannelMismatch when the
// schedule cannot be wired for the chosen dual structure.
inline LayerPlan plan_channels(const NetworkSpec& s) {
  const std::size_t L = s.levels;
  for (std::size_t l = 1; l < L; ++l)
    if (s.encoder_channels[l].first != s.encoder_channels[l - 1].second)
      throw Error(Errc::channel_mismatch, "encoder level " + std::to_string(l + 1) + " expects " +
                                              std::to_string(s.encoder_channels[l].first) +
                                              " channels, previous level yields " +
                                              std::to_string(s.encoder_channels[l - 1].second));
  if (s.bottom_channels.first != s.encoder_channels.back().second)
    throw Error(Errc::channel_mismatch, "bottom block input does not match deepest encoder");
  LayerPlan plan;
  plan.decoder_in.assign(L, 0);
  plan.upsampled.assign(L, 0);
  std::size_t mainstream = s.bottom_channels.second;
  for (std::size_t i = 0; i < L; ++i) {
    const std::size_t l = L - 1 - i;  // decoder_channels[i] serves encoder level l
    const std::size_t skip = s.encoder_channels[l].second;
    std::size_t up = mainstream;
    switch (s.dual_structure) {
      case DualStructure::PU:
      case DualStructure::DI:
      case DualStructure::DIDn:
        if (mainstream != skip)
          throw Error(Errc::channel_mismatch,
                      "level " + std::to_string(l + 1) + ": " + std::to_string(mainstream) +
                          " decoder channels cannot meet " + std::to_string(skip) +
                          " stored branch channels");
        break;
      case DualStructure::PDc:
      case DualStructure::DDc:
        up = skip;  // the deconvolution projects onto the skip width
        break;
      default:
        break;
    }
    plan.upsampled[l] = up;
    plan.decoder_in[l] = concatenates(s.dual_structure) ? skip + up : up;
    mainstream = s.decoder_channels[i].second;
  }
  return plan;
}

inline std::size_t conv_bn_params(std::size_t in, std::size_t out, std::size_t k = 3) {
  return k * k * k * in * out + 3 * out;  // weights, bias, bn scale and shift
}

}  // namespace detail

/// Layer-by-layer report for input extent `e`; parameter-free layers have count 0.
inline std::vector<LayerInfo> describe(const NetworkSpec& spec, Extent3 e = {32, 128, 128}) {
  spec.validate();
  const std::size_t q = spec.divisor();
  if (e.d == 0 || e.m == 0 || e.n == 0 || e.d % q || e.m % q || e.n % q)
    throw Error(Errc::indivisible_extent, "spatial extent " + e.str() + " is not divisible by " + std::to_string(q));
  const detail::LayerPlan plan = detail::plan_channels(spec);
  const std::size_t L = spec.levels;
  std::vector<LayerInfo> out;
  auto half = [](Extent3 x) { return Extent3{x.d / 2, x.m / 2, x.n / 2}; };
  auto dbl = [](Extent3 x) { return Extent3{x.d * 2, x.m * 2, x.n * 2}; };
  auto conv = [&](std::string name, std::size_t in, std::size_t o, Extent3 x) {
    out.push_back({std::move(name), "conv3d+bn+relu", in, o, 3, x, x, detail::conv_bn_params(in, o)});
  };
  auto op = [&](std::string name, std::string kind, std::size_t in, std::size_t o, Extent3 a, Extent3 b,
                std::size_t kernel = 0, std::size_t params = 0) {
    out.push_back({std::move(name), std::move(kind), in, o, kernel, a, b, params});
  };

  Extent3 x = e;
  for (std::size_t l = 0; l < L; ++l) {
    const auto [a, b] = spec.encoder_channels[l];
    const std::string p = "enc" + std::to_string(l + 1);
    conv(p + ".conv1", a, b, x);
    conv(p + ".conv2", b, b, x);
    switch (spec.dual_structure) {
      case DualStructure::PU:
      case DualStructure::PDc: op(p + ".down", "maxpool2", b, b, x, half(x)); break;
      case DualStructure::ScIn:
        op(p + ".down", "strided_conv2", b, b, x, half(x), 2, 8 * b * b + b);
        break;
      case DualStructure::DDc:
      case DualStructure::DIn: op(p + ".down", "dwt_lll", b, b, x, half(x)); break;
      case DualStructure::DI: op(p + ".down", "dwt", b, b, x, half(x)); break;
      case DualStructure::DIDn:
        op(p + ".down", "dwt", b, b, x, half(x));
        op(p + ".denoise", "hard_shrink", 7 * b, 7 * b, half(x), half(x));
        break;
    }
    x = half(x);
  }
  conv("bottom.conv1", spec.bottom_channels.first, spec.bottom_channels.second, x);
  conv("bottom.conv2", spec.bottom_channels.second, spec.bottom_channels.second, x);
  std::size_t mainstream = spec.bottom_channels.second;
  for (std::size_t i = 0; i < L; ++i) {
    const std::size_t l = L - 1 - i;
    const std::string p = "dec" + std::to_string(l + 1);
    const std::size_t skip = spec.encoder_channels[l].second;
    const std::size_t up = plan.upsampled[l];
    switch (spec.dual_structure) {
      case DualStructure::PU: op(p + ".up", "maxunpool2", mainstream, up, x, dbl(x)); break;
      case DualStructure::PDc:
      case DualStructure::DDc:
        op(p + ".up", "deconv2", mainstream, up, x, dbl(x), 2, 8 * mainstream * up + up);
        break;
      case DualStructure::ScIn:
      case DualStructure::DIn: op(p + ".up", "interpolate2", mainstream, up, x, dbl(x)); break;
      case DualStructure::DI:
      case DualStructure::DIDn: op(p + ".up", "idwt", mainstream, up, x, dbl(x)); break;
    }
    x = dbl(x);
    if (concatenates(spec.dual_structure)) op(p + ".concat", "concat", skip + up, skip + up, x, x);
    const auto [a, b] = spec.decoder_channels[i];
    conv(p + ".conv1", plan.decoder_in[l], a, x);
    conv(p + ".conv2", a, b, x);
    mainstream = b;
  }
  out.push_back({"head", "conv3d", mainstream, spec.classes, 1, x, x, mainstream * spec.classes + spec.classes});
  return out;
}

/// Trainable scalar count: conv weights and biases plus batch-norm scale/shift.
inline std::size_t count_parameters(const NetworkSpec& spec) {
  std::size_t total = 0;
  for (const auto& l : describe(spec, {16, 16, 16})) total += l.parameters;
  return total;
}

inline std::string format_report(const std::vector<LayerInfo>& layers) {
  std::ostringstream os;
  os << "layer\tkind\tin\tout\tkernel\tin_extent\tout_extent\tparams\n";
  std::size_t total = 0;
  for (const auto& l : layers) {
    os << l.name << '\t' << l.kind << '\t' << l.in_channels << '\t' << l.out_channels << '\t';
    if (l.kernel) os << l.kernel << 'x' << l.kernel << 'x' << l.kernel;
    else os << '-';
    os << '\t' << l.in_extent << '\t' << l.out_extent << '\t' << l.parameters << '\n';
    total += l.parameters;
  }
  os << "total\t\t\t\t\t\t\t" << total << '\n';
  return os.str();
}

/// A built encoder-decoder with its parameter store.
template <class T>
class Network {
 public:
  explicit Network(NetworkSpec spec, std::uint64_t seed = 0) : spec_(std::move(spec)) {
    spec_.validate();
    plan_ = detail::plan_channels(spec_);
    if (uses_wavelet(spec_.dual_structure)) bank_ = builtin_bank(spec_.wavelet);
    build();
    init(seed);
  }

  const NetworkSpec& spec() const noexcept { return spec_; }
  std::vector<nn::Parameter<T>>& parameters() noexcept { return params_; }
  const std::vector<nn::Parameter<T>>& parameters() const noexcept { return params_; }

  nn::Parameter<T>* find(std::string_view name) {
    for (auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  std::size_t count_parameters() const {
    std::size_t n = 0;
    for (const auto& p : params_)
      if (p.trainable) n += p.value.size();
    return n;
  }

  std::vector<LayerInfo> describe(Extent3 e = {32, 128, 128}) const { return wavecube::describe(spec_, e); }

  /// He-normal conv weights, zero biases, unit BN scale, fresh running stats.
  void init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& p : params_) {
      const std::string_view n = p.name;
      auto ends = [&](std::string_view suffix) {
        return n.size() >= suffix.size() && n.substr(n.size() - suffix.size()) == suffix;
      };
      if (ends(".weight")) {
        const nn::Shape5& s = p.value.shape();
        const double fan_in = static_cast<double>(s.c * s.d * s.m * s.n);
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        for (T& v : p.value.storage()) v = static_cast<T>(dist(rng));
      } else if (ends(".gamma") || ends(".running_var")) {
        p.value.fill(T(1));
      } else {
        p.value.fill(T(0));
      }
      p.grad.fill(T(0));
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(T(0));
  }

  void check_input(const nn::Shape5& s) const {
    if (s.c != spec_.input_channels())
      throw Error(Errc::channel_mismatch, "network expects " + std::to_string(spec_.input_channels()) +
                                              " input channels, got " + s.str());
    const std::size_t q = spec_.divisor();
    if (s.d == 0 || s.m == 0 || s.n == 0 || s.d % q || s.m % q || s.n % q)
      throw Error(Errc::indivisible_extent, "spatial extent " + s.extent().str() +
                                                " is not divisible by " + std::to_string(q));
  }

  /// Records the forward pass on `t` and returns the logits node.
  nn::Var forward(nn::Tape<T>& t, nn::Var input, nn::Mode mode) {
    check_input(t.shape(input));
    const std::size_t L = spec_.levels;
    struct Branch {
      nn::Var skip;
      nn::Var high;
      nn::PoolIndices indices;
      Extent3 extent;
    };
    std::vector<Branch> branch(L);
    nn::Var h = input;
    for (std::size_t l = 0; l < L; ++l) {
      const Level& lv = encoder_[l];
      h = block(t, lv.conv1, h, mode);
      h = block(t, lv.conv2, h, mode);
      branch[l].skip = h;
      switch (spec_.dual_structure) {
        case DualStructure::PU:
        case DualStructure::PDc: {
          auto p = nn::maxpool2(t, h);
          branch[l].indices = p.indices;
          branch[l].extent = p.input_extent;
          h = p.out;
          break;
        }
        case DualStructure::ScIn:
          h = nn::conv3d(t, h, t.param(params_[lv.sample.w]), t.param(params_[lv.sample.b]), 2, 0);
          break;
        case DualStructure::DDc:
        case DualStructure::DIn: h = nn::dwt_layer(t, h, *bank_).low; break;
        case DualStructure::DI:
        case DualStructure::DIDn: {
          auto d = nn::dwt_layer(t, h, *bank_);
          branch[l].high = spec_.dual_structure == DualStructure::DIDn
                               ? nn::hard_shrink(t, d.high, spec_.shrink_lambda)
                               : d.high;
          h = d.low;
          break;
        }
      }
    }
    h = block(t, bottom1_, h, mode);
    h = block(t, bottom2_, h, mode);
    for (std::size_t i = 0; i < L; ++i) {
      const std::size_t l = L - 1 - i;
      const Level& lv = decoder_[l];
      const Branch& br = branch[l];
      switch (spec_.dual_structure) {
        case DualStructure::PU: h = nn::maxunpool2(t, h, br.indices, br.extent); break;
        case DualStructure::PDc:
        case DualStructure::DDc:
          h = nn::deconv2(t, h, t.param(params_[lv.sample.w]), t.param(params_[lv.sample.b]));
          break;
        case DualStructure::ScIn:
        case DualStructure::DIn: h = nn::interpolate2(t, h); break;
        case DualStructure::DI:
        case DualStructure::DIDn: h = nn::idwt_layer(t, h, br.high, *bank_); break;
      }
      if (concatenates(spec_.dual_structure)) h = nn::concat_channels(t, br.skip, h);
      h = block(t, lv.conv1, h, mode);
      h = block(t, lv.conv2, h, mode);
    }
    return nn::conv3d(t, h, t.param(params_[head_.w]), t.param(params_[head_.b]), 1, 0);
  }

  /// Eval-mode logits without recording gradients.
  nn::Tensor<T> infer(const nn::Tensor<T>& input) {
    nn::Tape<T> t(false);
    const nn::Var x = t.input(input);
    const nn::Var y = forward(t, x, nn::Mode::eval);
    return t.value(y);
  }

 private:
  struct ConvBn {
    std::size_t w, b, gamma, beta, mean, var;
  };
  struct Sampler {
    std::size_t w = 0, b = 0;
  };
  struct Level {
    ConvBn conv1, conv2;
    Sampler sample;
  };

  std::size_t add(std::string name, nn::Shape5 shape, bool trainable = true) {
    params_.emplace_back(std::move(name), nn::Tensor<T>(shape), trainable);
    return params_.size() - 1;
  }

  ConvBn add_conv(const std::string& prefix, std::size_t in, std::size_t out) {
    ConvBn c{};
    c.w = add(prefix + ".weight", {out, in, 3, 3, 3});
    c.b = add(prefix + ".bias", {1, out, 1, 1, 1});
    c.gamma = add(prefix + ".bn.gamma", {1, out, 1, 1, 1});
    c.beta = add(prefix + ".bn.beta", {1, out, 1, 1, 1});
    c.mean = add(prefix + ".bn.running_mean", {1, out, 1, 1, 1}, false);
    c.var = add(prefix + ".bn.running_var", {1, out, 1, 1, 1}, false);
    return c;
  }

  void build() {
    const std::size_t L = spec_.levels;
    encoder_.resize(L);
    decoder_.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
      const auto [a, b] = spec_.encoder_channels[l];
      const std::string p = "enc" + std::to_string(l + 1);
      encoder_[l].conv1 = add_conv(p + ".conv1", a, b);
      encoder_[l].conv2 = add_conv(p + ".conv2", b, b);
      if (spec_.dual_structure == DualStructure::ScIn) {
        encoder_[l].sample.w = add(p + ".down.weight", {b, b, 2, 2, 2});
        encoder_[l].sample.b = add(p + ".down.bias", {1, b, 1, 1, 1});
      }
    }
    bottom1_ = add_conv("bottom.conv1", spec_.bottom_channels.first, spec_.bottom_channels.second);
    bottom2_ = add_conv("bottom.conv2", spec_.bottom_channels.second, spec_.bottom_channels.second);
    std::size_t mainstream = spec_.bottom_channels.second;
    for (std::size_t i = 0; i < L; ++i) {
      const std::size_t l = L - 1 - i;
      const std::string p = "dec" + std::to_string(l + 1);
      Level& lv = decoder_[l];
      if (spec_.dual_structure == DualStructure::PDc || spec_.dual_structure == DualStructure::DDc) {
        lv.sample.w = add(p + ".up.weight", {plan_.upsampled[l], mainstream, 2, 2, 2});
        lv.sample.b = add(p + ".up.bias", {1, plan_.upsampled[l], 1, 1, 1});
      }
      const auto [a, b] = spec_.decoder_channels[i];
      lv.conv1 = add_conv(p + ".conv1", plan_.decoder_in[l], a);
      lv.conv2 = add_conv(p + ".conv2", a, b);
      mainstream = b;
    }
    head_.w = add("head.weight", {spec_.classes, mainstream, 1, 1, 1});
    head_.b = add("head.bias", {1, spec_.classes, 1, 1, 1});
  }

  nn::Var block(nn::Tape<T>& t, const ConvBn& c, nn::Var x, nn::Mode mode) {
    const nn::Var y = nn::conv3d(t, x, t.param(params_[c.w]), t.param(params_[c.b]), 1, 1);
    const nn::Var z = nn::batchnorm(t, y, t.param(params_[c.gamma]), t.param(params_[c.beta]),
                                    params_[c.mean], params_[c.var], mode);
    return nn::relu(t, z);
  }

  NetworkSpec spec_;
  detail::LayerPlan plan_;
  std::optional<FilterBank> bank_;
  std::vector<nn::Parameter<T>> params_;
  std::vector<Level> encoder_, decoder_;
  ConvBn bottom1_{}, bottom2_{};
  Sampler head_{};
};

}  // namespace wavecube
