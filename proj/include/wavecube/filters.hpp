#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "wavecube/error.hpp"
#include "wavecube/filter_tables.hpp"

namespace wavecube {

/// One-dimensional wavelet filter pair with its duals.
struct FilterBank {
  std::string name;
  std::vector<double> lo_dec;
  std::vector<double> hi_dec;
  std::vector<double> lo_rec;
  std::vector<double> hi_rec;
  bool orthogonal = false;

  std::size_t length() const noexcept { return lo_dec.size(); }
};

/// The eight subband tags in canonical order. Letter i selects the 1D filter
/// along axis i (z, y, x).
inline constexpr std::array<std::string_view, 8> subband_tags{"lll", "llh", "lhl", "lhh",
                                                              "hll", "hlh", "hhl", "hhh"};

/// Bit i (from the most significant of three) is 1 when axis i is high-pass.
constexpr bool subband_is_high(std::size_t tag, int axis) noexcept {
  return ((tag >> (2 - axis)) & 1u) != 0;
}

inline std::size_t subband_index(std::string_view tag) {
  for (std::size_t i = 0; i < subband_tags.size(); ++i)
    if (subband_tags[i] == tag) return i;
  throw Error(Errc::invalid_argument, "unknown subband tag '" + std::string(tag) + "'");
}

inline std::string builtin_wavelet_names() {
  std::string out;
  for (const auto& t : tables::builtin) {
    if (!out.empty()) out += ", ";
    out += t.name;
  }
  return out;
}

inline FilterBank builtin_bank(std::string_view name) {
  for (const auto& t : tables::builtin) {
    if (t.name != name) continue;
    return FilterBank{std::string(t.name),
                      {t.lo_dec.begin(), t.lo_dec.end()},
                      {t.hi_dec.begin(), t.hi_dec.end()},
                      {t.lo_rec.begin(), t.lo_rec.end()},
                      {t.hi_rec.begin(), t.hi_rec.end()},
                      t.orthogonal};
  }
  throw Error(Errc::unknown_wavelet,
              "'" + std::string(name) + "'; valid wavelets: " + builtin_wavelet_names());
}

enum class FilterRole { decomposition, reconstruction };

/// L x L x L tensor-product filter for one subband.
struct Filter3D {
  std::string_view subband_tag;
  std::size_t length = 0;
  std::vector<double> coefficients;  // [i][j][k], k fastest

  double operator()(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return coefficients[(i * length + j) * length + k];
  }
};

inline std::array<Filter3D, 8> tensor_filters(const FilterBank& bank, FilterRole role) {
  const auto& lo = role == FilterRole::decomposition ? bank.lo_dec : bank.lo_rec;
  const auto& hi = role == FilterRole::decomposition ? bank.hi_dec : bank.hi_rec;
  const std::size_t len = lo.size();
  std::array<Filter3D, 8> out;
  for (std::size_t t = 0; t < 8; ++t) {
    const auto& fz = subband_is_high(t, 0) ? hi : lo;
    const auto& fy = subband_is_high(t, 1) ? hi : lo;
    const auto& fx = subband_is_high(t, 2) ? hi : lo;
    Filter3D& f = out[t];
    f.subband_tag = subband_tags[t];
    f.length = len;
    f.coefficients.resize(len * len * len);
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t j = 0; j < len; ++j)
        for (std::size_t k = 0; k < len; ++k)
          f.coefficients[(i * len + j) * len + k] = fz[i] * fy[j] * fx[k];
  }
  return out;
}

namespace detail {

// Periodic single-level analysis/synthesis on a 1D signal, used by the bank
// validator; the 3D transforms have their own strided kernels.
inline std::vector<double> analyze_1d(const std::vector<double>& x, const std::vector<double>& f) {
  const std::size_t n = x.size();
  std::vector<double> y(n / 2, 0.0);
  for (std::size_t i = 0; i < n / 2; ++i)
    for (std::size_t k = 0; k < f.size(); ++k) y[i] += f[k] * x[(2 * i + k) % n];
  return y;
}

inline void synthesize_1d(const std::vector<double>& y, const std::vector<double>& f,
                          std::vector<double>& x) {
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t k = 0; k < f.size(); ++k) x[(2 * i + k) % n] += f[k] * y[i];
}

}  // namespace detail

struct BankCheck {
  std::string name;
  bool passed = false;
  double residual = 0.0;
};

struct BankReport {
  std::string wavelet;
  bool orthogonal = false;
  std::vector<BankCheck> checks;

  bool passed() const noexcept {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }
  const BankCheck* find(std::string_view check) const noexcept {
    for (const auto& c : checks)
      if (c.name == check) return &c;
    return nullptr;
  }
};

/// Checks every structural invariant of `bank`; never throws.
inline BankReport validate_bank(const FilterBank& bank, double tol = 1e-10,
                                std::uint64_t seed = 7) {
  BankReport rep;
  rep.wavelet = bank.name;
  rep.orthogonal = bank.orthogonal;

  const bool even_equal = !bank.lo_dec.empty() && bank.lo_dec.size() == bank.hi_dec.size() &&
                          bank.lo_dec.size() % 2 == 0 && bank.lo_rec.size() == bank.lo_dec.size() &&
                          bank.hi_rec.size() == bank.lo_dec.size();
  rep.checks.push_back({"even_equal_length", even_equal, even_equal ? 0.0 : 1.0});

  const double lo_sum = std::accumulate(bank.lo_dec.begin(), bank.lo_dec.end(), 0.0);
  const double lo_res = std::abs(lo_sum - std::sqrt(2.0));
  rep.checks.push_back({"lowpass_sum_sqrt2", lo_res <= tol, lo_res});

  const double hi_res = std::abs(std::accumulate(bank.hi_dec.begin(), bank.hi_dec.end(), 0.0));
  rep.checks.push_back({"highpass_zero_sum", hi_res <= tol, hi_res});

  if (bank.orthogonal) {
    double dual_res = 0.0;
    if (bank.lo_rec.size() == bank.lo_dec.size() && bank.hi_rec.size() == bank.hi_dec.size()) {
      for (std::size_t i = 0; i < bank.lo_dec.size(); ++i) {
        dual_res = std::max(dual_res, std::abs(bank.lo_rec[i] - bank.lo_dec[i]));
        dual_res = std::max(dual_res, std::abs(bank.hi_rec[i] - bank.hi_dec[i]));
      }
    } else {
      dual_res = 1.0;
    }
    rep.checks.push_back({"orthogonal_duals_equal", dual_res == 0.0, dual_res});
  }

  if (even_equal) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> s(std::max<std::size_t>(16, 2 * bank.length() + 2));
    for (auto& v : s) v = dist(rng);
    std::vector<double> r(s.size(), 0.0);
    detail::synthesize_1d(detail::analyze_1d(s, bank.lo_dec), bank.lo_rec, r);
    detail::synthesize_1d(detail::analyze_1d(s, bank.hi_dec), bank.hi_rec, r);
    double pr = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) pr = std::max(pr, std::abs(r[i] - s[i]));
    rep.checks.push_back({"perfect_reconstruction", pr <= tol, pr});
  } else {
    rep.checks.push_back({"perfect_reconstruction", false, 1.0});
  }
  return rep;
}

}  // namespace wavecube
