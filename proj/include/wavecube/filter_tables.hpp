#pragma once

// Coefficient tables for the built-in wavelets.
//
// Layout convention: `dec` filters are applied by correlation,
//   y[i] = sum_k dec[k] * x[(2i + k) mod N],
// and `rec` filters by the transposed scatter,
//   x[(2i + k) mod N] += rec[k] * y[i].
// Under this convention the Haar high-pass is (1, -1)/sqrt(2) and every
// orthogonal bank has rec == dec.
//
// Daubechies values are the standard 17-digit tables (time-reversed from the
// usual convolution form). ch2.2 and ch4.4 are the Cohen-Daubechies-Feauveau
// biorthogonal pairs (5/3 and 9/7); ch4.4 was re-derived in extended precision
// from the real root of 1 + 4y + 10y^2 + 20y^3 and rounded to 17 digits.

#include <array>
#include <span>
#include <string_view>

namespace wavecube::tables {

struct BankTable {
  std::string_view name;
  bool orthogonal;
  std::span<const double> lo_dec;
  std::span<const double> hi_dec;
  std::span<const double> lo_rec;
  std::span<const double> hi_rec;
};

inline constexpr std::array<double, 2> haar_lo{0.70710678118654757, 0.70710678118654757};
inline constexpr std::array<double, 2> haar_hi{0.70710678118654757, -0.70710678118654757};

inline constexpr std::array<double, 4> db2_lo{0.48296291314453416, 0.83651630373780794,
                                              0.22414386804201339, -0.12940952255126037};
inline constexpr std::array<double, 4> db2_hi{-0.12940952255126037, -0.22414386804201339,
                                              0.83651630373780794, -0.48296291314453416};

inline constexpr std::array<double, 6> db3_lo{0.33267055295008263,  0.80689150931109255,
                                              0.45987750211849154,  -0.13501102001025458,
                                              -0.085441273882026658, 0.035226291885709533};
inline constexpr std::array<double, 6> db3_hi{0.035226291885709533, 0.085441273882026658,
                                              -0.13501102001025458, -0.45987750211849154,
                                              0.80689150931109255,  -0.33267055295008263};

inline constexpr std::array<double, 8> db4_lo{
    0.23037781330889651,  0.71484657055291567,  0.63088076792985892,  -0.027983769416859854,
    -0.18703481171909309, 0.030841381835560764, 0.032883011666885197, -0.010597401785069032};
inline constexpr std::array<double, 8> db4_hi{
    -0.010597401785069032, -0.032883011666885197, 0.030841381835560764, 0.18703481171909309,
    -0.027983769416859854, -0.63088076792985892, 0.71484657055291567,  -0.23037781330889651};

inline constexpr std::array<double, 6> ch22_lo_dec{-0.17677669529663689, 0.35355339059327379,
                                                   1.0606601717798212,   0.35355339059327379,
                                                   -0.17677669529663689, 0.0};
inline constexpr std::array<double, 6> ch22_hi_dec{0.0, 0.0, 0.35355339059327379,
                                                   -0.70710678118654757, 0.35355339059327379, 0.0};
inline constexpr std::array<double, 6> ch22_lo_rec{0.0, 0.35355339059327379, 0.70710678118654757,
                                                   0.35355339059327379, 0.0, 0.0};
inline constexpr std::array<double, 6> ch22_hi_rec{0.0, 0.17677669529663689, 0.35355339059327379,
                                                   -1.0606601717798212, 0.35355339059327379,
                                                   0.17677669529663689};

inline constexpr std::array<double, 10> ch44_lo_dec{
    0.037828455506995461, -0.023849465019380002, -0.11062440441842341, 0.37740285561265376,
    0.85269867900940342,  0.37740285561265376,   -0.11062440441842341, -0.023849465019380002,
    0.037828455506995461, 0.0};
inline constexpr std::array<double, 10> ch44_hi_dec{
    0.0, 0.0, -0.064538882628938439, 0.040689417609558437, 0.4180922732222122,
    -0.7884856164056644, 0.4180922732222122, 0.040689417609558437, -0.064538882628938439, 0.0};
inline constexpr std::array<double, 10> ch44_lo_rec{
    0.0, -0.064538882628938439, -0.040689417609558437, 0.4180922732222122, 0.7884856164056644,
    0.4180922732222122, -0.040689417609558437, -0.064538882628938439, 0.0, 0.0};
inline constexpr std::array<double, 10> ch44_hi_rec{
    0.0, -0.037828455506995461, -0.023849465019380002, 0.11062440441842341, 0.37740285561265376,
    -0.85269867900940342, 0.37740285561265376, 0.11062440441842341, -0.023849465019380002,
    -0.037828455506995461};

inline constexpr std::array<BankTable, 6> builtin{{
    {"haar", true, haar_lo, haar_hi, haar_lo, haar_hi},
    {"db2", true, db2_lo, db2_hi, db2_lo, db2_hi},
    {"db3", true, db3_lo, db3_hi, db3_lo, db3_hi},
    {"db4", true, db4_lo, db4_hi, db4_lo, db4_hi},
    {"ch2.2", false, ch22_lo_dec, ch22_hi_dec, ch22_lo_rec, ch22_hi_rec},
    {"ch4.4", false, ch44_lo_dec, ch44_hi_dec, ch44_lo_rec, ch44_hi_rec},
}};

}  // namespace wavecube::tables
