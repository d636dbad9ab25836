#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "wavecube/error.hpp"
#include "wavecube/volume.hpp"

// NVOL container: "NVOL", version byte (1), dtype byte (1 = f32, 2 = u8),
// three u32 little-endian extents d, m, n, then the z-y-x row-major payload.

namespace wavecube::data {

enum class DType : std::uint8_t { f32 = 1, u8 = 2 };

inline constexpr std::array<char, 4> nvol_magic{'N', 'V', 'O', 'L'};
inline constexpr std::uint8_t nvol_version = 1;
inline constexpr std::size_t nvol_header_bytes = 4 + 1 + 1 + 12;

namespace detail {

template <class T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, std::uint8_t>,
                "NVOL stores float or uint8 volumes");
  return std::is_same_v<T, float> ? DType::f32 : DType::u8;
}

inline void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

}  // namespace detail

template <class T>
std::vector<char> encode_volume(const Volume3D<T>& v) {
  std::vector<char> out(nvol_magic.begin(), nvol_magic.end());
  out.push_back(static_cast<char>(nvol_version));
  out.push_back(static_cast<char>(detail::dtype_of<T>()));
  const Extent3& e = v.extent();
  for (const std::size_t x : {e.d, e.m, e.n}) {
    if (x > 0xffffffffu) throw Error(Errc::invalid_argument, "extent exceeds 32 bits");
    detail::put_u32(out, static_cast<std::uint32_t>(x));
  }
  const std::size_t head = out.size();
  out.resize(head + v.size() * sizeof(T));
  std::memcpy(out.data() + head, v.storage().data(), v.size() * sizeof(T));
  if constexpr (sizeof(T) > 1 && std::endian::native == std::endian::big) {
    for (std::size_t i = head; i < out.size(); i += sizeof(T))
      std::reverse(out.begin() + i, out.begin() + i + sizeof(T));
  }
  return out;
}

/// Either element type, as stored on disk.
using AnyVolume = std::variant<Volume3D<float>, LabelVolume>;

inline AnyVolume decode_any(const std::vector<char>& buf, const std::string& where = "buffer") {
  if (buf.size() < 4 || !std::equal(nvol_magic.begin(), nvol_magic.end(), buf.begin()))
    throw Error(Errc::bad_magic, where + " does not start with NVOL");
  if (buf.size() < nvol_header_bytes)
    throw Error(Errc::truncated_payload, where + ": header is cut short");
  if (static_cast<std::uint8_t>(buf[4]) != nvol_version)
    throw Error(Errc::bad_magic, where + ": unsupported NVOL version " +
                                     std::to_string(static_cast<unsigned>(static_cast<std::uint8_t>(buf[4]))));
  const auto code = static_cast<std::uint8_t>(buf[5]);
  const Extent3 e{detail::get_u32(buf.data() + 6), detail::get_u32(buf.data() + 10),
                  detail::get_u32(buf.data() + 14)};
  auto body = [&](auto tag) {
    using T = decltype(tag);
    const std::size_t want = e.size() * sizeof(T);
    const std::size_t have = buf.size() - nvol_header_bytes;
    if (have != want)
      throw Error(Errc::truncated_payload, where + ": header declares " + e.str() + " (" +
                                               std::to_string(want) + " bytes), payload has " +
                                               std::to_string(have));
    std::vector<T> vals(e.size());
    std::memcpy(vals.data(), buf.data() + nvol_header_bytes, want);
    if constexpr (sizeof(T) > 1 && std::endian::native == std::endian::big) {
      auto* raw = reinterpret_cast<unsigned char*>(vals.data());
      for (std::size_t i = 0; i < want; i += sizeof(T)) std::reverse(raw + i, raw + i + sizeof(T));
    }
    return Volume3D<T>(e, std::move(vals));
  };
  if (code == static_cast<std::uint8_t>(DType::f32)) return body(float{});
  if (code == static_cast<std::uint8_t>(DType::u8)) return body(std::uint8_t{});
  throw Error(Errc::bad_magic, where + ": unknown dtype code " + std::to_string(code));
}

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline AnyVolume read_any_volume(const std::filesystem::path& path) {
  return decode_any(read_file(path), path.string());
}

/// Reads a volume of element type T; the stored dtype must match.
template <class T>
Volume3D<T> read_volume(const std::filesystem::path& path) {
  AnyVolume any = read_any_volume(path);
  if (auto* v = std::get_if<Volume3D<T>>(&any)) return std::move(*v);
  throw Error(Errc::extent_mismatch, path.string() + " holds " +
                                         (std::holds_alternative<LabelVolume>(any) ? "u8" : "f32") +
                                         " data, expected " +
                                         (std::is_same_v<T, float> ? "f32" : "u8"));
}

/// Reads any stored dtype and converts to float.
inline Volume3D<float> read_volume_as_float(const std::filesystem::path& path) {
  AnyVolume any = read_any_volume(path);
  if (auto* v = std::get_if<Volume3D<float>>(&any)) return std::move(*v);
  return std::get<LabelVolume>(any).cast<float>();
}

template <class T>
void write_volume(const std::filesystem::path& path, const Volume3D<T>& v) {
  const std::vector<char> buf = encode_volume(v);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  out.flush();
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

}  // namespace wavecube::data
