#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "wavecube/arch.hpp"
#include "wavecube/error.hpp"
#include "wavecube/nn/tape.hpp"

namespace wavecube {

// Layout:
//   WCKPT 1
//   spec <n>            followed by n lines of NetworkSpec::serialize()
//   tag <free text>
//   entry <name> <f32|f64> <b> <c> <d> <m> <n> <offset> <bytes>   (one per tensor)
//   ---
//   <little-endian blobs, offsets relative to the byte after "---\n">

struct CheckpointEntry {
  std::string name;
  std::string dtype;
  nn::Shape5 shape;
  std::vector<unsigned char> bytes;
};

struct Checkpoint {
  NetworkSpec spec;
  std::string tag;
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(std::string_view name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
};

namespace detail {

template <class T>
constexpr const char* dtype_name() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? "f32" : "f64";
}

template <class T>
std::vector<unsigned char> to_le_bytes(const std::vector<T>& v) {
  std::vector<unsigned char> out(v.size() * sizeof(T));
  std::memcpy(out.data(), v.data(), out.size());
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < out.size(); i += sizeof(T))
      std::reverse(out.begin() + static_cast<std::ptrdiff_t>(i),
                   out.begin() + static_cast<std::ptrdiff_t>(i + sizeof(T)));
  }
  return out;
}

template <class T>
std::vector<T> from_le_bytes(std::vector<unsigned char> bytes) {
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < bytes.size(); i += sizeof(T))
      std::reverse(bytes.begin() + static_cast<std::ptrdiff_t>(i),
                   bytes.begin() + static_cast<std::ptrdiff_t>(i + sizeof(T)));
  }
  std::vector<T> out(bytes.size() / sizeof(T));
  std::memcpy(out.data(), bytes.data(), out.size() * sizeof(T));
  return out;
}

}  // namespace detail

template <class T>
Checkpoint make_checkpoint(const Network<T>& net, std::string tag = {}) {
  Checkpoint c;
  c.spec = net.spec();
  c.tag = std::move(tag);
  for (const auto& p : net.parameters())
    c.entries.push_back({p.name, detail::dtype_name<T>(), p.value.shape(),
                         detail::to_le_bytes(p.value.storage())});
  return c;
}

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::ostringstream head;
  const std::string spec_text = c.spec.serialize();
  std::size_t spec_lines = 0;
  for (const char ch : spec_text) spec_lines += ch == '\n';
  head << "WCKPT 1\n"
       << "spec " << spec_lines << '\n'
       << spec_text << "tag " << c.tag << '\n';
  std::size_t offset = 0;
  for (const auto& e : c.entries) {
    const auto& s = e.shape;
    head << "entry " << e.name << ' ' << e.dtype << ' ' << s.b << ' ' << s.c << ' ' << s.d << ' '
         << s.m << ' ' << s.n << ' ' << offset << ' ' << e.bytes.size() << '\n';
    offset += e.bytes.size();
  }
  head << "---\n";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  const std::string h = head.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& e : c.entries)
    out.write(reinterpret_cast<const char*>(e.bytes.data()), static_cast<std::streamsize>(e.bytes.size()));
  out.flush();
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const Network<T>& net, std::string tag = {}) {
  write_checkpoint(path, make_checkpoint(net, std::move(tag)));
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "WCKPT 1")
    throw Error(Errc::bad_magic, path.string() + " is not a wavecube checkpoint");
  Checkpoint c;
  std::size_t spec_lines = 0;
  if (!std::getline(in, line) || line.rfind("spec ", 0) != 0)
    throw Error(Errc::malformed_line, path.string() + ": missing spec header");
  try {
    spec_lines = std::stoul(line.substr(5));
  } catch (const std::exception&) {
    throw Error(Errc::malformed_line, path.string() + ": bad spec header '" + line + "'");
  }
  std::string spec_text;
  for (std::size_t i = 0; i < spec_lines; ++i) {
    if (!std::getline(in, line)) throw Error(Errc::truncated_payload, path.string() + ": spec cut short");
    spec_text += line + '\n';
  }
  c.spec = NetworkSpec::parse(spec_text);
  struct Pending {
    std::size_t offset, bytes;
  };
  std::vector<Pending> pending;
  bool done = false;
  while (std::getline(in, line)) {
    if (line == "---") {
      done = true;
      break;
    }
    if (line.rfind("tag ", 0) == 0) {
      c.tag = line.substr(4);
      continue;
    }
    std::istringstream ls(line);
    std::string word;
    CheckpointEntry e;
    Pending p{};
    if (!(ls >> word) || word != "entry" ||
        !(ls >> e.name >> e.dtype >> e.shape.b >> e.shape.c >> e.shape.d >> e.shape.m >> e.shape.n >>
          p.offset >> p.bytes))
      throw Error(Errc::malformed_line, path.string() + ": '" + line + "'");
    const std::size_t width = e.dtype == "f32" ? 4 : e.dtype == "f64" ? 8 : 0;
    if (width == 0 || p.bytes != e.shape.size() * width)
      throw Error(Errc::extent_mismatch, path.string() + ": entry " + e.name + " size disagrees with shape");
    c.entries.push_back(std::move(e));
    pending.push_back(p);
  }
  if (!done) throw Error(Errc::truncated_payload, path.string() + ": manifest has no terminator");
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  for (std::size_t i = 0; i < pending.size(); ++i) {
    const auto [off, bytes] = pending[i];
    if (off + bytes > blob.size())
      throw Error(Errc::truncated_payload, path.string() + ": entry " + c.entries[i].name + " runs past end of file");
    c.entries[i].bytes.assign(blob.begin() + static_cast<std::ptrdiff_t>(off),
                              blob.begin() + static_cast<std::ptrdiff_t>(off + bytes));
  }
  return c;
}

/// Copies every entry into the matching parameter of `net`. Names and shapes
/// must agree exactly; f32 and f64 blobs convert to T.
template <class T>
void load_into(Network<T>& net, const Checkpoint& c) {
  if (!(c.spec == net.spec()))
    throw Error(Errc::shape_mismatch, "checkpoint was written for " +
                                          std::string(to_string(c.spec.dual_structure)) +
                                          ", network is " + std::string(to_string(net.spec().dual_structure)));
  for (auto& p : net.parameters()) {
    const CheckpointEntry* e = c.find(p.name);
    if (!e) throw Error(Errc::shape_mismatch, "checkpoint lacks " + p.name);
    if (!(e->shape == p.value.shape()))
      throw Error(Errc::shape_mismatch, p.name + ": checkpoint " + e->shape.str() + ", network " +
                                            p.value.shape().str());
    if (e->dtype == "f32") {
      const auto v = detail::from_le_bytes<float>(e->bytes);
      for (std::size_t i = 0; i < v.size(); ++i) p.value[i] = static_cast<T>(v[i]);
    } else {
      const auto v = detail::from_le_bytes<double>(e->bytes);
      for (std::size_t i = 0; i < v.size(); ++i) p.value[i] = static_cast<T>(v[i]);
    }
  }
}

template <class T>
Network<T> load_network(const std::filesystem::path& path) {
  const Checkpoint c = read_checkpoint(path);
  Network<T> net(c.spec);
  load_into(net, c);
  return net;
}

}  // namespace wavecube
