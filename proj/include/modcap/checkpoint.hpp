#pragma once

// Parameter checkpoint file:
//
//   "MODCAP01"                     8 bytes
//   count                          u64
//   repeated `count` times, parameters in ascending name order:
//     name_length                  u64
//     name                         name_length bytes (no terminator)
//     rank                         u64
//     dims                         rank x u64
//     values                       prod(dims) x IEEE-754 binary64
//
// All integers and floats are little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "modcap/params.hpp"

namespace modcap {

inline constexpr char kCheckpointMagic[8] = {'M', 'O', 'D', 'C', 'A', 'P', '0', '1'};

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::istream& is, const std::string& what) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw CheckpointError("checkpoint truncated while reading " + what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

}  // namespace detail

template <typename T>
void write_checkpoint(std::ostream& os, const ParamStore<T>& params) {
  os.write(kCheckpointMagic, 8);
  detail::put_u64(os, params.size());
  for (auto id : params.ids_sorted_by_name()) {
    const auto& name = params.name(id);
    const auto& t = params[id];
    detail::put_u64(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u64(os, t.rank());
    for (auto d : t.shape()) detail::put_u64(os, d);
    for (std::size_t i = 0; i < t.size(); ++i)
      detail::put_u64(os, std::bit_cast<std::uint64_t>(static_cast<double>(t[i])));
  }
}

template <typename T>
void save_checkpoint(const std::string& path, const ParamStore<T>& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open '" + path + "' for writing");
  write_checkpoint(os, params);
  if (!os) throw CheckpointError("write failed for '" + path + "'");
}

inline ParamStore<double> read_checkpoint(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw CheckpointError("not a checkpoint (bad magic)");
  const auto count = detail::get_u64(is, "parameter count");
  ParamStore<double> out;
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto len = detail::get_u64(is, "name length");
    if (len > (1u << 20)) throw CheckpointError("implausible name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(len))) throw CheckpointError("checkpoint truncated in name");
    const auto rank = detail::get_u64(is, "rank of '" + name + "'");
    if (rank > 8) throw CheckpointError("implausible rank for '" + name + "'");
    Shape shape(rank);
    for (auto& d : shape) d = detail::get_u64(is, "shape of '" + name + "'");
    Tensor<double> t(shape);
    for (std::size_t i = 0; i < t.size(); ++i)
      t[i] = std::bit_cast<double>(detail::get_u64(is, "values of '" + name + "'"));
    out.add(name, std::move(t));
  }
  return out;
}

inline ParamStore<double> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint '" + path + "'");
  return read_checkpoint(is);
}

/// Copies values from `src` into same-named, same-shaped entries of `dst`.
template <typename T>
void assign_from(ParamStore<T>& dst, const ParamStore<double>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const auto& name = dst.name(i);
    if (!src.contains(name)) throw CheckpointError("checkpoint lacks parameter '" + name + "'");
    const auto& s = src.at(name);
    if (s.shape() != dst[i].shape())
      throw CheckpointError("parameter '" + name + "' has shape " + shape_str(s.shape()) + ", model expects " +
                            shape_str(dst[i].shape()));
    for (std::size_t j = 0; j < s.size(); ++j) dst[i][j] = static_cast<T>(s[j]);
  }
}

}  // namespace modcap
