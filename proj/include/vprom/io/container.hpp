#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <thread>
#include <vector>

#include "vprom/error.hpp"
#include "vprom/linalg.hpp"

namespace vprom::io {

// Layout: "VPRM" | u16 version | u16 dtype | u32 rank | rank x u64 dims |
// payload of prod(dims) little-endian f64 in row-major order.
inline constexpr std::array<char, 4> kMagic{'V', 'P', 'R', 'M'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::uint16_t kDtypeF64 = 1;

/// N-dimensional f64 array in row-major order.
struct Array {
  std::vector<std::uint64_t> dims;
  std::vector<double> data;

  std::uint64_t count() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <class T>
T get_le(const unsigned char* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string encode(const Array& a) {
  if (a.count() != a.data.size()) throw ShapeError("encode: payload length does not match dims");
  if (a.dims.size() > 0xFFFFFFFFull) throw ShapeError("encode: rank too large");
  std::string out(kMagic.begin(), kMagic.end());
  detail::put_le(out, kVersion);
  detail::put_le(out, kDtypeF64);
  detail::put_le(out, static_cast<std::uint32_t>(a.dims.size()));
  for (auto d : a.dims) detail::put_le(out, d);
  out.reserve(out.size() + 8 * a.data.size());
  for (double v : a.data) detail::put_le(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

inline Array decode(const std::string& bytes, const std::string& origin = "<memory>") {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  auto need = [&](std::size_t off, std::size_t len) {
    if (off + len > n) throw IoError(origin + ": truncated array container");
  };
  need(0, 12);
  if (std::memcmp(p, kMagic.data(), 4) != 0) throw IoError(origin + ": not an array container (bad magic)");
  const auto version = detail::get_le<std::uint16_t>(p + 4);
  if (version != kVersion) throw IoError(origin + ": unsupported container version " + std::to_string(version));
  const auto dtype = detail::get_le<std::uint16_t>(p + 6);
  if (dtype != kDtypeF64) throw IoError(origin + ": unsupported dtype code " + std::to_string(dtype));
  const auto rank = detail::get_le<std::uint32_t>(p + 8);
  std::size_t off = 12;
  need(off, 8ull * rank);
  Array a;
  a.dims.resize(rank);
  for (std::uint32_t i = 0; i < rank; ++i, off += 8) a.dims[i] = detail::get_le<std::uint64_t>(p + off);
  const std::uint64_t count = a.count();
  if (n - off != 8 * count) throw IoError(origin + ": payload length differs from 8 * prod(dims)");
  a.data.resize(count);
  for (std::uint64_t i = 0; i < count; ++i, off += 8) a.data[i] = std::bit_cast<double>(detail::get_le<std::uint64_t>(p + off));
  return a;
}

/// Write through a temporary file in the same directory, then rename.
inline void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    os.flush();
    if (!os) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

inline void save_array(const std::filesystem::path& path, const Array& a) { write_atomic(path, encode(a)); }

inline Array load_array(const std::filesystem::path& path) { return decode(read_file(path), path.string()); }

inline Array to_array(const Matrix& m) {
  Array a;
  a.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  a.data.resize(static_cast<std::size_t>(m.size()));
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(a.data.data(), m.rows(),
                                                                                   m.cols()) = m;
  return a;
}

inline Array to_array(const Vector& v) {
  Array a;
  a.dims = {static_cast<std::uint64_t>(v.size())};
  a.data.assign(v.data(), v.data() + v.size());
  return a;
}

inline Array to_array(const std::vector<double>& v) { return Array{{v.size()}, v}; }

inline Matrix to_matrix(const Array& a) {
  if (a.dims.size() != 2) throw IoError("expected a rank-2 array, got rank " + std::to_string(a.dims.size()));
  const auto r = static_cast<Eigen::Index>(a.dims[0]);
  const auto c = static_cast<Eigen::Index>(a.dims[1]);
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(a.data.data(), r, c);
}

inline Vector to_vector(const Array& a) {
  if (a.dims.size() != 1) throw IoError("expected a rank-1 array, got rank " + std::to_string(a.dims.size()));
  return Eigen::Map<const Vector>(a.data.data(), static_cast<Eigen::Index>(a.data.size()));
}

inline void save_matrix(const std::filesystem::path& path, const Matrix& m) { save_array(path, to_array(m)); }
inline Matrix load_matrix(const std::filesystem::path& path) { return to_matrix(load_array(path)); }

}  // namespace vprom::io
