#pragma once

#include "beliefgeo/common.hpp"

#include <cstring>
#include <fstream>
#include <string>

// Little-endian primitive and matrix IO shared by the artifact formats
// (BGLM, BGSA, BGAA, BGAD).

namespace beliefgeo::binio {

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("binio: truncated stream while reading a scalar");
  return v;
}

inline void write_magic(std::ostream& os, const char magic[5]) { os.write(magic, 4); }

inline void expect_magic(std::istream& is, const char magic[5], const std::string& what) {
  char buf[4];
  is.read(buf, 4);
  if (!is || std::memcmp(buf, magic, 4) != 0) {
    throw FormatError(what + ": bad magic, expected '" + std::string(magic, 4) + "'");
  }
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
  const auto n = read_pod<std::uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw FormatError("binio: truncated stream while reading a string");
  return s;
}

template <class Real>
void write_mat(std::ostream& os, const Mat<Real>& m) {
  write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
  write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(sizeof(Real) * m.size()));
}

template <class Real>
Mat<Real> read_mat(std::istream& is) {
  const auto rows = read_pod<std::uint64_t>(is);
  const auto cols = read_pod<std::uint64_t>(is);
  Mat<Real> m(static_cast<long>(rows), static_cast<long>(cols));
  is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(Real) * m.size()));
  if (!is) throw FormatError("binio: truncated stream while reading a matrix");
  return m;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open for writing: " + path);
  return os;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingArtifactError("cannot open: " + path);
  return is;
}

}  // namespace beliefgeo::binio
