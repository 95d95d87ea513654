#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "profkg/error.hpp"
#include "profkg/tensor.hpp"

namespace profkg {

// Layout: "SPKE", u32 version, u64 rows, u64 cols, rows*cols f32; all little-endian.
inline constexpr std::array<char, 4> kMatrixMagic{'S', 'P', 'K', 'E'};
inline constexpr std::uint32_t kMatrixVersion = 1;
inline constexpr std::size_t kMatrixHeaderBytes = 4 + 4 + 8 + 8;

namespace detail {

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(const char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string encode_matrix(const Matrix<float>& m) {
  std::string out;
  out.reserve(kMatrixHeaderBytes + 4 * m.size());
  out.append(kMatrixMagic.data(), kMatrixMagic.size());
  detail::put_le<std::uint32_t>(out, kMatrixVersion);
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(m.data()[i]));
  return out;
}

// Truncated: the header is incomplete or the payload ends inside a float.
// HeaderMismatch: a whole number of floats that disagrees with rows x cols.
inline Matrix<float> decode_matrix(const std::string& bytes, const std::string& origin = "<memory>") {
  if (bytes.size() < 4) throw Error(ErrorCode::truncated, origin + ": missing magic");
  if (std::memcmp(bytes.data(), kMatrixMagic.data(), 4) != 0) throw Error(ErrorCode::bad_magic, origin);
  if (bytes.size() < kMatrixHeaderBytes) throw Error(ErrorCode::truncated, origin + ": incomplete header");
  const auto version = detail::get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kMatrixVersion)
    throw Error(ErrorCode::header_mismatch, origin + ": unsupported version " + std::to_string(version));
  const auto rows = detail::get_le<std::uint64_t>(bytes.data() + 8);
  const auto cols = detail::get_le<std::uint64_t>(bytes.data() + 16);
  const std::size_t payload = bytes.size() - kMatrixHeaderBytes;
  if (payload % 4 != 0) throw Error(ErrorCode::truncated, origin + ": payload ends mid-value");
  if (payload / 4 != rows * cols)
    throw Error(ErrorCode::header_mismatch, origin + ": header declares " + std::to_string(rows) + "x" +
                                                std::to_string(cols) + " but payload holds " +
                                                std::to_string(payload / 4) + " values");
  Matrix<float> m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const char* p = bytes.data() + kMatrixHeaderBytes;
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(p + 4 * i));
  return m;
}

inline void write_matrix(const std::string& path, const Matrix<float>& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
  const std::string bytes = encode_matrix(m);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io_error, "short write to " + path);
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline Matrix<float> read_matrix(const std::string& path) { return decode_matrix(read_file_bytes(path), path); }

inline void write_index(const std::string& path, const std::vector<std::string>& labels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
  for (const auto& l : labels) out << l << '\n';
}

inline std::vector<std::string> read_index(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace profkg
