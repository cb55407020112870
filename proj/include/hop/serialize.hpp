#pragma once

// Flat binary serialization of a MomentSet.
//
// File layout, all little-endian:
//   uint64        N
//   double[N]     mu
//   double[N^2]   sigma, row-major
//   double[N^3]   phi, slice by slice (k = 0..N-1), each N x N slice row-major
//   double[N^4]   psi, slice by slice (k = 0..N-1), each N x N^2 slice row-major

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "hop/moments.hpp"
#include "hop/types.hpp"

namespace hop {

namespace detail {

inline void write_le_doubles(std::ofstream& out, const double* p, std::size_t count) {
  static_assert(sizeof(double) == 8);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(count * 8));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      std::uint64_t u;
      std::memcpy(&u, p + i, 8);
      char b[8];
      for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((u >> (8 * k)) & 0xff);
      out.write(b, 8);
    }
  }
}

inline bool read_le_doubles(std::ifstream& in, double* p, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(count * 8));
    return static_cast<std::size_t>(in.gcount()) == count * 8;
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      char b[8];
      in.read(b, 8);
      if (in.gcount() != 8) return false;
      std::uint64_t u = 0;
      for (int k = 0; k < 8; ++k) u |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[k])) << (8 * k);
      std::memcpy(p + i, &u, 8);
    }
    return true;
  }
}

}  // namespace detail

/// Number of bytes a MomentSet with n assets occupies on disk.
inline std::uint64_t moments_file_bytes(int n) {
  const auto u = static_cast<std::uint64_t>(n);
  return 8 + 8 * (u + u * u + u * u * u + u * u * u * u);
}

inline void save_moments(const MomentSet& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  const int n = m.size();
  std::uint64_t header = static_cast<std::uint64_t>(n);
  if constexpr (std::endian::native != std::endian::little) {
    std::uint64_t sw = 0;
    for (int k = 0; k < 8; ++k) sw |= ((header >> (8 * k)) & 0xff) << (8 * (7 - k));
    header = sw;
  }
  out.write(reinterpret_cast<const char*>(&header), 8);

  detail::write_le_doubles(out, m.mean().data(), static_cast<std::size_t>(n));

  std::vector<double> row(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) row[static_cast<std::size_t>(i) * n + j] = m.covariance()(i, j);
  detail::write_le_doubles(out, row.data(), row.size());

  for (int k = 0; k < n; ++k) {
    auto blk = m.phi_block(k);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) row[static_cast<std::size_t>(i) * n + j] = blk(i, j);
    detail::write_le_doubles(out, row.data(), row.size());
  }

  std::vector<double> row4(static_cast<std::size_t>(n) * n * n);
  for (int k = 0; k < n; ++k) {
    auto blk = m.psi_block(k);
    const int cols = n * n;
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < cols; ++c) row4[static_cast<std::size_t>(i) * cols + c] = blk(i, c);
    detail::write_le_doubles(out, row4.data(), row4.size());
  }
  if (!out) throw DataError("write to '" + path + "' failed");
}

inline MomentSet load_moments(const std::string& path, int max_assets = 150) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  std::uint64_t header = 0;
  in.read(reinterpret_cast<char*>(&header), 8);
  if (in.gcount() != 8) throw DataError("'" + path + "': truncated header");
  if constexpr (std::endian::native != std::endian::little) {
    std::uint64_t sw = 0;
    for (int k = 0; k < 8; ++k) sw |= ((header >> (8 * k)) & 0xff) << (8 * (7 - k));
    header = sw;
  }
  if (header == 0 || header > static_cast<std::uint64_t>(max_assets))
    throw DataError("'" + path + "': implausible asset count " + std::to_string(header) +
                    " (guard is " + std::to_string(max_assets) + ")");
  const int n = static_cast<int>(header);
  const auto nn = static_cast<Eigen::Index>(n);

  Eigen::VectorXd mu(nn);
  if (!detail::read_le_doubles(in, mu.data(), static_cast<std::size_t>(n)))
    throw DataError("'" + path + "': truncated in mean section");

  std::vector<double> row(static_cast<std::size_t>(n) * n);
  Eigen::MatrixXd sigma(nn, nn);
  if (!detail::read_le_doubles(in, row.data(), row.size()))
    throw DataError("'" + path + "': truncated in covariance section");
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) sigma(i, j) = row[static_cast<std::size_t>(i) * n + j];

  Eigen::MatrixXd phi(nn, nn * nn);
  for (int k = 0; k < n; ++k) {
    if (!detail::read_le_doubles(in, row.data(), row.size()))
      throw DataError("'" + path + "': truncated in coskewness slice " + std::to_string(k));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) phi(i, nn * k + j) = row[static_cast<std::size_t>(i) * n + j];
  }

  std::vector<double> row4(static_cast<std::size_t>(n) * n * n);
  Eigen::MatrixXd psi(nn, nn * nn * nn);
  for (int k = 0; k < n; ++k) {
    if (!detail::read_le_doubles(in, row4.data(), row4.size()))
      throw DataError("'" + path + "': truncated in cokurtosis slice " + std::to_string(k));
    const int cols = n * n;
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < cols; ++c) psi(i, nn * nn * k + c) = row4[static_cast<std::size_t>(i) * cols + c];
  }

  char extra;
  in.read(&extra, 1);
  if (in.gcount() != 0) throw DataError("'" + path + "': trailing bytes after cokurtosis section");

  return MomentSet(std::move(mu), std::move(sigma), std::move(phi), std::move(psi));
}

}  // namespace hop
