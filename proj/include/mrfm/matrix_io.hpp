#pragma once

#include "mrfm/common.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace mrfm {

/// Row-major CSV, 17 significant digits (round-trips doubles exactly).
inline void write_csv(const Matrix& m, const std::filesystem::path& path, const std::string& header = {}) {
  std::ofstream out(path);
  if (!out) throw validation_error("cannot write " + path.string());
  out << std::setprecision(17);
  if (!header.empty()) out << header << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << m(i, j);
    }
    out << '\n';
  }
}

/// Reads a numeric CSV (commas or whitespace). A first line that does not
/// parse as numbers is treated as a header and skipped. "inf"/"nan" parse;
/// callers that need finite data check for it.
inline Matrix read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    for (char& c : line)
      if (c == ',' || c == ';' || c == '\t' || c == '\r') c = ' ';
    std::istringstream ls(line);
    std::vector<double> row;
    std::string token;
    bool numeric = true;
    while (ls >> token) {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
      if (ec != std::errc() || ptr != token.data() + token.size()) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (line_no == 1 && rows.empty()) continue;
      throw validation_error(path.string() + ":" + std::to_string(line_no) + ": non-numeric entry '" + token + "'");
    }
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size())
      throw validation_error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(rows.front().size()) + " columns, found " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw validation_error(path.string() + ": no data rows");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

/// 64-bit FNV-1a, used for content keys and payload checksums.
class Fnv1a {
 public:
  void update(const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ULL;
    }
  }
  template <typename T>
  void update_value(const T& value) {
    update(&value, sizeof(T));
  }
  std::uint64_t digest() const noexcept { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

namespace detail {

inline void write_raw(std::ostream& out, const void* data, std::size_t bytes, Fnv1a* sum = nullptr) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (sum) sum->update(data, bytes);
}

inline void read_raw(std::istream& in, void* data, std::size_t bytes, const std::string& name, Fnv1a* sum = nullptr) {
  if (!in.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes)))
    throw validation_error(name + ": truncated binary file");
  if (sum) sum->update(data, bytes);
}

}  // namespace detail

// Binary matrix layout (little-endian):
//   char[8] magic "MRFMMAT1" | u32 version=1 | u32 reserved=0 | u64 rows | u64 cols
//   | f64[rows*cols] column-major | u64 FNV-1a checksum of the f64 payload
inline constexpr std::array<char, 8> kMatrixMagic = {'M', 'R', 'F', 'M', 'M', 'A', 'T', '1'};

inline void write_matrix_binary(const Matrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw validation_error("cannot write " + path.string());
  const std::uint32_t version = 1, reserved = 0;
  const std::uint64_t rows = static_cast<std::uint64_t>(m.rows()), cols = static_cast<std::uint64_t>(m.cols());
  detail::write_raw(out, kMatrixMagic.data(), kMatrixMagic.size());
  detail::write_raw(out, &version, 4);
  detail::write_raw(out, &reserved, 4);
  detail::write_raw(out, &rows, 8);
  detail::write_raw(out, &cols, 8);
  Fnv1a sum;
  detail::write_raw(out, m.data(), sizeof(double) * rows * cols, &sum);
  const std::uint64_t digest = sum.digest();
  detail::write_raw(out, &digest, 8);
  if (!out) throw validation_error("failed writing " + path.string());
}

inline Matrix read_matrix_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw validation_error("cannot open " + path.string());
  const std::string name = path.string();
  std::array<char, 8> magic{};
  std::uint32_t version = 0, reserved = 0;
  std::uint64_t rows = 0, cols = 0;
  detail::read_raw(in, magic.data(), magic.size(), name);
  if (magic != kMatrixMagic) throw validation_error(name + ": not a binary matrix file");
  detail::read_raw(in, &version, 4, name);
  detail::read_raw(in, &reserved, 4, name);
  if (version != 1) throw validation_error(name + ": unsupported matrix file version");
  detail::read_raw(in, &rows, 8, name);
  detail::read_raw(in, &cols, 8, name);
  if (rows > (1ULL << 32) || cols > (1ULL << 32)) throw validation_error(name + ": implausible matrix size");
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  Fnv1a sum;
  detail::read_raw(in, m.data(), sizeof(double) * rows * cols, name, &sum);
  std::uint64_t digest = 0;
  detail::read_raw(in, &digest, 8, name);
  if (digest != sum.digest()) throw validation_error(name + ": checksum mismatch");
  return m;
}

}  // namespace mrfm
