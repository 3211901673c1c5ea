#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssmkit/common.hpp"

namespace ssmkit::detail {

inline const char* b64_alphabet() {
  return "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

inline std::string b64_encode(const unsigned char* data, std::size_t n) {
  const char* tbl = b64_alphabet();
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  for (std::size_t i = 0; i < n; i += 3) {
    std::uint32_t chunk = static_cast<std::uint32_t>(data[i]) << 16;
    if (i + 1 < n) chunk |= static_cast<std::uint32_t>(data[i + 1]) << 8;
    if (i + 2 < n) chunk |= static_cast<std::uint32_t>(data[i + 2]);
    out.push_back(tbl[(chunk >> 18) & 63]);
    out.push_back(tbl[(chunk >> 12) & 63]);
    out.push_back(i + 1 < n ? tbl[(chunk >> 6) & 63] : '=');
    out.push_back(i + 2 < n ? tbl[chunk & 63] : '=');
  }
  return out;
}

inline std::vector<unsigned char> b64_decode(const std::string& s) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    if (c == '=') return -1;
    throw IoError("base64: invalid character");
  };
  std::vector<unsigned char> out;
  out.reserve(s.size() / 4 * 3);
  for (std::size_t i = 0; i + 3 < s.size(); i += 4) {
    int a = val(s[i]), b = val(s[i + 1]), c = val(s[i + 2]), d = val(s[i + 3]);
    if (a < 0 || b < 0) throw IoError("base64: malformed quartet");
    std::uint32_t chunk = (static_cast<std::uint32_t>(a) << 18) | (static_cast<std::uint32_t>(b) << 12);
    out.push_back(static_cast<unsigned char>((chunk >> 16) & 0xFF));
    if (c >= 0) {
      chunk |= static_cast<std::uint32_t>(c) << 6;
      out.push_back(static_cast<unsigned char>((chunk >> 8) & 0xFF));
    }
    if (d >= 0) {
      chunk |= static_cast<std::uint32_t>(d);
      out.push_back(static_cast<unsigned char>(chunk & 0xFF));
    }
  }
  return out;
}

inline std::string encode_matrix(const Mat& m) {
  // column-major raw little-endian doubles, matching Eigen's layout
  return b64_encode(reinterpret_cast<const unsigned char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
}

inline Mat decode_matrix(const std::string& b64, long rows, long cols) {
  auto bytes = b64_decode(b64);
  if (bytes.size() != static_cast<std::size_t>(rows * cols) * sizeof(double))
    throw IoError("checkpoint array has wrong byte count");
  Mat m(rows, cols);
  std::memcpy(m.data(), bytes.data(), bytes.size());
  return m;
}

}  // namespace ssmkit::detail
