#pragma once

#include <cstdint>
#include <string>

namespace fkmc {

// FNV-1a over a canonical parameter string; stamped into run outputs so that
// artifacts can be traced back to the exact configuration that produced them.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

inline std::string digest_string(const std::string& canonical) { return hex64(fnv1a64(canonical)); }

}  // namespace fkmc
