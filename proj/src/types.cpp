#include "mepic/types.hpp"

#include <cstdio>

namespace mepic {

std::string to_hex(const Hash128& h) {
  char buf[33];
  std::snprintf(buf, sizeof(buf), "%016llx%016llx", static_cast<unsigned long long>(h.hi),
                static_cast<unsigned long long>(h.lo));
  return std::string(buf);
}

bool parse_hex128(const std::string& s, Hash128& out) {
  if (s.size() != 32) return false;
  auto nibble = [](char c, std::uint64_t& v) {
    if (c >= '0' && c <= '9') v = static_cast<std::uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f') v = static_cast<std::uint64_t>(c - 'a' + 10);
    else if (c >= 'A' && c <= 'F') v = static_cast<std::uint64_t>(c - 'A' + 10);
    else return false;
    return true;
  };
  std::uint64_t hi = 0, lo = 0, n = 0;
  for (int i = 0; i < 16; ++i) {
    if (!nibble(s[static_cast<std::size_t>(i)], n)) return false;
    hi = (hi << 4) | n;
  }
  for (int i = 16; i < 32; ++i) {
    if (!nibble(s[static_cast<std::size_t>(i)], n)) return false;
    lo = (lo << 4) | n;
  }
  out = Hash128{hi, lo};
  return true;
}

}  // namespace mepic
