#include "mepic/hash.hpp"

#include <cstring>

namespace mepic {
namespace {

inline std::uint64_t rotl64(std::uint64_t x, int r) { return (x << r) | (x >> (64 - r)); }

inline std::uint64_t fmix64(std::uint64_t k) {
  k ^= k >> 33;
  k *= 0xff51afd7ed558ccdULL;
  k ^= k >> 33;
  k *= 0xc4ceb9fe1a85ec53ULL;
  k ^= k >> 33;
  return k;
}

inline std::uint64_t load_le64(const std::byte* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(p[i]));
  return v;
}

}  // namespace

Hash128 hash128_bytes(std::span<const std::byte> data, std::uint64_t seed) {
  const std::size_t len = data.size();
  const std::size_t nblocks = len / 16;
  const std::byte* base = data.data();

  std::uint64_t h1 = seed;
  std::uint64_t h2 = seed;
  const std::uint64_t c1 = 0x87c37b91114253d5ULL;
  const std::uint64_t c2 = 0x4cf5ad432745937fULL;

  for (std::size_t i = 0; i < nblocks; ++i) {
    std::uint64_t k1 = load_le64(base + i * 16);
    std::uint64_t k2 = load_le64(base + i * 16 + 8);

    k1 *= c1;
    k1 = rotl64(k1, 31);
    k1 *= c2;
    h1 ^= k1;
    h1 = rotl64(h1, 27);
    h1 += h2;
    h1 = h1 * 5 + 0x52dce729;

    k2 *= c2;
    k2 = rotl64(k2, 33);
    k2 *= c1;
    h2 ^= k2;
    h2 = rotl64(h2, 31);
    h2 += h1;
    h2 = h2 * 5 + 0x38495ab5;
  }

  const std::byte* tail = base + nblocks * 16;
  const std::size_t rem = len & 15;
  std::uint64_t k1 = 0;
  std::uint64_t k2 = 0;
  for (std::size_t i = rem; i > 8; --i)
    k2 = (k2 << 8) | static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(tail[i - 1]));
  if (rem > 8) {
    k2 *= c2;
    k2 = rotl64(k2, 33);
    k2 *= c1;
    h2 ^= k2;
  }
  for (std::size_t i = std::min<std::size_t>(rem, 8); i > 0; --i)
    k1 = (k1 << 8) | static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(tail[i - 1]));
  if (rem > 0) {
    k1 *= c1;
    k1 = rotl64(k1, 31);
    k1 *= c2;
    h1 ^= k1;
  }

  h1 ^= static_cast<std::uint64_t>(len);
  h2 ^= static_cast<std::uint64_t>(len);
  h1 += h2;
  h2 += h1;
  h1 = fmix64(h1);
  h2 = fmix64(h2);
  h1 += h2;
  h2 += h1;
  return Hash128{h1, h2};
}

Hash128 hash128_tokens(std::span<const Token> tokens, std::uint64_t seed) {
  // Serialize tokens little-endian so the digest is platform independent.
  std::vector<std::byte> buf(tokens.size() * 4);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto u = static_cast<std::uint32_t>(tokens[i]);
    buf[i * 4 + 0] = static_cast<std::byte>(u & 0xff);
    buf[i * 4 + 1] = static_cast<std::byte>((u >> 8) & 0xff);
    buf[i * 4 + 2] = static_cast<std::byte>((u >> 16) & 0xff);
    buf[i * 4 + 3] = static_cast<std::byte>((u >> 24) & 0xff);
  }
  return hash128_bytes(buf, seed);
}

Hash128 chain_hash(const Hash128& parent, std::span<const Token> block_tokens) {
  std::vector<std::byte> buf(16 + block_tokens.size() * 4);
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<std::byte>((parent.hi >> (8 * i)) & 0xff);
  for (int i = 0; i < 8; ++i) buf[8 + i] = static_cast<std::byte>((parent.lo >> (8 * i)) & 0xff);
  for (std::size_t i = 0; i < block_tokens.size(); ++i) {
    const auto u = static_cast<std::uint32_t>(block_tokens[i]);
    buf[16 + i * 4 + 0] = static_cast<std::byte>(u & 0xff);
    buf[16 + i * 4 + 1] = static_cast<std::byte>((u >> 8) & 0xff);
    buf[16 + i * 4 + 2] = static_cast<std::byte>((u >> 16) & 0xff);
    buf[16 + i * 4 + 3] = static_cast<std::byte>((u >> 24) & 0xff);
  }
  return hash128_bytes(buf, 0x70726566ULL);  // "pref"
}

Hash128 chain_seed() { return Hash128{0x6d65706963726f6fULL, 0x740a0a0a0a0a0a0aULL}; }

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t x = a;
  x ^= b + 0x9e3779b97f4a7c15ULL + (x << 6) + (x >> 2);
  x ^= c + 0x9e3779b97f4a7c15ULL + (x << 6) + (x >> 2);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

}  // namespace mepic
