#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "mepic/types.hpp"

namespace mepic {

// 128-bit MurmurHash3 (x64 variant) over an arbitrary byte buffer. Stable
// across processes and platforms (little-endian block reads are emulated).
// Not cryptographic; collision resistance is the statistical kind, which is
// what chunk identity and prefix chaining need. The algorithm is part of the
// trace/persistence format version: changing it bumps the format.
Hash128 hash128_bytes(std::span<const std::byte> data, std::uint64_t seed = 0);

Hash128 hash128_tokens(std::span<const Token> tokens, std::uint64_t seed = 0);

// Chain step for prefix keys: key_i = H(key_{i-1} || block tokens).
Hash128 chain_hash(const Hash128& parent, std::span<const Token> block_tokens);

// Root of every prefix chain.
Hash128 chain_seed();

// Derives a distinct deterministic 64-bit stream seed from components.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0);

}  // namespace mepic
