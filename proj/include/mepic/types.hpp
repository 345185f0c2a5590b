#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

namespace mepic {

// Token ids are positive integers. Id 0 is reserved for PAD slots created by
// block alignment; negative values are in-band segment markers (library API
// only, traces carry explicit segment records).
using Token = std::int32_t;

inline constexpr Token kPadToken = 0;
inline constexpr Token kChunkBegin = -1;
inline constexpr Token kChunkEnd = -2;

using TokenSeq = std::vector<Token>;

// Index of a page in the block pool. Stable for the pool's lifetime.
using BlockId = std::uint32_t;
inline constexpr BlockId kInvalidBlock = static_cast<BlockId>(-1);

// Discrete simulator time.
using Tick = std::uint64_t;

using RequestId = std::uint64_t;

// 128-bit digest used for chunk identities and prefix chain keys.
struct Hash128 {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;

  friend auto operator<=>(const Hash128&, const Hash128&) = default;
};

std::string to_hex(const Hash128& h);
bool parse_hex128(const std::string& s, Hash128& out);

using ChunkId = Hash128;
using PrefixKey = Hash128;

}  // namespace mepic
