#pragma once

#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mepic/block_pool.hpp"
#include "mepic/hash.hpp"
#include "mepic/types.hpp"

namespace mepic {

// One indexed block. Keys are chained: key_i = H(key_{i-1}, block tokens),
// with a fixed seed above the first block, so identical block content under
// different preceding context never matches. Entries remember their tokens so
// hits can be verified at the metadata level.
struct PrefixEntry {
  BlockId block = kInvalidBlock;
  TokenSeq tokens;
  Tick last_touch = 0;
  // Head alias: the entry points at a chunk-owned canonical block 0 that was
  // materialized in this chain's context. It shares the chunk's lifetime
  // instead of owning the block.
  bool chunk_alias = false;
  ChunkId alias_chunk{};
};

struct PrefixMatch {
  std::size_t hit_blocks = 0;
  std::vector<BlockId> blocks;
};

// vLLM-style prefix index over hash-chained blocks. Used both for classic
// prefix reuse and for registering each cached chunk's recomputed first
// block. Passive state machine, external exclusive access for mutation.
class PrefixIndex {
 public:
  // Chain keys for every full block of a padded sequence.
  static std::vector<PrefixKey> chain_keys(std::span<const Token> padded_tokens, std::uint32_t block_size);

  // Longest fully resident block-granular prefix. Does not apply refcounts;
  // the scheduler does.
  PrefixMatch match_prefix(std::span<const Token> padded_tokens, std::uint32_t block_size) const;

  // Indexes the leading `blocks.size()` full blocks of `padded_tokens`,
  // tagging each block Prefix under its chain key. Blocks must be
  // caller-owned (Reserved); a chunk-owned block raises OwnershipConflict.
  // A key that is already indexed is left untouched.
  void insert_prefix(BlockPool& pool, std::span<const Token> padded_tokens, std::span<const BlockId> blocks,
                     Tick now);

  // Indexes one caller-owned block under a precomputed chain key, tagging it
  // Prefix. Existing keys keep their first registration.
  void register_under_key(BlockPool& pool, const PrefixKey& key, std::span<const Token> block_tokens,
                          BlockId block, Tick now);

  // Indexes a chunk's recomputed first block under the request-context chain:
  // key = H(preceding_chain, block tokens). The block becomes Prefix-owned.
  PrefixKey register_chunk_head(BlockPool& pool, const PrefixKey& preceding_chain,
                                std::span<const Token> block_tokens, BlockId block, Tick now);

  // Indexes a cold chunk's canonical block 0 under the registering request's
  // chain without changing ownership. The alias is dropped when the chunk's
  // refcount reaches zero or the chunk is evicted.
  PrefixKey register_head_alias(const PrefixKey& preceding_chain, std::span<const Token> block_tokens,
                                BlockId block, const ChunkId& chunk, Tick now);

  // Verified single-key lookup: returns the block only when the stored
  // tokens equal `expect_tokens`.
  std::optional<BlockId> lookup(const PrefixKey& key, std::span<const Token> expect_tokens, Tick now);
  bool contains(const PrefixKey& key) const { return entries_.count(key) > 0; }

  void erase(const PrefixKey& key);
  void erase_block(BlockId block);
  void drop_aliases_of(const ChunkId& chunk);

  // Non-alias entries whose blocks have zero references, oldest first.
  // Used by the retain mode's pressure reclaim.
  std::vector<PrefixKey> zero_ref_keys(const BlockPool& pool) const;

  std::size_t size() const { return entries_.size(); }
  const std::map<PrefixKey, PrefixEntry>& entries() const { return entries_; }

 private:
  void insert_entry(const PrefixKey& key, PrefixEntry entry);

  std::map<PrefixKey, PrefixEntry> entries_;
  std::multimap<BlockId, PrefixKey> by_block_;
};

}  // namespace mepic
