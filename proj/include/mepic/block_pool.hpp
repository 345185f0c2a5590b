#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "mepic/errors.hpp"
#include "mepic/types.hpp"

namespace mepic {

struct PoolConfig {
  std::uint32_t capacity_blocks = 0;
  std::uint32_t block_size = 16;  // tokens per page
};

enum class OwnerKind : std::uint8_t {
  Free,
  Reserved,  // allocated, owned by the caller, final tag pending
  Prefix,
  Chunk,
};

// Ownership tag of a pool block. Exactly one tag at a time; a block moves
// between Prefix/Chunk only through Free (refcount 0), except for the
// Reserved->{Prefix,Chunk} step that completes an allocation.
struct Owner {
  OwnerKind kind = OwnerKind::Free;
  Hash128 key{};            // Prefix: chain key. Chunk: chunk id.
  std::uint32_t ordinal = 0;  // Chunk: position of this block within the chunk.
};

struct KvBlock {
  BlockId id = kInvalidBlock;
  Owner owner{};
  std::uint32_t refcount = 0;
  std::uint64_t last_touch = 0;
};

struct PoolStats {
  std::uint32_t free = 0;
  std::uint32_t reserved = 0;
  std::uint32_t prefix_owned = 0;
  std::uint32_t chunk_owned = 0;
  // Chunk-owned blocks whose blocks currently carry zero references
  // (the owning chunk has been released and is eviction-eligible).
  std::uint32_t evictable = 0;

  std::uint32_t total() const { return free + reserved + prefix_owned + chunk_owned; }
};

// Fixed-capacity pool of fixed-size KV pages shared by the prefix and chunk
// caches. Passive state machine: single mutator at a time, no internal
// threading; the simulator drives it from one logical-clock loop.
class BlockPool {
 public:
  explicit BlockPool(PoolConfig config);

  const PoolConfig& config() const { return config_; }
  std::uint32_t capacity() const { return config_.capacity_blocks; }
  std::uint32_t block_size() const { return config_.block_size; }
  std::uint32_t free_count() const { return static_cast<std::uint32_t>(free_set_.size()); }

  // Takes n Free blocks (lowest index first), each Reserved with refcount 1.
  // Throws InsufficientBlocks when fewer than n are free.
  std::vector<BlockId> allocate(std::uint32_t n);

  // Returns the new refcount. Throws BlockIsFree on a Free block.
  std::uint32_t incref(BlockId b);

  // Returns the new refcount. Reaching zero does not free the block: chunk
  // blocks stay resident as evictable cache, prefix/reserved blocks become
  // reclaimable. Throws RefcountUnderflow at zero.
  std::uint32_t decref(BlockId b);

  // Returns a zero-reference block to the free set. Throws BlockBusy if the
  // refcount is nonzero.
  void reclaim(BlockId b);

  // Completes an allocation: Reserved -> Prefix/Chunk. Also allows
  // retagging a zero-ref block between cache owners (used when a reclaimed
  // identity is reused); any other transition with live references throws
  // OwnershipConflict.
  void tag_prefix(BlockId b, const PrefixKey& key);
  void tag_chunk(BlockId b, const ChunkId& id, std::uint32_t ordinal);

  const KvBlock& block(BlockId b) const;
  std::uint32_t refcount(BlockId b) const { return block(b).refcount; }
  const Owner& owner(BlockId b) const { return block(b).owner; }

  PoolStats stats() const;

  // Verifies internal bookkeeping against a full scan; used by property
  // tests. Returns false (and fills `why`) on any violation.
  bool check_consistency(std::string* why = nullptr) const;

 private:
  KvBlock& mut(BlockId b);
  void touch(KvBlock& blk) { blk.last_touch = ++op_clock_; }

  PoolConfig config_;
  std::vector<KvBlock> blocks_;
  std::set<BlockId> free_set_;  // ordered: lowest-index-first allocation
  std::uint64_t op_clock_ = 0;
};

}  // namespace mepic
