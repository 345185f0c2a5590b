#pragma once

#include <functional>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "mepic/block_pool.hpp"
#include "mepic/pages.hpp"
#include "mepic/remote_store.hpp"
#include "mepic/types.hpp"

namespace mepic {

enum class Residency : std::uint8_t { Resident, RemoteOnly, Miss };

// Canonical chunk KV object. `blocks[i]` holds padded block i of the chunk;
// while resident, every request referencing the chunk maps those ordinals to
// these same pool blocks. Per-request recomputed first blocks live in the
// prefix cache, not here.
struct ChunkEntry {
  ChunkId id{};
  std::vector<BlockId> blocks;   // empty when RemoteOnly
  std::uint32_t refcount = 0;
  Tick last_use = 0;
  std::uint32_t size_blocks = 0;  // k: canonical block count
  TokenSeq padded_tokens;         // k * block_size tokens

  bool resident() const { return !blocks.empty(); }
};

struct FetchResult {
  const ChunkEntry* entry = nullptr;
  Tick transfer_cost = 0;
};

// Chunk cache coordinator: canonical chunk KV in the shared pool, object
// granularity LRU eviction of zero-reference entries (ties broken by chunk
// id), and offload/fetch against the remote tier. Zero-reference chunks stay
// resident and evictable rather than being freed.
class ChunkCache {
 public:
  ChunkCache(BlockPool& pool, RemoteStore* remote = nullptr, PageStore* pages = nullptr,
             bool offload_on_evict = true)
      : pool_(pool), remote_(remote), pages_(pages), offload_on_evict_(offload_on_evict) {}

  // Residency class; a Resident hit bumps last_use.
  Residency lookup(const ChunkId& id, Tick now);
  Residency peek(const ChunkId& id) const;

  // Registers freshly allocated (Reserved) blocks as the chunk's canonical
  // KV. Blocks are retagged Chunk(id, ordinal); the entry starts with
  // refcount 1.
  const ChunkEntry& register_chunk(const ChunkId& id, TokenSeq padded_tokens, std::span<const BlockId> blocks,
                                   Tick now);

  std::uint32_t acquire(const ChunkId& id, Tick now);
  std::uint32_t release(const ChunkId& id, Tick now);

  // Evicts whole zero-reference chunks in (last_use, id) order, offloading
  // each to the remote store first (when configured), until at least
  // `needed` blocks have been freed or no candidates remain. Returns the
  // number of blocks freed. Never touches referenced chunks or prefix
  // blocks.
  std::uint32_t evict_until(std::uint64_t needed, Tick now);

  // Restages a RemoteOnly chunk into freshly allocated blocks. The entry
  // comes back with refcount 1. Requires enough free blocks in the pool.
  FetchResult fetch_remote(const ChunkId& id, Tick now);

  const ChunkEntry* find(const ChunkId& id) const;
  const std::map<ChunkId, ChunkEntry>& entries() const { return entries_; }

  // Blocks reclaimable by eviction right now.
  std::uint64_t evictable_blocks() const;
  std::uint64_t evictable_blocks_excluding(const std::set<ChunkId>& keep) const;

  // Invoked with each victim just before its blocks are reclaimed; the
  // engine uses this to drop head aliases.
  void set_eviction_hook(std::function<void(const ChunkEntry&)> hook) { eviction_hook_ = std::move(hook); }
  // Invoked when a release drops the last reference.
  void set_zero_ref_hook(std::function<void(const ChunkEntry&)> hook) { zero_ref_hook_ = std::move(hook); }

  bool check_consistency(std::string* why = nullptr) const;

 private:
  ChunkEntry& require(const ChunkId& id);
  void lru_touch(ChunkEntry& entry, Tick now);

  BlockPool& pool_;
  RemoteStore* remote_;
  PageStore* pages_;
  bool offload_on_evict_;
  std::map<ChunkId, ChunkEntry> entries_;
  // Zero-ref resident entries in eviction order.
  std::set<std::pair<Tick, ChunkId>> lru_;
  std::function<void(const ChunkEntry&)> eviction_hook_;
  std::function<void(const ChunkEntry&)> zero_ref_hook_;
};

}  // namespace mepic
