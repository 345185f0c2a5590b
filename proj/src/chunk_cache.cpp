#include "mepic/chunk_cache.hpp"

#include <string>

#include "mepic/errors.hpp"

namespace mepic {

Residency ChunkCache::peek(const ChunkId& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) return Residency::Miss;
  if (it->second.resident()) return Residency::Resident;
  return Residency::RemoteOnly;
}

Residency ChunkCache::lookup(const ChunkId& id, Tick now) {
  auto it = entries_.find(id);
  if (it == entries_.end()) return Residency::Miss;
  ChunkEntry& entry = it->second;
  if (!entry.resident()) return Residency::RemoteOnly;
  lru_touch(entry, now);
  return Residency::Resident;
}

void ChunkCache::lru_touch(ChunkEntry& entry, Tick now) {
  if (entry.refcount == 0) lru_.erase({entry.last_use, entry.id});
  entry.last_use = now;
  if (entry.refcount == 0) lru_.insert({entry.last_use, entry.id});
}

const ChunkEntry& ChunkCache::register_chunk(const ChunkId& id, TokenSeq padded_tokens,
                                             std::span<const BlockId> blocks, Tick now) {
  auto it = entries_.find(id);
  if (it != entries_.end() && it->second.resident())
    raise(ErrorCode::AlreadyResident, "chunk " + to_hex(id) + " already registered");
  if (padded_tokens.size() != blocks.size() * pool_.block_size())
    raise(ErrorCode::ShapeMismatch, "padded token count does not match block count");
  if (blocks.empty()) raise(ErrorCode::ShapeMismatch, "chunk with no blocks");
  for (const BlockId b : blocks) {
    if (pool_.owner(b).kind != OwnerKind::Reserved)
      raise(ErrorCode::OwnershipConflict, "block " + std::to_string(b) + " is not caller-owned");
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) pool_.tag_chunk(blocks[i], id, static_cast<std::uint32_t>(i));

  ChunkEntry entry;
  entry.id = id;
  entry.blocks.assign(blocks.begin(), blocks.end());
  entry.refcount = 1;
  entry.last_use = now;
  entry.size_blocks = static_cast<std::uint32_t>(blocks.size());
  entry.padded_tokens = std::move(padded_tokens);
  auto [pos, inserted] = entries_.insert_or_assign(id, std::move(entry));
  return pos->second;
}

ChunkEntry& ChunkCache::require(const ChunkId& id) {
  auto it = entries_.find(id);
  if (it == entries_.end() || !it->second.resident())
    raise(ErrorCode::NotResident, "chunk " + to_hex(id) + " is not resident");
  return it->second;
}

std::uint32_t ChunkCache::acquire(const ChunkId& id, Tick now) {
  ChunkEntry& entry = require(id);
  if (entry.refcount == 0) lru_.erase({entry.last_use, entry.id});
  ++entry.refcount;
  entry.last_use = now;
  for (BlockId b : entry.blocks) pool_.incref(b);
  return entry.refcount;
}

std::uint32_t ChunkCache::release(const ChunkId& id, Tick now) {
  ChunkEntry& entry = require(id);
  if (entry.refcount == 0) raise(ErrorCode::RefcountUnderflow, "release of unreferenced chunk " + to_hex(id));
  --entry.refcount;
  entry.last_use = now;
  for (BlockId b : entry.blocks) pool_.decref(b);
  if (entry.refcount == 0) {
    lru_.insert({entry.last_use, entry.id});
    if (zero_ref_hook_) zero_ref_hook_(entry);
  }
  return entry.refcount;
}

std::uint32_t ChunkCache::evict_until(std::uint64_t needed, Tick now) {
  (void)now;
  std::uint32_t freed = 0;
  while (freed < needed && !lru_.empty()) {
    const auto [last_use, id] = *lru_.begin();
    lru_.erase(lru_.begin());
    auto it = entries_.find(id);
    ChunkEntry& entry = it->second;

    if (eviction_hook_) eviction_hook_(entry);

    bool offloaded = false;
    if (offload_on_evict_ && remote_ != nullptr) {
      RemoteChunkRecord rec;
      rec.id = entry.id;
      rec.block_size = pool_.block_size();
      rec.k = entry.size_blocks;
      rec.padded_tokens = entry.padded_tokens;
      if (pages_ != nullptr) {
        rec.payload_present = true;
        rec.d_head = pages_->geometry().d_head;
        rec.pages.reserve(entry.blocks.size());
        for (BlockId b : entry.blocks) rec.pages.push_back(pages_->ensure(b));
      }
      remote_->put(rec);
      offloaded = true;
    }

    for (BlockId b : entry.blocks) {
      pool_.reclaim(b);
      if (pages_ != nullptr) pages_->erase(b);
    }
    freed += static_cast<std::uint32_t>(entry.blocks.size());
    entry.blocks.clear();
    if (!offloaded) entries_.erase(it);  // discard mode: no remote copy remains
  }
  return freed;
}

FetchResult ChunkCache::fetch_remote(const ChunkId& id, Tick now) {
  auto it = entries_.find(id);
  if (it != entries_.end() && it->second.resident())
    raise(ErrorCode::AlreadyResident, "chunk " + to_hex(id) + " is already resident");
  if (remote_ == nullptr || !remote_->contains(id))
    raise(ErrorCode::NotInRemote, "chunk " + to_hex(id) + " has no remote copy");

  const RemoteChunkRecord rec = *remote_->get(id);
  if (rec.block_size != pool_.block_size())
    raise(ErrorCode::ShapeMismatch, "remote record block size mismatch");

  std::vector<BlockId> blocks = pool_.allocate(rec.k);  // throws InsufficientBlocks
  for (std::size_t i = 0; i < blocks.size(); ++i) pool_.tag_chunk(blocks[i], id, static_cast<std::uint32_t>(i));
  if (rec.payload_present && pages_ != nullptr) {
    for (std::size_t i = 0; i < blocks.size(); ++i) pages_->ensure(blocks[i]) = rec.pages[i];
  }

  ChunkEntry entry;
  entry.id = id;
  entry.blocks = std::move(blocks);
  entry.refcount = 1;
  entry.last_use = now;
  entry.size_blocks = rec.k;
  entry.padded_tokens = rec.padded_tokens;
  auto [pos, inserted] = entries_.insert_or_assign(id, std::move(entry));
  return FetchResult{&pos->second, remote_->transfer_cost(rec.k)};
}

const ChunkEntry* ChunkCache::find(const ChunkId& id) const {
  auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : &it->second;
}

std::uint64_t ChunkCache::evictable_blocks() const {
  std::uint64_t total = 0;
  for (const auto& [t, id] : lru_) total += entries_.at(id).blocks.size();
  return total;
}

std::uint64_t ChunkCache::evictable_blocks_excluding(const std::set<ChunkId>& keep) const {
  std::uint64_t total = 0;
  for (const auto& [t, id] : lru_)
    if (!keep.count(id)) total += entries_.at(id).blocks.size();
  return total;
}

bool ChunkCache::check_consistency(std::string* why) const {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  std::size_t zero_ref_resident = 0;
  for (const auto& [id, entry] : entries_) {
    if (!entry.resident()) {
      if (entry.refcount != 0) return fail("remote-only entry with references");
      continue;
    }
    if (entry.blocks.size() != entry.size_blocks) return fail("resident entry with wrong block count");
    for (std::size_t i = 0; i < entry.blocks.size(); ++i) {
      const Owner& o = pool_.owner(entry.blocks[i]);
      if (o.kind != OwnerKind::Chunk || o.key != id || o.ordinal != i)
        return fail("canonical block with wrong owner tag");
      if (pool_.refcount(entry.blocks[i]) != entry.refcount)
        return fail("block refcount diverges from entry refcount");
    }
    if (entry.refcount == 0) {
      ++zero_ref_resident;
      if (!lru_.count({entry.last_use, id})) return fail("zero-ref entry missing from LRU order");
    }
  }
  if (lru_.size() != zero_ref_resident) return fail("stale LRU entries");
  return true;
}

}  // namespace mepic
