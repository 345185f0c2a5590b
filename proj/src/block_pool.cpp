#include "mepic/block_pool.hpp"

#include <string>

namespace mepic {

BlockPool::BlockPool(PoolConfig config) : config_(config) {
  if (config_.capacity_blocks == 0) raise(ErrorCode::ConfigError, "pool capacity must be positive");
  if (config_.block_size == 0) raise(ErrorCode::ConfigError, "block size must be positive");
  blocks_.resize(config_.capacity_blocks);
  for (std::uint32_t i = 0; i < config_.capacity_blocks; ++i) {
    blocks_[i].id = i;
    free_set_.insert(i);
  }
}

KvBlock& BlockPool::mut(BlockId b) {
  if (b >= blocks_.size()) raise(ErrorCode::SpanOutOfRange, "block id " + std::to_string(b) + " out of range");
  return blocks_[b];
}

const KvBlock& BlockPool::block(BlockId b) const {
  if (b >= blocks_.size()) raise(ErrorCode::SpanOutOfRange, "block id " + std::to_string(b) + " out of range");
  return blocks_[b];
}

std::vector<BlockId> BlockPool::allocate(std::uint32_t n) {
  if (free_set_.size() < n)
    raise(ErrorCode::InsufficientBlocks,
          "need " + std::to_string(n) + " blocks, " + std::to_string(free_set_.size()) + " free");
  std::vector<BlockId> out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const BlockId id = *free_set_.begin();
    free_set_.erase(free_set_.begin());
    KvBlock& blk = blocks_[id];
    blk.owner = Owner{OwnerKind::Reserved, Hash128{}, 0};
    blk.refcount = 1;
    touch(blk);
    out.push_back(id);
  }
  return out;
}

std::uint32_t BlockPool::incref(BlockId b) {
  KvBlock& blk = mut(b);
  if (blk.owner.kind == OwnerKind::Free) raise(ErrorCode::BlockIsFree, "incref on free block " + std::to_string(b));
  ++blk.refcount;
  touch(blk);
  return blk.refcount;
}

std::uint32_t BlockPool::decref(BlockId b) {
  KvBlock& blk = mut(b);
  if (blk.owner.kind == OwnerKind::Free) raise(ErrorCode::BlockIsFree, "decref on free block " + std::to_string(b));
  if (blk.refcount == 0) raise(ErrorCode::RefcountUnderflow, "decref on zero-ref block " + std::to_string(b));
  --blk.refcount;
  touch(blk);
  return blk.refcount;
}

void BlockPool::reclaim(BlockId b) {
  KvBlock& blk = mut(b);
  if (blk.owner.kind == OwnerKind::Free) return;  // idempotent
  if (blk.refcount != 0)
    raise(ErrorCode::BlockBusy, "reclaim of block " + std::to_string(b) + " with refcount " +
                                    std::to_string(blk.refcount));
  blk.owner = Owner{};
  touch(blk);
  free_set_.insert(b);
}

void BlockPool::tag_prefix(BlockId b, const PrefixKey& key) {
  KvBlock& blk = mut(b);
  if (blk.owner.kind == OwnerKind::Free) raise(ErrorCode::BlockIsFree, "tag on free block");
  if (blk.owner.kind != OwnerKind::Reserved && blk.refcount != 0)
    raise(ErrorCode::OwnershipConflict, "block " + std::to_string(b) + " is owned with live references");
  blk.owner = Owner{OwnerKind::Prefix, key, 0};
  touch(blk);
}

void BlockPool::tag_chunk(BlockId b, const ChunkId& id, std::uint32_t ordinal) {
  KvBlock& blk = mut(b);
  if (blk.owner.kind == OwnerKind::Free) raise(ErrorCode::BlockIsFree, "tag on free block");
  if (blk.owner.kind != OwnerKind::Reserved && blk.refcount != 0)
    raise(ErrorCode::OwnershipConflict, "block " + std::to_string(b) + " is owned with live references");
  blk.owner = Owner{OwnerKind::Chunk, id, ordinal};
  touch(blk);
}

PoolStats BlockPool::stats() const {
  PoolStats s;
  for (const KvBlock& blk : blocks_) {
    switch (blk.owner.kind) {
      case OwnerKind::Free: ++s.free; break;
      case OwnerKind::Reserved: ++s.reserved; break;
      case OwnerKind::Prefix: ++s.prefix_owned; break;
      case OwnerKind::Chunk:
        ++s.chunk_owned;
        if (blk.refcount == 0) ++s.evictable;
        break;
    }
  }
  return s;
}

bool BlockPool::check_consistency(std::string* why) const {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  const PoolStats s = stats();
  if (s.total() != capacity()) return fail("ownership counts do not sum to capacity");
  if (s.free != free_set_.size()) return fail("free set size disagrees with scan");
  for (const KvBlock& blk : blocks_) {
    const bool in_free = free_set_.count(blk.id) > 0;
    if ((blk.owner.kind == OwnerKind::Free) != in_free) return fail("free set / owner tag mismatch");
    if (blk.owner.kind == OwnerKind::Free && blk.refcount != 0) return fail("free block with references");
  }
  return true;
}

}  // namespace mepic
