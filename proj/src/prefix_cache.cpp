#include "mepic/prefix_cache.hpp"

#include <algorithm>

#include "mepic/errors.hpp"

namespace mepic {

std::vector<PrefixKey> PrefixIndex::chain_keys(std::span<const Token> padded_tokens, std::uint32_t block_size) {
  std::vector<PrefixKey> keys;
  PrefixKey parent = chain_seed();
  const std::size_t full = padded_tokens.size() / block_size;
  keys.reserve(full);
  for (std::size_t b = 0; b < full; ++b) {
    parent = chain_hash(parent, padded_tokens.subspan(b * block_size, block_size));
    keys.push_back(parent);
  }
  return keys;
}

PrefixMatch PrefixIndex::match_prefix(std::span<const Token> padded_tokens, std::uint32_t block_size) const {
  PrefixMatch match;
  PrefixKey parent = chain_seed();
  const std::size_t full = padded_tokens.size() / block_size;
  for (std::size_t b = 0; b < full; ++b) {
    const auto block_tokens = padded_tokens.subspan(b * block_size, block_size);
    parent = chain_hash(parent, block_tokens);
    const auto it = entries_.find(parent);
    if (it == entries_.end()) break;
    if (!std::ranges::equal(it->second.tokens, block_tokens)) break;  // chain soundness
    ++match.hit_blocks;
    match.blocks.push_back(it->second.block);
  }
  return match;
}

void PrefixIndex::insert_entry(const PrefixKey& key, PrefixEntry entry) {
  const BlockId block = entry.block;
  auto [it, inserted] = entries_.emplace(key, std::move(entry));
  if (inserted) by_block_.emplace(block, key);
}

void PrefixIndex::insert_prefix(BlockPool& pool, std::span<const Token> padded_tokens,
                                std::span<const BlockId> blocks, Tick now) {
  const std::size_t full = padded_tokens.size() / pool.block_size();
  if (blocks.size() > full)
    raise(ErrorCode::SpanOutOfRange, "more blocks than full token blocks");
  for (const BlockId b : blocks) {
    const OwnerKind kind = pool.owner(b).kind;
    if (kind == OwnerKind::Chunk)
      raise(ErrorCode::OwnershipConflict, "block " + std::to_string(b) + " is chunk-owned");
    if (kind == OwnerKind::Free) raise(ErrorCode::BlockIsFree, "block " + std::to_string(b) + " is free");
  }
  PrefixKey parent = chain_seed();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto block_tokens = padded_tokens.subspan(i * pool.block_size(), pool.block_size());
    parent = chain_hash(parent, block_tokens);
    if (entries_.count(parent)) continue;  // first registration wins
    pool.tag_prefix(blocks[i], parent);
    PrefixEntry entry;
    entry.block = blocks[i];
    entry.tokens.assign(block_tokens.begin(), block_tokens.end());
    entry.last_touch = now;
    insert_entry(parent, std::move(entry));
  }
}

void PrefixIndex::register_under_key(BlockPool& pool, const PrefixKey& key, std::span<const Token> block_tokens,
                                     BlockId block, Tick now) {
  const OwnerKind kind = pool.owner(block).kind;
  if (kind == OwnerKind::Chunk)
    raise(ErrorCode::OwnershipConflict, "block " + std::to_string(block) + " is chunk-owned");
  if (kind == OwnerKind::Free) raise(ErrorCode::BlockIsFree, "block is free");
  pool.tag_prefix(block, key);
  if (!entries_.count(key)) {
    PrefixEntry entry;
    entry.block = block;
    entry.tokens.assign(block_tokens.begin(), block_tokens.end());
    entry.last_touch = now;
    insert_entry(key, std::move(entry));
  }
}

PrefixKey PrefixIndex::register_chunk_head(BlockPool& pool, const PrefixKey& preceding_chain,
                                           std::span<const Token> block_tokens, BlockId block, Tick now) {
  const PrefixKey key = chain_hash(preceding_chain, block_tokens);
  register_under_key(pool, key, block_tokens, block, now);
  return key;
}

PrefixKey PrefixIndex::register_head_alias(const PrefixKey& preceding_chain, std::span<const Token> block_tokens,
                                           BlockId block, const ChunkId& chunk, Tick now) {
  const PrefixKey key = chain_hash(preceding_chain, block_tokens);
  if (!entries_.count(key)) {
    PrefixEntry entry;
    entry.block = block;
    entry.tokens.assign(block_tokens.begin(), block_tokens.end());
    entry.last_touch = now;
    entry.chunk_alias = true;
    entry.alias_chunk = chunk;
    insert_entry(key, std::move(entry));
  }
  return key;
}

std::optional<BlockId> PrefixIndex::lookup(const PrefixKey& key, std::span<const Token> expect_tokens, Tick now) {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  if (!std::ranges::equal(it->second.tokens, expect_tokens)) return std::nullopt;
  it->second.last_touch = now;
  return it->second.block;
}

void PrefixIndex::erase(const PrefixKey& key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) return;
  auto [lo, hi] = by_block_.equal_range(it->second.block);
  for (auto b = lo; b != hi; ++b) {
    if (b->second == key) {
      by_block_.erase(b);
      break;
    }
  }
  entries_.erase(it);
}

void PrefixIndex::erase_block(BlockId block) {
  auto [lo, hi] = by_block_.equal_range(block);
  std::vector<PrefixKey> keys;
  for (auto it = lo; it != hi; ++it) keys.push_back(it->second);
  by_block_.erase(lo, hi);
  for (const PrefixKey& k : keys) entries_.erase(k);
}

void PrefixIndex::drop_aliases_of(const ChunkId& chunk) {
  std::vector<PrefixKey> keys;
  for (const auto& [key, entry] : entries_)
    if (entry.chunk_alias && entry.alias_chunk == chunk) keys.push_back(key);
  for (const PrefixKey& k : keys) erase(k);
}

std::vector<PrefixKey> PrefixIndex::zero_ref_keys(const BlockPool& pool) const {
  std::vector<std::pair<Tick, PrefixKey>> candidates;
  for (const auto& [key, entry] : entries_) {
    if (entry.chunk_alias) continue;
    if (pool.refcount(entry.block) == 0) candidates.emplace_back(entry.last_touch, key);
  }
  std::sort(candidates.begin(), candidates.end());
  std::vector<PrefixKey> out;
  out.reserve(candidates.size());
  for (auto& [t, k] : candidates) out.push_back(k);
  return out;
}

}  // namespace mepic
