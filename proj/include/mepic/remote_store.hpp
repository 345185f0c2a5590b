#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mepic/pages.hpp"
#include "mepic/types.hpp"

namespace mepic {

inline constexpr std::uint32_t kRemoteFormatVersion = 1;

// Parsed form of one persisted chunk record.
struct RemoteChunkRecord {
  ChunkId id{};
  std::uint32_t block_size = 0;
  std::uint32_t k = 0;  // canonical block count
  bool payload_present = false;
  TokenSeq padded_tokens;            // k * block_size tokens
  std::uint32_t d_head = 0;          // payload geometry
  std::vector<KvPage> pages;         // k pages when payload_present
};

// Binary codec. Record layout, little-endian throughout:
//   u32 format_version, 16-byte chunk id, u32 block_size, u32 k,
//   u8 payload_present, k*block_size u32 tokens,
//   [u32 d_head, per block: keys f32[], values f32[], valid u8[]]
std::vector<std::byte> encode_remote_record(const RemoteChunkRecord& rec);
RemoteChunkRecord decode_remote_record(std::span<const std::byte> bytes);

// CPU/disk persistence tier for evicted chunks. Records round-trip
// bit-exactly; the linear cost model charges latency plus size over
// bandwidth per fetch.
class RemoteStore {
 public:
  RemoteStore(double bandwidth_blocks_per_tick = 4.0, Tick latency_ticks = 2)
      : bandwidth_(bandwidth_blocks_per_tick), latency_(latency_ticks) {}

  void put(const RemoteChunkRecord& rec);
  bool contains(const ChunkId& id) const { return records_.count(id) > 0; }
  std::optional<RemoteChunkRecord> get(const ChunkId& id) const;
  const std::vector<std::byte>* raw(const ChunkId& id) const;
  void erase(const ChunkId& id) { records_.erase(id); }
  std::size_t size() const { return records_.size(); }

  Tick transfer_cost(std::uint32_t blocks) const;
  double bandwidth() const { return bandwidth_; }
  Tick latency() const { return latency_; }

  // One file per record, named by the chunk id in hex.
  void save_directory(const std::string& dir) const;
  void load_directory(const std::string& dir);

 private:
  double bandwidth_;
  Tick latency_;
  std::map<ChunkId, std::vector<std::byte>> records_;
};

}  // namespace mepic
