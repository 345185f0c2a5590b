#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mepic/block_pool.hpp"
#include "mepic/chunk_cache.hpp"
#include "mepic/pages.hpp"
#include "mepic/prefix_cache.hpp"
#include "mepic/remote_store.hpp"
#include "mepic/rope.hpp"
#include "mepic/segmentation.hpp"
#include "mepic/types.hpp"

namespace mepic {

enum class PolicyKind : std::uint8_t { Naive, FullRecompute, CacheBlendLike, EpicLike, Mepic };

struct Policy {
  PolicyKind kind = PolicyKind::Mepic;
  double recompute_fraction = 0.15;   // CacheBlendLike: share of chunk tokens
  std::uint32_t recompute_tokens = 16;  // EpicLike: leading tokens per chunk
};

const char* policy_name(PolicyKind kind);
std::optional<PolicyKind> parse_policy(const std::string& name);

enum class SharingSemantics : std::uint8_t { SharedCanonical, PrivatePerRequest };

// Only the canonical-layout policy can alias chunk blocks across requests;
// every baseline keeps a private copy per admitted request.
SharingSemantics sharing_semantics(const Policy& policy);

// Raw-token spans of one chunk that a policy recomputes when the chunk's KV
// is available for reuse (`reusable`); a chunk seen for the first time is
// always fully computed. Spans are chunk-local over the raw tokens.
std::vector<TokenSpan> policy_recompute_spans(const Policy& policy, std::size_t chunk_raw_len,
                                              std::uint32_t block_size, std::uint32_t pad_prefix, bool reusable,
                                              std::uint64_t selection_seed);

enum class RemotePolicy : std::uint8_t { AlwaysFetch, AlwaysRecompute, CostBased };

struct CostModel {
  double prefill_ticks_per_token = 0.01;
  std::uint64_t block_bytes = 8192;  // reporting only
};

enum class DecisionKind : std::uint8_t { PrefixHit, ChunkShared, ChunkNew, ChunkFetched, Recompute };

struct SegmentDecision {
  std::size_t span_index = 0;
  DecisionKind kind = DecisionKind::Recompute;
  ChunkId chunk{};
  std::vector<BlockId> blocks;          // blocks backing the span, in block order
  BlockId head_block = kInvalidBlock;   // ChunkShared/ChunkFetched: context head
  bool head_recomputed = false;
  Tick fetch_cost = 0;
};

struct PlanCost {
  std::uint64_t recomputed_tokens = 0;  // non-PAD positions written
  std::uint64_t fetched_blocks = 0;
  std::uint64_t new_blocks = 0;
  std::uint64_t shared_blocks = 0;
};

struct BlockSlot {
  BlockId block = kInvalidBlock;
  std::uint32_t slot = 0;
};

struct PlacementPlan {
  RequestId request = 0;
  AlignedLayout layout;
  std::vector<SegmentDecision> decisions;
  std::vector<TokenSpan> recompute_spans;  // padded positions written this request
  std::vector<BlockSlot> block_map;        // one entry per padded position
  PlanCost cost;
  Tick fetch_ticks = 0;
};

struct AdmissionOutcome {
  bool admitted = false;
  PlacementPlan plan;  // valid when admitted
  std::string reason;  // set when rejected
};

struct EngineConfig {
  PoolConfig pool;
  Policy policy;
  RemotePolicy remote_policy = RemotePolicy::CostBased;
  CostModel cost_model;
  bool remote_enabled = true;
  double remote_bandwidth_blocks_per_tick = 4.0;
  Tick remote_latency_ticks = 2;
  bool retain_zero_ref_prefix = false;
  bool materialize_payloads = false;
  std::uint32_t d_head = 64;
  std::uint64_t seed = 0;
};

// The hybrid KV manager: segmentation, residency resolution, admission
// check, eviction and allocation, producing a deterministic placement plan.
// Admission is all-or-nothing: a rejected schedule leaves every structure
// bit-identical. One logical-clock loop drives it; no internal threading.
class Engine {
 public:
  explicit Engine(EngineConfig cfg);

  const EngineConfig& config() const { return cfg_; }
  BlockPool& pool() { return pool_; }
  const BlockPool& pool() const { return pool_; }
  PrefixIndex& prefix() { return prefix_; }
  const PrefixIndex& prefix() const { return prefix_; }
  ChunkCache& chunks() { return chunks_; }
  const ChunkCache& chunks() const { return chunks_; }
  RemoteStore* remote() { return remote_.get(); }
  const RemoteStore* remote() const { return remote_.get(); }
  PageStore* pages() { return pages_.get(); }
  const ToyLayer* layer() const { return layer_.get(); }

  AdmissionOutcome schedule(RequestId id, const std::vector<Segment>& segments, Tick now);
  void release(RequestId id, Tick now);

  // Blocks a request would newly allocate, given current residency.
  std::uint64_t estimate_demand(const std::vector<Segment>& segments) const;

  bool has_active(RequestId id) const { return active_.count(id) > 0; }
  std::size_t active_count() const { return active_.size(); }

  struct Counters {
    std::uint64_t scheduled = 0;
    std::uint64_t rejected = 0;
    std::uint64_t prefix_block_lookups = 0;
    std::uint64_t prefix_block_hits = 0;
    std::uint64_t chunk_refs = 0;
    std::uint64_t chunk_eligible_refs = 0;  // references to previously seen chunks
    std::uint64_t chunk_resident_hits = 0;
    std::uint64_t remote_fetches = 0;
  };
  const Counters& counters() const { return counters_; }

  bool check_consistency(std::string* why = nullptr) const;

 private:
  struct ChunkSpanPlan {
    std::size_t span_index = 0;
    DecisionKind kind = DecisionKind::ChunkNew;
    ChunkId id{};
    ChunkId instance_id{};  // private copies
    std::uint32_t n_blocks = 0;
    bool eligible = false;
    bool resident_hit = false;
    bool needs_head = false;       // shared/fetched chunks need a context head
    bool head_hit = false;
    BlockId head_hit_block = kInvalidBlock;
    PrefixKey head_parent{};
    PrefixKey head_key{};
    Tick fetch_cost = 0;
    std::vector<TokenSpan> raw_recompute;  // chunk-local raw spans
  };
  struct PromptSpanPlan {
    std::size_t span_index = 0;
    // one entry per block of the span: 0 = prefix hit, 1 = new indexed,
    // 2 = new private (partial tail)
    std::vector<int> sources;
    std::vector<BlockId> hit_blocks;
    std::vector<PrefixKey> keys;
  };
  struct Draft {
    AlignedLayout layout;
    std::vector<ChunkSpanPlan> chunk_spans;
    std::vector<PromptSpanPlan> prompt_spans;
    std::uint64_t demand = 0;
    std::uint64_t prefix_lookups = 0;
    std::uint64_t prefix_hits = 0;
    std::set<ChunkId> resident_refs;  // chunks acquired when committing
  };
  struct ReleaseRecord {
    std::vector<ChunkId> chunks_held;
    std::vector<BlockId> prefix_refs;      // indexed blocks: owned or hit
    std::vector<BlockId> private_blocks;   // unindexed request-scoped blocks
    std::vector<BlockId> instance_blocks;  // private chunk copies
  };

  Draft plan_request(RequestId id, const std::vector<Segment>& segments) const;
  PlacementPlan commit(RequestId id, Draft&& draft, Tick now);
  void reclaim_prefix_block(BlockId b);
  void note_seen(const ChunkId& id) { ever_seen_.insert(id); }

  EngineConfig cfg_;
  BlockPool pool_;
  std::unique_ptr<RemoteStore> remote_;
  std::unique_ptr<PageStore> pages_;
  std::unique_ptr<ToyLayer> layer_;
  ChunkCache chunks_;
  PrefixIndex prefix_;
  std::map<RequestId, ReleaseRecord> active_;
  std::set<ChunkId> ever_seen_;
  Counters counters_;
};

}  // namespace mepic
