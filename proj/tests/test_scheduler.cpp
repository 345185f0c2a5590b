#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "mepic/scheduler.hpp"

using namespace mepic;

namespace {

TokenSeq iota_tokens(Token start, std::size_t n) {
  TokenSeq out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = start + static_cast<Token>(i);
  return out;
}

Segment chunk_of(TokenSeq t) { return Segment{SegmentKind::Chunk, std::move(t)}; }
Segment prompt_of(TokenSeq t) { return Segment{SegmentKind::Prompt, std::move(t)}; }

EngineConfig base_config(PolicyKind kind = PolicyKind::Mepic, std::uint32_t capacity = 64) {
  EngineConfig cfg;
  cfg.pool = PoolConfig{capacity, 16};
  cfg.policy.kind = kind;
  cfg.seed = 7;
  return cfg;
}

struct PoolSnapshot {
  PoolStats stats;
  std::size_t prefix_entries;
  std::size_t chunk_entries;

  static PoolSnapshot take(const Engine& e) {
    return PoolSnapshot{e.pool().stats(), e.prefix().size(), e.chunks().entries().size()};
  }
  bool operator==(const PoolSnapshot& o) const {
    return stats.free == o.stats.free && stats.prefix_owned == o.stats.prefix_owned &&
           stats.chunk_owned == o.stats.chunk_owned && stats.evictable == o.stats.evictable &&
           prefix_entries == o.prefix_entries && chunk_entries == o.chunk_entries;
  }
};

}  // namespace

TEST_CASE("cold request plans head, canonical blocks and prompt") {
  // chunk of 20 tokens + prompt of 10 at block 16: two chunk blocks plus one
  // prompt block, everything recomputed (20 + 10 raw tokens).
  Engine engine(base_config());
  const std::vector<Segment> request{chunk_of(iota_tokens(100, 20)), prompt_of(iota_tokens(900, 10))};

  CHECK(engine.estimate_demand(request) == 3);
  const AdmissionOutcome out = engine.schedule(1, request, 0);
  REQUIRE(out.admitted);
  CHECK(out.plan.cost.new_blocks == 3);
  CHECK(out.plan.cost.recomputed_tokens == 30);
  CHECK(out.plan.cost.fetched_blocks == 0);

  // The chunk is registered with refcount one and the request consumes its
  // canonical blocks directly.
  REQUIRE(engine.chunks().entries().size() == 1);
  const ChunkEntry& entry = engine.chunks().entries().begin()->second;
  CHECK(entry.refcount == 1);
  CHECK(entry.size_blocks == 2);
  CHECK(out.plan.decisions[0].kind == DecisionKind::ChunkNew);
  CHECK(out.plan.decisions[0].blocks == entry.blocks);

  // Block map totality and injectivity over (block, slot).
  REQUIRE(out.plan.block_map.size() == 42);
  std::set<std::pair<BlockId, std::uint32_t>> slots;
  for (const BlockSlot& bs : out.plan.block_map) {
    CHECK(bs.block != kInvalidBlock);
    CHECK(slots.insert({bs.block, bs.slot}).second);
  }
}

TEST_CASE("identical concurrent request shares everything") {
  // Prompt sized to a full block so the whole request is shareable while the
  // first copy is still active.
  Engine engine(base_config());
  const std::vector<Segment> request{chunk_of(iota_tokens(100, 20)), prompt_of(iota_tokens(900, 16))};

  const AdmissionOutcome first = engine.schedule(1, request, 0);
  REQUIRE(first.admitted);

  const AdmissionOutcome second = engine.schedule(2, request, 1);
  REQUIRE(second.admitted);
  CHECK(second.plan.cost.recomputed_tokens == 0);
  CHECK(second.plan.cost.new_blocks == 0);
  CHECK(second.plan.recompute_spans.empty());
  // Same physical blocks in both maps.
  for (std::size_t i = 0; i < first.plan.block_map.size(); ++i)
    CHECK(first.plan.block_map[i].block == second.plan.block_map[i].block);
}

TEST_CASE("different question prefix shares canonical blocks but recomputes the head") {
  Engine engine(base_config());
  const Segment doc = chunk_of(iota_tokens(100, 20));
  const std::vector<Segment> req_a{prompt_of(iota_tokens(500, 16)), doc};
  const std::vector<Segment> req_b{prompt_of(iota_tokens(700, 16)), doc};

  REQUIRE(engine.schedule(1, req_a, 0).admitted);
  const AdmissionOutcome out = engine.schedule(2, req_b, 1);
  REQUIRE(out.admitted);

  // New blocks: one prompt block + one recomputed head; canonical shared.
  CHECK(out.plan.cost.new_blocks == 2);
  CHECK(out.plan.cost.recomputed_tokens == 16 + 4);  // prompt raw + head raw (4 of 16 slots are tokens)
  const SegmentDecision& chunk_dec = out.plan.decisions[1];
  CHECK(chunk_dec.kind == DecisionKind::ChunkShared);
  CHECK(chunk_dec.head_recomputed);
  const ChunkEntry& entry = engine.chunks().entries().begin()->second;
  CHECK(chunk_dec.head_block != entry.blocks[0]);
  CHECK(entry.refcount == 2);
}

TEST_CASE("head recompute span covers exactly the first padded block") {
  Engine engine(base_config());
  const Segment doc = chunk_of(iota_tokens(100, 20));
  REQUIRE(engine.schedule(1, std::vector<Segment>{prompt_of(iota_tokens(500, 16)), doc}, 0).admitted);
  const AdmissionOutcome out = engine.schedule(2, std::vector<Segment>{prompt_of(iota_tokens(700, 16)), doc}, 1);
  REQUIRE(out.admitted);
  // Spans: the new prompt block [0,16) and the chunk's first block [16,32).
  REQUIRE(out.plan.recompute_spans.size() == 2);
  CHECK(out.plan.recompute_spans[0].begin == 0);
  CHECK(out.plan.recompute_spans[0].end == 16);
  CHECK(out.plan.recompute_spans[1].begin == 16);
  CHECK(out.plan.recompute_spans[1].end == 32);
}

TEST_CASE("estimate_demand spec cases") {
  Engine engine(base_config());
  // One new 3-block chunk plus a one-block final prompt.
  const std::vector<Segment> fresh{chunk_of(iota_tokens(100, 48)), prompt_of(iota_tokens(900, 16))};
  CHECK(engine.estimate_demand(fresh) == 4);

  REQUIRE(engine.schedule(1, fresh, 0).admitted);
  // Everything resident and context-identical: nothing to allocate.
  CHECK(engine.estimate_demand(fresh) == 0);

  // Shared chunk with a prefix-miss head: one head block plus prompt blocks.
  const std::vector<Segment> other_ctx{prompt_of(iota_tokens(700, 16)), chunk_of(iota_tokens(100, 48))};
  CHECK(engine.estimate_demand(other_ctx) == 2);
}

TEST_CASE("release returns the pool to donated state and double release throws") {
  Engine engine(base_config());
  const std::vector<Segment> request{chunk_of(iota_tokens(100, 32))};
  const AdmissionOutcome out = engine.schedule(1, request, 0);
  REQUIRE(out.admitted);
  CHECK(out.plan.cost.recomputed_tokens == 32);

  engine.release(1, 5);
  const PoolStats stats = engine.pool().stats();
  // Canonical blocks stay resident as evictable cache; everything else frees.
  CHECK(stats.chunk_owned == 2);
  CHECK(stats.evictable == 2);
  CHECK(stats.free == engine.pool().capacity() - 2);
  CHECK(stats.prefix_owned == 0);

  CHECK_THROWS_AS(engine.release(1, 6), Error);
  try {
    engine.release(1, 6);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DoubleRelease);
  }
}

TEST_CASE("warm identical repeat recomputes only the head block") {
  Engine engine(base_config());
  const std::vector<Segment> request{chunk_of(iota_tokens(100, 32))};  // 2 blocks, no pads
  REQUIRE(engine.schedule(1, request, 0).admitted);
  engine.release(1, 10);

  const AdmissionOutcome again = engine.schedule(2, request, 20);
  REQUIRE(again.admitted);
  // The context-specific head entry died with the last reference, so the
  // repeat recomputes one head block; canonical blocks are shared.
  CHECK(again.plan.cost.recomputed_tokens == 16);
  CHECK(again.plan.cost.new_blocks == 1);
  CHECK(again.plan.decisions[0].kind == DecisionKind::ChunkShared);
  CHECK(again.plan.decisions[0].head_recomputed);
}

TEST_CASE("policy recompute span shapes") {
  Policy epic{PolicyKind::EpicLike, 0.15, 16};
  auto spans = policy_recompute_spans(epic, 100, 16, 12, true, 0);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].begin == 0);
  CHECK(spans[0].end == 16);

  Policy blend{PolicyKind::CacheBlendLike, 0.15, 16};
  spans = policy_recompute_spans(blend, 100, 16, 12, true, 42);
  std::size_t count = 0;
  for (const TokenSpan& s : spans) count += s.end - s.begin;
  CHECK(count == 15);
  // deterministic per seed
  CHECK(policy_recompute_spans(blend, 100, 16, 12, true, 42).size() == spans.size());

  Policy mepic{PolicyKind::Mepic, 0.15, 16};
  spans = policy_recompute_spans(mepic, 100, 16, 12, true, 0);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].begin == 0);
  CHECK(spans[0].end == 4);  // 16-slot head block holds 4 raw tokens

  Policy naive{PolicyKind::Naive, 0.15, 16};
  CHECK(policy_recompute_spans(naive, 100, 16, 12, true, 0).empty());
  CHECK(policy_recompute_spans(naive, 100, 16, 12, false, 0).size() == 1);

  Policy full{PolicyKind::FullRecompute, 0.15, 16};
  spans = policy_recompute_spans(full, 100, 16, 12, true, 0);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].end == 100);
}

TEST_CASE("sharing semantics split policies") {
  CHECK(sharing_semantics(Policy{PolicyKind::Mepic, 0, 0}) == SharingSemantics::SharedCanonical);
  for (PolicyKind kind :
       {PolicyKind::Naive, PolicyKind::FullRecompute, PolicyKind::CacheBlendLike, PolicyKind::EpicLike})
    CHECK(sharing_semantics(Policy{kind, 0.15, 16}) == SharingSemantics::PrivatePerRequest);
}

TEST_CASE("baseline policies duplicate chunk blocks per request") {
  Engine engine(base_config(PolicyKind::EpicLike, 128));
  const std::vector<Segment> request{chunk_of(iota_tokens(100, 64))};  // 4 blocks
  for (RequestId r = 1; r <= 3; ++r) REQUIRE(engine.schedule(r, request, r).admitted);
  CHECK(engine.pool().stats().chunk_owned == 12);  // 3 private copies
  CHECK(engine.chunks().entries().empty());        // nothing canonical

  Engine shared(base_config(PolicyKind::Mepic, 128));
  for (RequestId r = 1; r <= 3; ++r) REQUIRE(shared.schedule(r, request, r).admitted);
  CHECK(shared.pool().stats().chunk_owned == 4);  // one canonical copy
}

TEST_CASE("baseline restage costs appear per request") {
  Engine engine(base_config(PolicyKind::EpicLike, 128));
  const std::vector<Segment> request{chunk_of(iota_tokens(100, 64))};
  const AdmissionOutcome cold = engine.schedule(1, request, 0);
  CHECK(cold.plan.cost.fetched_blocks == 0);
  CHECK(cold.plan.cost.recomputed_tokens == 64);
  engine.release(1, 1);

  const AdmissionOutcome warm = engine.schedule(2, request, 2);
  CHECK(warm.plan.cost.fetched_blocks == 4);
  CHECK(warm.plan.cost.recomputed_tokens == 16);  // EPIC's leading tokens
  CHECK(warm.plan.fetch_ticks == engine.remote()->transfer_cost(4));
}

TEST_CASE("rejected admission leaves the engine bit-identical") {
  Engine engine(base_config(PolicyKind::Mepic, 8));
  // Pin six blocks with an active request.
  REQUIRE(engine.schedule(1, std::vector<Segment>{chunk_of(iota_tokens(100, 96))}, 0).admitted);

  const PoolSnapshot before = PoolSnapshot::take(engine);
  const std::vector<Segment> too_big{chunk_of(iota_tokens(500, 64))};  // needs 4 > 2 free
  const AdmissionOutcome out = engine.schedule(2, too_big, 1);
  CHECK_FALSE(out.admitted);
  CHECK(out.reason == "InsufficientEvenAfterEviction");
  CHECK(PoolSnapshot::take(engine) == before);
  CHECK_FALSE(engine.has_active(2));

  // Releasing the pinned chunk makes its blocks evictable, after which the
  // same request is admitted via eviction.
  engine.release(1, 2);
  const AdmissionOutcome retry = engine.schedule(2, too_big, 3);
  CHECK(retry.admitted);
}

TEST_CASE("eviction during admission offloads and the chunk comes back remote") {
  EngineConfig cfg = base_config(PolicyKind::Mepic, 8);
  cfg.remote_policy = RemotePolicy::AlwaysFetch;
  Engine engine(cfg);
  const std::vector<Segment> first{chunk_of(iota_tokens(100, 96))};  // 6 blocks
  REQUIRE(engine.schedule(1, first, 0).admitted);
  engine.release(1, 1);

  // A new 4-block chunk forces eviction of the donated one.
  REQUIRE(engine.schedule(2, std::vector<Segment>{chunk_of(iota_tokens(500, 64))}, 2).admitted);
  const ChunkId first_id = chunk_id(chunk_of(iota_tokens(100, 96)), 16);
  CHECK(engine.chunks().peek(first_id) == Residency::RemoteOnly);

  // Re-admitting the first chunk restages it and pays the transfer cost.
  engine.release(2, 3);
  const AdmissionOutcome back = engine.schedule(3, first, 4);
  REQUIRE(back.admitted);
  CHECK(back.plan.decisions[0].kind == DecisionKind::ChunkFetched);
  CHECK(back.plan.cost.fetched_blocks == 6);
  CHECK(back.plan.fetch_ticks > 0);
}

TEST_CASE("duplicate chunk references in one request stay injective") {
  Engine engine(base_config(PolicyKind::Mepic, 64));
  const Segment doc = chunk_of(iota_tokens(100, 32));
  const AdmissionOutcome out = engine.schedule(1, std::vector<Segment>{doc, doc}, 0);
  REQUIRE(out.admitted);
  std::set<std::pair<BlockId, std::uint32_t>> slots;
  for (const BlockSlot& bs : out.plan.block_map) CHECK(slots.insert({bs.block, bs.slot}).second);
  // First reference is canonical, second is a private copy.
  CHECK(out.plan.decisions[0].kind == DecisionKind::ChunkNew);
  CHECK(out.plan.decisions[1].kind == DecisionKind::Recompute);
}

TEST_CASE("retain mode keeps zero-ref prefix entries matchable") {
  EngineConfig cfg = base_config();
  cfg.retain_zero_ref_prefix = true;
  Engine engine(cfg);
  const std::vector<Segment> request{chunk_of(iota_tokens(100, 32)), prompt_of(iota_tokens(900, 16))};
  REQUIRE(engine.schedule(1, request, 0).admitted);
  engine.release(1, 10);

  // Head and prompt entries survive the release, so the repeat is free.
  const AdmissionOutcome again = engine.schedule(2, request, 20);
  REQUIRE(again.admitted);
  CHECK(again.plan.cost.recomputed_tokens == 0);
  CHECK(again.plan.cost.new_blocks == 0);

  // Under pressure the retained blocks are reclaimed rather than rejected.
  engine.release(2, 21);
  const AdmissionOutcome big = engine.schedule(3, std::vector<Segment>{chunk_of(iota_tokens(5000, 960))}, 22);
  CHECK(big.admitted);
}

TEST_CASE("remote policy knob selects fetch or recompute for evicted chunks") {
  auto evicted_setup = [](RemotePolicy rp) {
    // Six blocks: the second 4-block chunk can only fit by evicting the first.
    EngineConfig cfg = base_config(PolicyKind::Mepic, 6);
    cfg.remote_policy = rp;
    // Fetch cost for 4 blocks: 2 + ceil(4/4) = 3 ticks; recompute cost for
    // 64 tokens at 0.1 ticks/token: 7 ticks. Cost-based picks the fetch.
    cfg.cost_model.prefill_ticks_per_token = 0.1;
    Engine engine(cfg);
    const std::vector<Segment> doc{chunk_of(iota_tokens(100, 64))};
    engine.schedule(1, doc, 0);
    engine.release(1, 1);
    engine.schedule(2, std::vector<Segment>{chunk_of(iota_tokens(900, 64))}, 2);  // evicts the first
    engine.release(2, 3);
    return engine.schedule(3, doc, 4);
  };

  const AdmissionOutcome fetched = evicted_setup(RemotePolicy::CostBased);
  REQUIRE(fetched.admitted);
  CHECK(fetched.plan.decisions[0].kind == DecisionKind::ChunkFetched);
  CHECK(fetched.plan.cost.recomputed_tokens == 16);  // head only

  const AdmissionOutcome recomputed = evicted_setup(RemotePolicy::AlwaysRecompute);
  REQUIRE(recomputed.admitted);
  CHECK(recomputed.plan.decisions[0].kind == DecisionKind::ChunkNew);
  CHECK(recomputed.plan.cost.recomputed_tokens == 64);
}

TEST_CASE("baseline restage copies persisted payload bytes") {
  EngineConfig cfg = base_config(PolicyKind::EpicLike, 128);
  cfg.materialize_payloads = true;
  cfg.d_head = 16;
  Engine engine(cfg);
  const std::vector<Segment> doc{chunk_of(iota_tokens(100, 64))};

  const AdmissionOutcome cold = engine.schedule(1, doc, 0);
  REQUIRE(cold.admitted);
  std::vector<KvPage> reference;
  for (BlockId b : cold.plan.decisions[0].blocks) reference.push_back(*engine.pages()->find(b));
  engine.release(1, 1);

  const AdmissionOutcome warm = engine.schedule(2, doc, 2);
  REQUIRE(warm.admitted);
  CHECK(warm.plan.cost.fetched_blocks == 4);
  // Staged bytes plus the policy's recomputed positions reproduce the same
  // pages: the projections are position-free functions of the tokens.
  for (std::size_t i = 0; i < warm.plan.decisions[0].blocks.size(); ++i)
    CHECK(*engine.pages()->find(warm.plan.decisions[0].blocks[i]) == reference[i]);
}

TEST_CASE("reused canonical pages show zero deviation against a private recompute") {
  const TokenSeq doc = iota_tokens(100, 52);
  EngineConfig shared_cfg = base_config(PolicyKind::Mepic, 128);
  shared_cfg.materialize_payloads = true;
  shared_cfg.d_head = 16;
  EngineConfig private_cfg = shared_cfg;
  private_cfg.policy.kind = PolicyKind::FullRecompute;

  // Reused route: canonical pages materialized once, then shared behind a
  // different question prefix.
  Engine shared(shared_cfg);
  REQUIRE(shared.schedule(1, std::vector<Segment>{chunk_of(doc)}, 0).admitted);
  REQUIRE(shared.schedule(2, std::vector<Segment>{prompt_of(iota_tokens(900, 35)), chunk_of(doc)}, 1).admitted);
  std::vector<KvPage> reused;
  for (BlockId b : shared.chunks().entries().begin()->second.blocks) reused.push_back(*shared.pages()->find(b));

  // Fully recomputed route at the same shifted offset.
  Engine priv(private_cfg);
  const AdmissionOutcome full =
      priv.schedule(1, std::vector<Segment>{prompt_of(iota_tokens(900, 35)), chunk_of(doc)}, 0);
  REQUIRE(full.admitted);
  std::vector<KvPage> recomputed;
  for (BlockId b : full.plan.decisions[1].blocks) recomputed.push_back(*priv.pages()->find(b));

  const auto dev = kv_deviation(recomputed, reused);
  for (std::size_t i = 0; i < dev.size(); ++i) CHECK(dev[i] == 0.0);
}

TEST_CASE("schedule decisions are deterministic") {
  auto run = [] {
    Engine engine(base_config());
    std::vector<BlockId> trail;
    const std::vector<Segment> a{chunk_of(iota_tokens(100, 40)), prompt_of(iota_tokens(900, 10))};
    const std::vector<Segment> b{prompt_of(iota_tokens(700, 20)), chunk_of(iota_tokens(100, 40))};
    for (const auto& plan : {engine.schedule(1, a, 0).plan, engine.schedule(2, b, 1).plan})
      for (const BlockSlot& bs : plan.block_map) trail.push_back(bs.block);
    return trail;
  };
  CHECK(run() == run());
}

TEST_CASE("randomized schedule and release upholds engine invariants") {
  std::mt19937_64 rng(31337);
  for (const PolicyKind kind : {PolicyKind::Mepic, PolicyKind::EpicLike}) {
    Engine engine(base_config(kind, 96));
    std::vector<RequestId> active;
    RequestId next_id = 1;
    Tick now = 0;
    for (int step = 0; step < 400; ++step, ++now) {
      if (rng() % 3 != 0 || active.empty()) {
        std::vector<Segment> segs;
        const int n = 1 + static_cast<int>(rng() % 3);
        for (int i = 0; i < n; ++i) {
          const std::size_t len = 1 + rng() % 40;
          TokenSeq toks(len);
          for (Token& t : toks) t = static_cast<Token>(1 + rng() % 50);
          segs.push_back(Segment{i + 1 < n && rng() % 2 ? SegmentKind::Chunk : SegmentKind::Prompt, toks});
        }
        const RequestId id = next_id++;
        const std::uint64_t predicted = engine.estimate_demand(segs);
        const AdmissionOutcome out = engine.schedule(id, segs, now);
        if (out.admitted) {
          active.push_back(id);
          // Demand exactness: allocation count equals the estimate.
          CHECK(out.plan.cost.new_blocks == predicted);
          // Canonical sharing: shared decisions map ordinals to the entry's
          // current blocks.
          for (const SegmentDecision& dec : out.plan.decisions) {
            if (dec.kind == DecisionKind::ChunkShared || dec.kind == DecisionKind::ChunkFetched) {
              const ChunkEntry* entry = engine.chunks().find(dec.chunk);
              if (entry != nullptr && entry->resident() && kind == PolicyKind::Mepic)
                CHECK(dec.blocks == entry->blocks);
            }
          }
        }
      } else {
        const std::size_t pos = rng() % active.size();
        engine.release(active[pos], now);
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(pos));
      }
      std::string why;
      REQUIRE_MESSAGE(engine.check_consistency(&why), why);
    }
  }
}
