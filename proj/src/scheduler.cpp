#include "mepic/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mepic/errors.hpp"
#include "mepic/hash.hpp"

namespace mepic {

const char* policy_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::Naive: return "naive";
    case PolicyKind::FullRecompute: return "full_recompute";
    case PolicyKind::CacheBlendLike: return "cacheblend";
    case PolicyKind::EpicLike: return "epic";
    case PolicyKind::Mepic: return "mepic";
  }
  return "unknown";
}

std::optional<PolicyKind> parse_policy(const std::string& name) {
  if (name == "naive") return PolicyKind::Naive;
  if (name == "full_recompute" || name == "full") return PolicyKind::FullRecompute;
  if (name == "cacheblend") return PolicyKind::CacheBlendLike;
  if (name == "epic") return PolicyKind::EpicLike;
  if (name == "mepic") return PolicyKind::Mepic;
  return std::nullopt;
}

SharingSemantics sharing_semantics(const Policy& policy) {
  return policy.kind == PolicyKind::Mepic ? SharingSemantics::SharedCanonical
                                          : SharingSemantics::PrivatePerRequest;
}

std::vector<TokenSpan> policy_recompute_spans(const Policy& policy, std::size_t chunk_raw_len,
                                              std::uint32_t block_size, std::uint32_t pad_prefix, bool reusable,
                                              std::uint64_t selection_seed) {
  const std::size_t len = chunk_raw_len;
  if (len == 0) return {};
  if (!reusable || policy.kind == PolicyKind::FullRecompute) return {TokenSpan{0, len}};

  switch (policy.kind) {
    case PolicyKind::Naive:
      return {};
    case PolicyKind::EpicLike: {
      const std::size_t n = std::min<std::size_t>(policy.recompute_tokens, len);
      if (n == 0) return {};
      return {TokenSpan{0, n}};
    }
    case PolicyKind::CacheBlendLike: {
      const std::size_t n =
          std::min<std::size_t>(len, static_cast<std::size_t>(std::ceil(policy.recompute_fraction * static_cast<double>(len))));
      if (n == 0) return {};
      // Stand-in for deviation-ranked selection: a seeded draw of n distinct
      // positions. The count is what drives cost and block dirtiness.
      std::vector<std::size_t> positions(len);
      for (std::size_t i = 0; i < len; ++i) positions[i] = i;
      std::mt19937_64 rng(selection_seed);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng() % (len - i));
        std::swap(positions[i], positions[j]);
      }
      positions.resize(n);
      std::sort(positions.begin(), positions.end());
      std::vector<TokenSpan> spans;
      for (std::size_t i = 0; i < positions.size();) {
        std::size_t j = i;
        while (j + 1 < positions.size() && positions[j + 1] == positions[j] + 1) ++j;
        spans.push_back(TokenSpan{positions[i], positions[j] + 1});
        i = j + 1;
      }
      return spans;
    }
    case PolicyKind::Mepic: {
      // First padded block only; its raw payload is block_size - pad_prefix.
      const std::size_t head_raw = std::min<std::size_t>(len, block_size - pad_prefix);
      return {TokenSpan{0, head_raw}};
    }
    case PolicyKind::FullRecompute:
      break;
  }
  return {TokenSpan{0, len}};
}

namespace {

ChunkId private_instance_id(const ChunkId& id, RequestId request, std::size_t span_index) {
  return ChunkId{mix_seed(id.hi, request, span_index ^ 0x7072697661746573ULL),
                 mix_seed(id.lo, request, span_index)};
}

PrefixKey private_block_key(RequestId request, std::size_t padded_block_index) {
  return PrefixKey{mix_seed(0x7265712d626c6f63ULL, request, padded_block_index),
                   mix_seed(request, padded_block_index, 0x6bULL)};
}

}  // namespace

Engine::Engine(EngineConfig cfg)
    : cfg_(cfg),
      pool_(cfg.pool),
      remote_(cfg.remote_enabled
                  ? std::make_unique<RemoteStore>(cfg.remote_bandwidth_blocks_per_tick, cfg.remote_latency_ticks)
                  : nullptr),
      pages_(cfg.materialize_payloads
                 ? std::make_unique<PageStore>(PageGeometry{cfg.pool.block_size, cfg.d_head})
                 : nullptr),
      layer_(cfg.materialize_payloads ? std::make_unique<ToyLayer>(cfg.seed, cfg.d_head) : nullptr),
      chunks_(pool_, remote_.get(), pages_.get(), cfg.remote_enabled) {
  chunks_.set_eviction_hook([this](const ChunkEntry& e) { prefix_.drop_aliases_of(e.id); });
  chunks_.set_zero_ref_hook([this](const ChunkEntry& e) {
    if (!cfg_.retain_zero_ref_prefix) prefix_.drop_aliases_of(e.id);
  });
}

Engine::Draft Engine::plan_request(RequestId id, const std::vector<Segment>& segments) const {
  (void)id;
  Draft d;
  d.layout = canonicalize(segments, pool_.block_size());
  const std::uint32_t bs = pool_.block_size();
  const TokenSeq& padded = d.layout.padded_tokens;

  // Verified read-only lookup. Alias entries only satisfy the head lookup of
  // their own chunk, never a generic prompt-block lookup: an alias borrows
  // the chunk's lifetime, which the plan only extends for that chunk.
  auto peek_index = [&](const PrefixKey& key, std::span<const Token> tokens,
                        const ChunkId* alias_of) -> const PrefixEntry* {
    auto it = prefix_.entries().find(key);
    if (it == prefix_.entries().end()) return nullptr;
    if (!std::ranges::equal(it->second.tokens, tokens)) return nullptr;
    if (it->second.chunk_alias && (alias_of == nullptr || it->second.alias_chunk != *alias_of)) return nullptr;
    return &it->second;
  };

  PrefixKey chain = chain_seed();
  std::set<ChunkId> in_request;

  for (std::size_t si = 0; si < d.layout.spans.size(); ++si) {
    const SpanInfo& span = d.layout.spans[si];
    const std::size_t pb = span.padded_begin;
    const std::size_t pe = span.padded_end;

    if (span.kind == SegmentKind::Chunk) {
      const auto span_tokens = std::span<const Token>(padded).subspan(pb, pe - pb);
      const auto block0_tokens = span_tokens.subspan(0, bs);
      const ChunkId cid = hash128_tokens(span_tokens);
      const std::uint32_t n_blocks = static_cast<std::uint32_t>((pe - pb) / bs);
      const std::size_t raw_len = span.raw_end - span.raw_begin;

      ChunkSpanPlan cp;
      cp.span_index = si;
      cp.id = cid;
      cp.n_blocks = n_blocks;
      cp.head_parent = chain;
      cp.head_key = chain_hash(chain, block0_tokens);
      cp.eligible = ever_seen_.count(cid) > 0;

      auto resolve_head = [&]() {
        cp.needs_head = true;
        ++d.prefix_lookups;
        if (const PrefixEntry* e = peek_index(cp.head_key, block0_tokens, &cid)) {
          cp.head_hit = true;
          cp.head_hit_block = e->block;
          ++d.prefix_hits;
        } else {
          d.demand += 1;  // one recomputed head block
        }
      };

      const bool dup = in_request.count(cid) > 0;
      if (dup) {
        // A repeated reference inside one request gets a private copy so the
        // block map stays injective.
        cp.kind = DecisionKind::Recompute;
        cp.instance_id = private_instance_id(cid, id, si);
        d.demand += n_blocks;
        cp.raw_recompute = {TokenSpan{0, raw_len}};
      } else if (sharing_semantics(cfg_.policy) == SharingSemantics::SharedCanonical) {
        const Residency res = chunks_.peek(cid);
        const bool remote_has = remote_ != nullptr && remote_->contains(cid);
        if (res == Residency::Resident) {
          cp.kind = DecisionKind::ChunkShared;
          cp.resident_hit = true;
          d.resident_refs.insert(cid);
          resolve_head();
        } else if (res == Residency::RemoteOnly || remote_has) {
          const Tick fetch_cost = remote_->transfer_cost(n_blocks);
          const Tick recompute_cost = static_cast<Tick>(
              std::ceil(cfg_.cost_model.prefill_ticks_per_token * static_cast<double>(raw_len)));
          bool do_fetch = false;
          switch (cfg_.remote_policy) {
            case RemotePolicy::AlwaysFetch: do_fetch = true; break;
            case RemotePolicy::AlwaysRecompute: do_fetch = false; break;
            case RemotePolicy::CostBased: do_fetch = fetch_cost < recompute_cost; break;
          }
          if (do_fetch) {
            cp.kind = DecisionKind::ChunkFetched;
            cp.fetch_cost = fetch_cost;
            d.demand += n_blocks;
            resolve_head();
          } else {
            cp.kind = DecisionKind::ChunkNew;
            d.demand += n_blocks;
            cp.raw_recompute = {TokenSpan{0, raw_len}};
          }
        } else {
          cp.kind = DecisionKind::ChunkNew;
          d.demand += n_blocks;
          cp.raw_recompute = {TokenSpan{0, raw_len}};
        }
      } else {
        cp.instance_id = private_instance_id(cid, id, si);
        const bool can_stage = cfg_.policy.kind != PolicyKind::FullRecompute && remote_ != nullptr &&
                               remote_->contains(cid);
        if (can_stage) {
          cp.kind = DecisionKind::ChunkFetched;
          cp.fetch_cost = remote_->transfer_cost(n_blocks);
          d.demand += n_blocks;
          cp.raw_recompute =
              policy_recompute_spans(cfg_.policy, raw_len, bs, span.pad_prefix, true,
                                     mix_seed(cfg_.seed, cid.hi ^ cid.lo, id));
        } else {
          cp.kind = DecisionKind::Recompute;
          d.demand += n_blocks;
          cp.raw_recompute = {TokenSpan{0, raw_len}};
        }
      }
      in_request.insert(cid);
      d.chunk_spans.push_back(std::move(cp));

      for (std::uint32_t b = 0; b < n_blocks; ++b)
        chain = chain_hash(chain, span_tokens.subspan(static_cast<std::size_t>(b) * bs, bs));
    } else {
      PromptSpanPlan pp;
      pp.span_index = si;
      for (std::size_t bb = pb; bb < pe; bb += bs) {
        const std::size_t be = std::min<std::size_t>(bb + bs, pe);
        if (be - bb == bs) {
          const auto block_tokens = std::span<const Token>(padded).subspan(bb, bs);
          chain = chain_hash(chain, block_tokens);
          pp.keys.push_back(chain);
          ++d.prefix_lookups;
          if (const PrefixEntry* e = peek_index(chain, block_tokens, nullptr)) {
            pp.sources.push_back(0);
            pp.hit_blocks.push_back(e->block);
            ++d.prefix_hits;
          } else {
            pp.sources.push_back(1);
            pp.hit_blocks.push_back(kInvalidBlock);
            d.demand += 1;
          }
        } else {
          // Partial tail of the final prompt: never indexed, never shared.
          pp.keys.push_back(PrefixKey{});
          pp.sources.push_back(2);
          pp.hit_blocks.push_back(kInvalidBlock);
          d.demand += 1;
        }
      }
      d.prompt_spans.push_back(std::move(pp));
    }
  }
  return d;
}

std::uint64_t Engine::estimate_demand(const std::vector<Segment>& segments) const {
  return plan_request(0, segments).demand;
}

AdmissionOutcome Engine::schedule(RequestId id, const std::vector<Segment>& segments, Tick now) {
  if (active_.count(id)) raise(ErrorCode::ConfigError, "request " + std::to_string(id) + " is already active");

  Draft draft = plan_request(id, segments);

  // Admission check against free plus reclaimable capacity. Chunks this plan
  // itself references must not be counted as eviction fodder.
  std::uint64_t available = pool_.free_count() + chunks_.evictable_blocks_excluding(draft.resident_refs);
  std::set<BlockId> plan_hits;
  for (const auto& cp : draft.chunk_spans)
    if (cp.head_hit) plan_hits.insert(cp.head_hit_block);
  for (const auto& pp : draft.prompt_spans)
    for (const BlockId b : pp.hit_blocks)
      if (b != kInvalidBlock) plan_hits.insert(b);
  if (cfg_.retain_zero_ref_prefix) {
    for (const PrefixKey& key : prefix_.zero_ref_keys(pool_))
      if (!plan_hits.count(prefix_.entries().at(key).block)) ++available;
  }
  if (draft.demand > available) {
    AdmissionOutcome out;
    out.admitted = false;
    out.reason = "InsufficientEvenAfterEviction";
    ++counters_.rejected;
    return out;
  }

  PlacementPlan plan = commit(id, std::move(draft), now);
  ++counters_.scheduled;
  AdmissionOutcome out;
  out.admitted = true;
  out.plan = std::move(plan);
  return out;
}

PlacementPlan Engine::commit(RequestId id, Draft&& draft, Tick now) {
  const std::uint32_t bs = pool_.block_size();
  ReleaseRecord rec;

  // Pin every resident chunk the plan uses before evicting, so eviction
  // cannot select them.
  for (const ChunkId& cid : draft.resident_refs) {
    chunks_.acquire(cid, now);
    rec.chunks_held.push_back(cid);
  }

  if (draft.demand > pool_.free_count()) {
    const std::uint64_t needed = draft.demand - pool_.free_count();
    const std::uint64_t freed = chunks_.evict_until(needed, now);
    if (freed < needed && cfg_.retain_zero_ref_prefix) {
      std::set<BlockId> plan_hits;
      for (const auto& cp : draft.chunk_spans)
        if (cp.head_hit) plan_hits.insert(cp.head_hit_block);
      for (const auto& pp : draft.prompt_spans)
        for (const BlockId b : pp.hit_blocks)
          if (b != kInvalidBlock) plan_hits.insert(b);
      std::uint64_t still = needed - freed;
      for (const PrefixKey& key : prefix_.zero_ref_keys(pool_)) {
        if (still == 0) break;
        const BlockId b = prefix_.entries().at(key).block;
        if (plan_hits.count(b)) continue;
        prefix_.erase(key);
        reclaim_prefix_block(b);
        --still;
      }
    }
  }

  PlacementPlan plan;
  plan.request = id;
  plan.layout = std::move(draft.layout);
  const TokenSeq& padded = plan.layout.padded_tokens;
  plan.block_map.assign(padded.size(), BlockSlot{});

  auto map_block = [&](std::size_t block_begin, std::size_t block_end, BlockId b) {
    for (std::size_t pos = block_begin; pos < block_end; ++pos)
      plan.block_map[pos] = BlockSlot{b, static_cast<std::uint32_t>(pos - block_begin)};
  };
  auto add_span = [&](std::size_t begin, std::size_t end) {
    if (begin < end) plan.recompute_spans.push_back(TokenSpan{begin, end});
  };

  auto chunk_it = draft.chunk_spans.begin();
  auto prompt_it = draft.prompt_spans.begin();

  for (std::size_t si = 0; si < plan.layout.spans.size(); ++si) {
    const SpanInfo& span = plan.layout.spans[si];
    const std::size_t pb = span.padded_begin;
    const std::size_t pe = span.padded_end;

    if (span.kind == SegmentKind::Chunk) {
      ChunkSpanPlan& cp = *chunk_it++;
      const auto span_tokens = std::span<const Token>(padded).subspan(pb, pe - pb);
      const auto block0_tokens = span_tokens.subspan(0, bs);
      ++counters_.chunk_refs;
      if (cp.eligible) ++counters_.chunk_eligible_refs;

      SegmentDecision dec;
      dec.span_index = si;
      dec.kind = cp.kind;
      dec.chunk = cp.id;
      dec.fetch_cost = cp.fetch_cost;

      auto install_head = [&](const std::vector<BlockId>& canonical) {
        // Ordinals 1..k-1 always come from the canonical entry; the first
        // block is the context-corrected head.
        for (std::uint32_t b = 1; b < cp.n_blocks; ++b)
          map_block(pb + static_cast<std::size_t>(b) * bs, pb + static_cast<std::size_t>(b + 1) * bs, canonical[b]);
        if (cp.head_hit) {
          dec.head_block = cp.head_hit_block;
          // Alias hits resolve to the chunk's own canonical block 0, whose
          // lifetime the acquire above already covers; real prefix blocks
          // take a reference.
          if (pool_.owner(cp.head_hit_block).kind == OwnerKind::Prefix) {
            pool_.incref(cp.head_hit_block);
            rec.prefix_refs.push_back(cp.head_hit_block);
          }
          prefix_.lookup(cp.head_key, block0_tokens, now);  // bump recency
        } else {
          const BlockId hb = pool_.allocate(1)[0];
          prefix_.register_chunk_head(pool_, cp.head_parent, block0_tokens, hb, now);
          rec.prefix_refs.push_back(hb);
          dec.head_block = hb;
          dec.head_recomputed = true;
          add_span(pb, pb + bs);
        }
        map_block(pb, pb + bs, dec.head_block);
      };

      switch (cp.kind) {
        case DecisionKind::ChunkNew: {
          std::vector<BlockId> blocks = pool_.allocate(cp.n_blocks);
          chunks_.register_chunk(cp.id, TokenSeq(span_tokens.begin(), span_tokens.end()), blocks, now);
          rec.chunks_held.push_back(cp.id);
          prefix_.register_head_alias(cp.head_parent, block0_tokens, blocks[0], cp.id, now);
          for (std::uint32_t b = 0; b < cp.n_blocks; ++b)
            map_block(pb + static_cast<std::size_t>(b) * bs, pb + static_cast<std::size_t>(b + 1) * bs, blocks[b]);
          dec.blocks = std::move(blocks);
          dec.head_block = dec.blocks[0];
          add_span(pb, pe);
          break;
        }
        case DecisionKind::ChunkShared: {
          const ChunkEntry* entry = chunks_.find(cp.id);
          install_head(entry->blocks);
          dec.blocks = entry->blocks;
          plan.cost.shared_blocks += cp.n_blocks - 1 + (cp.head_hit ? 1 : 0);
          break;
        }
        case DecisionKind::ChunkFetched: {
          if (cp.instance_id != ChunkId{}) {
            // Private restage: a baseline copies the persisted KV into its
            // own blocks and recomputes its policy's token selection.
            std::vector<BlockId> blocks = pool_.allocate(cp.n_blocks);
            for (std::uint32_t b = 0; b < cp.n_blocks; ++b)
              pool_.tag_chunk(blocks[b], cp.instance_id, b);
            if (pages_ != nullptr) {
              const RemoteChunkRecord rc = *remote_->get(cp.id);
              for (std::uint32_t b = 0; b < cp.n_blocks && rc.payload_present; ++b)
                pages_->ensure(blocks[b]) = rc.pages[b];
            }
            for (std::uint32_t b = 0; b < cp.n_blocks; ++b) {
              map_block(pb + static_cast<std::size_t>(b) * bs, pb + static_cast<std::size_t>(b + 1) * bs, blocks[b]);
              rec.instance_blocks.push_back(blocks[b]);
            }
            dec.blocks = std::move(blocks);
            for (const TokenSpan& rs : cp.raw_recompute)
              add_span(pb + span.pad_prefix + rs.begin, pb + span.pad_prefix + rs.end);
          } else {
            const FetchResult fetched = chunks_.fetch_remote(cp.id, now);
            rec.chunks_held.push_back(cp.id);
            install_head(fetched.entry->blocks);
            dec.blocks = fetched.entry->blocks;
          }
          ++counters_.remote_fetches;
          plan.cost.fetched_blocks += cp.n_blocks;
          plan.fetch_ticks += cp.fetch_cost;
          break;
        }
        case DecisionKind::Recompute: {
          std::vector<BlockId> blocks = pool_.allocate(cp.n_blocks);
          for (std::uint32_t b = 0; b < cp.n_blocks; ++b) {
            pool_.tag_chunk(blocks[b], cp.instance_id, b);
            map_block(pb + static_cast<std::size_t>(b) * bs, pb + static_cast<std::size_t>(b + 1) * bs, blocks[b]);
            rec.instance_blocks.push_back(blocks[b]);
          }
          dec.blocks = std::move(blocks);
          add_span(pb, pe);
          break;
        }
        case DecisionKind::PrefixHit:
          break;
      }
      plan.decisions.push_back(std::move(dec));
      note_seen(cp.id);
    } else {
      PromptSpanPlan& pp = *prompt_it++;
      SegmentDecision dec;
      dec.span_index = si;
      dec.kind = DecisionKind::PrefixHit;
      std::size_t block_idx = 0;
      for (std::size_t bb = pb; bb < pe; bb += bs, ++block_idx) {
        const std::size_t be = std::min<std::size_t>(bb + bs, pe);
        const int source = pp.sources[block_idx];
        if (source == 0) {
          const BlockId b = pp.hit_blocks[block_idx];
          if (pool_.owner(b).kind == OwnerKind::Prefix) {
            pool_.incref(b);
            rec.prefix_refs.push_back(b);
          }
          prefix_.lookup(pp.keys[block_idx], std::span<const Token>(padded).subspan(bb, bs), now);
          dec.blocks.push_back(b);
          map_block(bb, be, b);
          plan.cost.shared_blocks += 1;
        } else if (source == 1) {
          dec.kind = DecisionKind::Recompute;
          const BlockId nb = pool_.allocate(1)[0];
          // Full prompt blocks register under their chain key so identical
          // concurrent requests can share them.
          const auto block_tokens = std::span<const Token>(padded).subspan(bb, bs);
          prefix_.register_under_key(pool_, pp.keys[block_idx], block_tokens, nb, now);
          rec.prefix_refs.push_back(nb);
          dec.blocks.push_back(nb);
          map_block(bb, be, nb);
          add_span(bb, be);
        } else {
          dec.kind = DecisionKind::Recompute;
          const BlockId nb = pool_.allocate(1)[0];
          pool_.tag_prefix(nb, private_block_key(id, bb / bs));
          rec.private_blocks.push_back(nb);
          dec.blocks.push_back(nb);
          map_block(bb, be, nb);
          add_span(bb, be);
        }
      }
      plan.decisions.push_back(std::move(dec));
    }
  }

  // Cost ledger: raw positions written, plus block bookkeeping.
  for (const TokenSpan& s : plan.recompute_spans)
    for (std::size_t pos = s.begin; pos < s.end; ++pos)
      if (padded[pos] != kPadToken) ++plan.cost.recomputed_tokens;
  plan.cost.new_blocks = draft.demand;

  counters_.prefix_block_lookups += draft.prefix_lookups;
  counters_.prefix_block_hits += draft.prefix_hits;
  for (const auto& cp : draft.chunk_spans)
    if (cp.resident_hit) ++counters_.chunk_resident_hits;

  // Materialize payload bytes for everything this request computes.
  if (pages_ != nullptr) {
    std::vector<KvPage*> request_pages(plan.layout.total_blocks(), nullptr);
    for (std::size_t b = 0; b < request_pages.size(); ++b) {
      const BlockId blk = plan.block_map[b * bs].block;
      request_pages[b] = &pages_->ensure(blk);
    }
    materialize_segment(*layer_, plan.layout.padded_tokens, plan.recompute_spans, request_pages, bs);
  }

  // Baselines persist a chunk's full KV at first computation so later
  // requests can restage it from the remote tier.
  if (sharing_semantics(cfg_.policy) == SharingSemantics::PrivatePerRequest &&
      cfg_.policy.kind != PolicyKind::FullRecompute && remote_ != nullptr) {
    for (const ChunkSpanPlan& cp : draft.chunk_spans) {
      if (cp.kind != DecisionKind::Recompute || cp.instance_id == ChunkId{}) continue;
      if (remote_->contains(cp.id)) continue;
      const SpanInfo& cspan = plan.layout.spans[cp.span_index];
      RemoteChunkRecord rc;
      rc.id = cp.id;
      rc.block_size = bs;
      rc.k = cp.n_blocks;
      rc.padded_tokens.assign(padded.begin() + static_cast<std::ptrdiff_t>(cspan.padded_begin),
                              padded.begin() + static_cast<std::ptrdiff_t>(cspan.padded_end));
      if (pages_ != nullptr) {
        rc.payload_present = true;
        rc.d_head = pages_->geometry().d_head;
        for (std::uint32_t b = 0; b < cp.n_blocks; ++b)
          rc.pages.push_back(
              pages_->ensure(plan.block_map[cspan.padded_begin + static_cast<std::size_t>(b) * bs].block));
      }
      remote_->put(rc);
    }
  }

  active_.emplace(id, std::move(rec));
  return plan;
}

void Engine::reclaim_prefix_block(BlockId b) {
  prefix_.erase_block(b);
  if (pages_ != nullptr) pages_->erase(b);
  pool_.reclaim(b);
}

void Engine::release(RequestId id, Tick now) {
  auto it = active_.find(id);
  if (it == active_.end())
    raise(ErrorCode::DoubleRelease, "request " + std::to_string(id) + " is not active");
  ReleaseRecord rec = std::move(it->second);
  active_.erase(it);

  for (const ChunkId& cid : rec.chunks_held) chunks_.release(cid, now);
  for (const BlockId b : rec.prefix_refs) {
    const std::uint32_t rc = pool_.decref(b);
    if (rc == 0 && !cfg_.retain_zero_ref_prefix) reclaim_prefix_block(b);
  }
  for (const BlockId b : rec.private_blocks) {
    pool_.decref(b);
    if (pages_ != nullptr) pages_->erase(b);
    pool_.reclaim(b);
  }
  for (const BlockId b : rec.instance_blocks) {
    pool_.decref(b);
    if (pages_ != nullptr) pages_->erase(b);
    pool_.reclaim(b);
  }
}

bool Engine::check_consistency(std::string* why) const {
  if (!pool_.check_consistency(why)) return false;
  if (!chunks_.check_consistency(why)) return false;
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  for (const auto& [key, entry] : prefix_.entries()) {
    const Owner& o = pool_.owner(entry.block);
    if (entry.chunk_alias) {
      if (o.kind != OwnerKind::Chunk || o.key != entry.alias_chunk || o.ordinal != 0)
        return fail("head alias points at a non-canonical block");
    } else {
      if (o.kind != OwnerKind::Prefix) return fail("indexed prefix block with wrong owner");
      if (o.key != key) return fail("indexed prefix block tagged with a different key");
    }
  }
  return true;
}

}  // namespace mepic
