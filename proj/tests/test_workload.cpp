#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "mepic/replay.hpp"
#include "mepic/workload.hpp"

using namespace mepic;

namespace {

ReplayConfig replay_config(PolicyKind kind, std::uint32_t capacity) {
  ReplayConfig cfg;
  cfg.engine.pool = PoolConfig{capacity, 16};
  cfg.engine.policy.kind = kind;
  cfg.engine.seed = 11;
  return cfg;
}

Trace two_request_trace(Tick second_arrival) {
  Trace trace;
  trace.block_size = 16;
  TokenSeq doc(32);
  for (std::size_t i = 0; i < doc.size(); ++i) doc[i] = static_cast<Token>(100 + i);
  trace.chunk_table.emplace("c0", doc);
  trace.requests.push_back(TraceRequest{0, 0, 5, {TraceSegment{SegmentKind::Chunk, "c0", {}}}});
  trace.requests.push_back(TraceRequest{1, second_arrival, 5, {TraceSegment{SegmentKind::Chunk, "c0", {}}}});
  return trace;
}

}  // namespace

TEST_CASE("generation is deterministic per seed") {
  const WorkloadSpec spec = *preset_spec("squad-like", 7);
  CHECK(trace_to_string(generate(spec)) == trace_to_string(generate(spec)));

  WorkloadSpec other = spec;
  other.seed = 8;
  CHECK(trace_to_string(generate(spec)) != trace_to_string(generate(other)));
}

TEST_CASE("presets land within five points of their reuse targets") {
  const struct {
    const char* name;
    double target;
    std::size_t mean_tokens;
  } rows[] = {
      {"newsqa-like", 0.614, 1518},
      {"squad-like", 0.849, 2224},
      {"narrativeqa-like", 0.939, 1435},
      {"emrqa-like", 0.982, 1632},
  };
  for (const auto& row : rows) {
    CAPTURE(row.name);
    const auto spec = preset_spec(row.name, 3);
    REQUIRE(spec.has_value());
    const Trace trace = generate(*spec);
    const double reuse = measured_mean_reuse(trace);
    CHECK(reuse >= row.target - 0.05);
    CHECK(reuse <= 1.0);
    // Request length matches the profile.
    std::size_t total = 0;
    for (const auto& req : trace.requests) {
      for (const auto& seg : req.segments)
        total += seg.kind == SegmentKind::Chunk ? trace.chunk_table.at(seg.chunk_ref).size() : seg.tokens.size();
    }
    const double mean_tokens = static_cast<double>(total) / static_cast<double>(trace.requests.size());
    CHECK(mean_tokens == doctest::Approx(static_cast<double>(row.mean_tokens)).epsilon(0.02));
  }
  CHECK_FALSE(preset_spec("nonsense", 1).has_value());
}

TEST_CASE("zipf skew concentrates references on the head chunks") {
  WorkloadSpec spec;
  spec.n_requests = 400;
  spec.n_distinct_chunks = 12;
  spec.chunks_per_request = 1;
  spec.chunk_tokens = 32;
  spec.prompt_tokens = 4;
  spec.seed = 13;
  spec.zipf_s = 2.0;
  const Trace skewed = generate(spec);
  std::map<std::string, int> counts;
  for (const auto& req : skewed.requests)
    for (const auto& seg : req.segments)
      if (seg.kind == SegmentKind::Chunk) ++counts[seg.chunk_ref];
  CHECK(counts["c0"] > counts["c5"]);
  CHECK(counts["c0"] > spec.n_requests / 3);  // heavy head under s = 2
}

TEST_CASE("trace text roundtrip and validation") {
  const Trace trace = generate(*preset_spec("emrqa-like", 5));
  const std::string text = trace_to_string(trace);
  const Trace back = trace_from_string(text);
  CHECK(trace_to_string(back) == text);

  const std::string path = (std::filesystem::temp_directory_path() / "mepic_trace_test.trace").string();
  write_trace(trace, path);
  CHECK(trace_to_string(read_trace(path)) == text);
  std::remove(path.c_str());

  auto code_of = [](const std::string& s) {
    try {
      trace_from_string(s);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  CHECK(code_of("") == ErrorCode::TraceFormatError);
  CHECK(code_of("MEPIC_TRACE 9\nblock_size 16\n") == ErrorCode::TraceFormatError);
  CHECK(code_of("MEPIC_TRACE 1\nblock_size 16\nreq 0 0 1 c:nope\n") == ErrorCode::TraceFormatError);
  CHECK(code_of("MEPIC_TRACE 1\nblock_size 16\nchunk c0 1 2\nreq 0 5 1 c:c0\nreq 1 4 1 c:c0\n") ==
        ErrorCode::TraceFormatError);  // arrivals must be nondecreasing
  CHECK(code_of("MEPIC_TRACE 1\nblock_size 16\nchunk c0 1 2\nreq 0 1 1 c:c0\nreq 0 2 1 c:c0\n") ==
        ErrorCode::TraceFormatError);  // duplicate request id
  CHECK(code_of("MEPIC_TRACE 1\nblock_size 16\nchunk c0 0 2\n") == ErrorCode::TraceFormatError);  // pad id
}

TEST_CASE("single cold request: peak equals its block demand, hit rates zero") {
  Trace trace;
  trace.block_size = 16;
  TokenSeq doc(48);
  for (std::size_t i = 0; i < doc.size(); ++i) doc[i] = static_cast<Token>(10 + i);
  trace.chunk_table.emplace("c0", doc);
  TraceRequest req{0, 0, 5, {TraceSegment{SegmentKind::Chunk, "c0", {}}, TraceSegment{SegmentKind::Prompt, "", {7, 8, 9}}}};
  trace.requests.push_back(req);

  for (const PolicyKind kind : {PolicyKind::Mepic, PolicyKind::EpicLike, PolicyKind::Naive}) {
    const MetricsReport report = replay(trace, replay_config(kind, 64));
    CHECK(report.admitted == 1);
    CHECK(report.peak_blocks_used == 4);  // 3 chunk blocks + 1 prompt block
    CHECK(report.chunk_hit_rate == 0.0);
    CHECK(report.prefix_hit_rate == 0.0);
  }
}

TEST_CASE("back-to-back identical requests recompute only the head block") {
  const MetricsReport report = replay(two_request_trace(100), replay_config(PolicyKind::Mepic, 64));
  CHECK(report.admitted == 2);
  // Cold request computes 32 raw tokens, the repeat only the 16-token head.
  CHECK(report.total_recomputed_tokens == 32 + 16);
  CHECK(report.chunk_hit_rate == 1.0);
}

TEST_CASE("replay reports are byte-stable") {
  const Trace trace = generate(*preset_spec("emrqa-like", 9));
  const MetricsReport a = replay(trace, replay_config(PolicyKind::Mepic, 2048));
  const MetricsReport b = replay(trace, replay_config(PolicyKind::Mepic, 2048));
  CHECK(report_fingerprint(a) == report_fingerprint(b));
}

TEST_CASE("block accounting matches pool stats at every tick") {
  const Trace trace = generate(*preset_spec("narrativeqa-like", 4));
  const MetricsReport report = replay(trace, replay_config(PolicyKind::Mepic, 4096));
  CHECK(report.rejections == 0);
  for (const TickSample& s : report.series) {
    CHECK(s.blocks_used == 4096 - s.free_blocks);
    CHECK(s.free_blocks + s.prefix_blocks + s.chunk_blocks == 4096);
    CHECK(s.evictable_blocks <= s.chunk_blocks);
  }
  CHECK(static_cast<double>(report.peak_blocks_used) >= report.mean_blocks_used);
}

TEST_CASE("raising qps never lowers the peak for private policies") {
  for (const double qps : {0.05, 0.2, 1.0}) {
    WorkloadSpec lo = *preset_spec("newsqa-like", 21);
    lo.n_requests = 60;
    lo.qps = qps;
    WorkloadSpec hi = lo;
    hi.qps = qps * 2;
    const MetricsReport r_lo = replay(generate(lo), replay_config(PolicyKind::EpicLike, 1 << 14));
    const MetricsReport r_hi = replay(generate(hi), replay_config(PolicyKind::EpicLike, 1 << 14));
    CHECK(r_lo.rejections == 0);
    CHECK(r_hi.rejections == 0);
    CHECK(r_hi.peak_blocks_used >= r_lo.peak_blocks_used);
  }
}

TEST_CASE("reuse ceiling: resident re-references give a unit hit rate") {
  WorkloadSpec spec;
  spec.n_requests = 40;
  spec.n_distinct_chunks = 4;
  spec.chunks_per_request = 2;
  spec.chunk_tokens = 64;
  spec.prompt_tokens = 8;
  spec.qps = 0.5;
  spec.seed = 17;
  const MetricsReport report = replay(generate(spec), replay_config(PolicyKind::Mepic, 4096));
  CHECK(report.rejections == 0);
  // Pool is big enough that nothing is ever evicted, so every re-reference
  // happens while resident.
  CHECK(report.chunk_hit_rate == 1.0);
}

TEST_CASE("naive and full recompute need the same blocks but differ in compute") {
  Trace trace;
  trace.block_size = 16;
  TokenSeq doc(120);
  for (std::size_t i = 0; i < doc.size(); ++i) doc[i] = static_cast<Token>(10 + i);
  trace.chunk_table.emplace("c0", doc);
  for (RequestId r = 0; r < 5; ++r)
    trace.requests.push_back(TraceRequest{r, r * 200, 5, {TraceSegment{SegmentKind::Chunk, "c0", {}}}});

  const MetricsReport naive = replay(trace, replay_config(PolicyKind::Naive, 256));
  const MetricsReport full = replay(trace, replay_config(PolicyKind::FullRecompute, 256));
  CHECK(naive.peak_blocks_used == full.peak_blocks_used);
  CHECK(naive.total_recomputed_tokens == 120);      // cold pass only
  CHECK(full.total_recomputed_tokens == 5 * 120);   // every request

  // Recompute ordering across policies for chunks past the crossover length.
  const MetricsReport epic = replay(trace, replay_config(PolicyKind::EpicLike, 256));
  const MetricsReport blend = replay(trace, replay_config(PolicyKind::CacheBlendLike, 256));
  CHECK(naive.total_recomputed_tokens < epic.total_recomputed_tokens);
  CHECK(epic.total_recomputed_tokens <= blend.total_recomputed_tokens);
  CHECK(blend.total_recomputed_tokens <= full.total_recomputed_tokens);
}

TEST_CASE("comparison emits one report per policy with ratio columns") {
  const Trace trace = generate(*preset_spec("emrqa-like", 2));
  ReplayConfig base = replay_config(PolicyKind::Mepic, 4096);
  const ComparisonResult result = compare(
      trace, {Policy{PolicyKind::Mepic, 0.15, 16}, Policy{PolicyKind::EpicLike, 0.15, 16}}, base);
  REQUIRE(result.reports.size() == 2);
  const std::string csv = summary_csv(result.reports);
  CHECK(csv.find("peak_ratio_vs_mepic") != std::string::npos);
  CHECK(csv.find("mepic") != std::string::npos);
  CHECK(csv.find("epic") != std::string::npos);
}

TEST_CASE("retry window drops requests that never fit") {
  Trace trace;
  trace.block_size = 16;
  TokenSeq doc(256);  // 16 blocks > 8-block pool
  for (std::size_t i = 0; i < doc.size(); ++i) doc[i] = static_cast<Token>(10 + i);
  trace.chunk_table.emplace("c0", doc);
  trace.requests.push_back(TraceRequest{0, 0, 5, {TraceSegment{SegmentKind::Chunk, "c0", {}}}});

  ReplayConfig cfg = replay_config(PolicyKind::Mepic, 8);
  cfg.retry_limit_ticks = 10;
  const MetricsReport report = replay(trace, cfg);
  CHECK(report.admitted == 0);
  CHECK(report.dropped == 1);
  CHECK(report.rejections >= 1);
}
