#include "mepic/workload.hpp"

#include <cmath>
#include <random>
#include <set>

#include "mepic/errors.hpp"

namespace mepic {

void WorkloadSpec::validate() const {
  if (n_requests == 0 || n_distinct_chunks == 0 || chunks_per_request == 0 || chunk_tokens == 0 ||
      block_size == 0)
    raise(ErrorCode::ConfigError, "workload counts must be positive");
  if (chunks_per_request > n_distinct_chunks)
    raise(ErrorCode::ConfigError, "chunks_per_request exceeds the distinct chunk count");
  if (zipf_s < 0.0) raise(ErrorCode::ConfigError, "zipf skew must be nonnegative");
  if (qps <= 0.0) raise(ErrorCode::ConfigError, "qps must be positive");
  if (decode_hold_max < decode_hold_min) raise(ErrorCode::ConfigError, "decode hold range inverted");
}

std::vector<std::string> preset_names() {
  return {"newsqa-like", "squad-like", "narrativeqa-like", "emrqa-like"};
}

std::optional<WorkloadSpec> preset_spec(const std::string& name, std::uint64_t seed) {
  WorkloadSpec spec;
  spec.n_requests = 300;
  spec.zipf_s = 1.0;
  spec.qps = 0.33;
  spec.decode_hold_min = 30;
  spec.decode_hold_max = 60;
  spec.seed = seed;
  if (name == "newsqa-like") {  // 1518 tokens, 61.4% reuse
    spec.n_distinct_chunks = 16;
    spec.chunks_per_request = 1;
    spec.chunk_tokens = 932;
    spec.prompt_tokens = 586;
  } else if (name == "squad-like") {  // 2224 tokens, 84.9% reuse
    spec.n_distinct_chunks = 10;
    spec.chunks_per_request = 2;
    spec.chunk_tokens = 944;
    spec.prompt_tokens = 336;
  } else if (name == "narrativeqa-like") {  // 1435 tokens, 93.9% reuse
    spec.n_distinct_chunks = 24;
    spec.chunks_per_request = 3;
    spec.chunk_tokens = 449;
    spec.prompt_tokens = 88;
  } else if (name == "emrqa-like") {  // 1632 tokens, 98.2% reuse
    spec.n_distinct_chunks = 6;
    spec.chunks_per_request = 2;
    spec.chunk_tokens = 790;
    spec.prompt_tokens = 52;
  } else {
    return std::nullopt;
  }
  return spec;
}

namespace {

constexpr Token kVocab = 50000;

std::uint64_t rand_below(std::mt19937_64& rng, std::uint64_t n) { return n ? rng() % n : 0; }

double rand_unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Token rand_token(std::mt19937_64& rng) { return static_cast<Token>(1 + rand_below(rng, kVocab)); }

// Weighted sample of `k` distinct indices, popularity ~ 1/(rank+1)^s.
std::vector<std::size_t> sample_chunks(std::mt19937_64& rng, const std::vector<double>& weights, std::size_t k) {
  std::vector<std::size_t> picked;
  std::set<std::size_t> used;
  while (picked.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i)
      if (!used.count(i)) total += weights[i];
    double u = rand_unit(rng) * total;
    std::size_t chosen = weights.size();
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (used.count(i)) continue;
      u -= weights[i];
      if (u <= 0.0) {
        chosen = i;
        break;
      }
    }
    if (chosen == weights.size()) {  // numerical tail: take the last unused
      for (std::size_t i = weights.size(); i-- > 0;)
        if (!used.count(i)) {
          chosen = i;
          break;
        }
    }
    used.insert(chosen);
    picked.push_back(chosen);
  }
  return picked;
}

}  // namespace

Trace generate(const WorkloadSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);

  Trace trace;
  trace.block_size = spec.block_size;

  std::vector<std::string> names(spec.n_distinct_chunks);
  for (std::uint32_t c = 0; c < spec.n_distinct_chunks; ++c) {
    names[c] = "c" + std::to_string(c);
    TokenSeq tokens(spec.chunk_tokens);
    for (Token& t : tokens) t = rand_token(rng);
    trace.chunk_table.emplace(names[c], std::move(tokens));
  }

  std::vector<double> weights(spec.n_distinct_chunks);
  for (std::size_t r = 0; r < weights.size(); ++r)
    weights[r] = 1.0 / std::pow(static_cast<double>(r + 1), spec.zipf_s);

  for (std::uint32_t i = 0; i < spec.n_requests; ++i) {
    TraceRequest req;
    req.id = i;
    req.arrival_tick = static_cast<Tick>(std::floor(static_cast<double>(i) / spec.qps));
    req.decode_hold_ticks =
        spec.decode_hold_min + rand_below(rng, spec.decode_hold_max - spec.decode_hold_min + 1);
    for (std::size_t c : sample_chunks(rng, weights, spec.chunks_per_request))
      req.segments.push_back(TraceSegment{SegmentKind::Chunk, names[c], {}});
    if (spec.prompt_tokens > 0) {
      TraceSegment prompt;
      prompt.kind = SegmentKind::Prompt;
      prompt.tokens.resize(spec.prompt_tokens);
      for (Token& t : prompt.tokens) t = rand_token(rng);
      req.segments.push_back(std::move(prompt));
    }
    trace.requests.push_back(std::move(req));
  }
  return trace;
}

double measured_mean_reuse(const Trace& trace) {
  if (trace.requests.empty()) return 0.0;
  std::set<std::string> seen;
  double sum = 0.0;
  for (const TraceRequest& req : trace.requests) {
    std::size_t total = 0;
    std::size_t reused = 0;
    for (const TraceSegment& seg : req.segments) {
      if (seg.kind == SegmentKind::Chunk) {
        const std::size_t len = trace.chunk_table.at(seg.chunk_ref).size();
        total += len;
        if (seen.count(seg.chunk_ref)) reused += len;
        seen.insert(seg.chunk_ref);
      } else {
        total += seg.tokens.size();
      }
    }
    if (total > 0) sum += static_cast<double>(reused) / static_cast<double>(total);
  }
  return sum / static_cast<double>(trace.requests.size());
}

}  // namespace mepic
