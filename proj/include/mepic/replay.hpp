#pragma once

#include <string>
#include <vector>

#include "mepic/scheduler.hpp"
#include "mepic/trace.hpp"

namespace mepic {

struct TickSample {
  Tick tick = 0;
  std::uint64_t blocks_used = 0;  // capacity - free
  std::uint64_t free_blocks = 0;
  std::uint64_t prefix_blocks = 0;
  std::uint64_t chunk_blocks = 0;
  std::uint64_t evictable_blocks = 0;
  std::uint64_t active_requests = 0;
};

struct RequestLatency {
  RequestId request = 0;
  Tick queue = 0;
  Tick prefill = 0;
  Tick fetch = 0;
  Tick decode = 0;

  Tick total() const { return queue + prefill + fetch + decode; }
};

struct MetricsReport {
  std::string policy;
  std::uint64_t requests = 0;
  std::uint64_t admitted = 0;
  std::uint64_t rejections = 0;  // rejected schedule attempts
  std::uint64_t dropped = 0;     // gave up after the retry window
  std::uint64_t peak_blocks_used = 0;
  double mean_blocks_used = 0.0;
  std::uint64_t peak_active_requests = 0;
  std::uint64_t peak_chunk_blocks = 0;
  std::uint64_t peak_prefix_blocks = 0;
  double chunk_hit_rate = 0.0;   // resident hits over re-references
  double prefix_hit_rate = 0.0;  // block-level chain hits over lookups
  std::uint64_t total_recomputed_tokens = 0;
  std::uint64_t remote_fetch_blocks = 0;
  double mean_queue_ticks = 0.0;
  double mean_prefill_ticks = 0.0;
  double mean_fetch_ticks = 0.0;
  double mean_decode_ticks = 0.0;
  double mean_latency_ticks = 0.0;
  std::uint64_t peak_hbm_bytes = 0;
  Tick end_tick = 0;
  std::vector<TickSample> series;
  std::vector<RequestLatency> request_latencies;  // admission order
};

struct ReplayConfig {
  EngineConfig engine;
  Tick retry_limit_ticks = 100;  // rejected requests retry, then count dropped
};

// Drives the engine tick by tick: releases due this tick, then arrivals and
// retries in request order, then a metrics sample. Deterministic for fixed
// inputs.
MetricsReport replay(const Trace& trace, const ReplayConfig& config);

struct ComparisonResult {
  std::vector<MetricsReport> reports;  // one per policy, same trace and config
};

ComparisonResult compare(const Trace& trace, const std::vector<Policy>& policies, const ReplayConfig& base);

// Fixed-column CSV emitters; byte-stable across runs.
std::string timeseries_csv(const MetricsReport& report);
std::string summary_csv(const std::vector<MetricsReport>& reports);
std::string report_fingerprint(const MetricsReport& report);  // full serialization for determinism checks

void write_file(const std::string& path, const std::string& content);

}  // namespace mepic
