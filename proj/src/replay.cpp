#include "mepic/replay.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <map>
#include <sstream>

#include "mepic/errors.hpp"

namespace mepic {
namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return std::string(buf);
}

struct PendingRequest {
  std::size_t index;
  Tick first_arrival;
};

}  // namespace

MetricsReport replay(const Trace& trace, const ReplayConfig& config) {
  EngineConfig ecfg = config.engine;
  ecfg.pool.block_size = trace.block_size;
  Engine engine(ecfg);

  MetricsReport report;
  report.policy = policy_name(ecfg.policy.kind);
  report.requests = trace.requests.size();

  std::deque<PendingRequest> pending;
  std::map<Tick, std::vector<RequestId>> due;  // release schedule
  std::size_t next_arrival = 0;
  std::size_t completed = 0;
  std::size_t in_flight = 0;

  const double prefill_per_token = ecfg.cost_model.prefill_ticks_per_token;
  std::uint64_t blocks_sum = 0;

  Tick t = 0;
  while (completed + report.dropped < trace.requests.size() || !due.empty()) {
    // 1. Releases due this tick, in request order.
    if (auto it = due.find(t); it != due.end()) {
      for (RequestId id : it->second) {
        engine.release(id, t);
        ++completed;
        --in_flight;
      }
      due.erase(it);
    }

    // 2. New arrivals join the queue.
    while (next_arrival < trace.requests.size() && trace.requests[next_arrival].arrival_tick <= t) {
      pending.push_back(PendingRequest{next_arrival, trace.requests[next_arrival].arrival_tick});
      ++next_arrival;
    }

    // 3. Schedule attempts in queue order; rejected requests retry next tick
    //    until the retry window closes.
    std::deque<PendingRequest> still_waiting;
    while (!pending.empty()) {
      const PendingRequest pr = pending.front();
      pending.pop_front();
      const TraceRequest& req = trace.requests[pr.index];
      const AdmissionOutcome outcome = engine.schedule(req.id, trace.request_segments(req), t);
      if (outcome.admitted) {
        const Tick prefill = static_cast<Tick>(
            std::ceil(prefill_per_token * static_cast<double>(outcome.plan.cost.recomputed_tokens)));
        const Tick fetch = outcome.plan.fetch_ticks;
        const Tick hold = req.decode_hold_ticks;
        const Tick lifetime = std::max<Tick>(1, prefill + fetch + hold);
        due[t + lifetime].push_back(req.id);
        ++in_flight;
        ++report.admitted;
        report.total_recomputed_tokens += outcome.plan.cost.recomputed_tokens;
        report.remote_fetch_blocks += outcome.plan.cost.fetched_blocks;
        report.request_latencies.push_back(RequestLatency{req.id, t - pr.first_arrival, prefill, fetch, hold});
      } else {
        ++report.rejections;
        if (t - pr.first_arrival >= config.retry_limit_ticks) {
          ++report.dropped;
        } else {
          still_waiting.push_back(pr);
        }
      }
    }
    pending = std::move(still_waiting);

    // 4. Sample the pool.
    const PoolStats stats = engine.pool().stats();
    TickSample sample;
    sample.tick = t;
    sample.blocks_used = engine.pool().capacity() - stats.free;
    sample.free_blocks = stats.free;
    sample.prefix_blocks = stats.prefix_owned;
    sample.chunk_blocks = stats.chunk_owned;
    sample.evictable_blocks = stats.evictable;
    sample.active_requests = in_flight;
    report.series.push_back(sample);
    report.peak_blocks_used = std::max(report.peak_blocks_used, sample.blocks_used);
    report.peak_active_requests = std::max(report.peak_active_requests, sample.active_requests);
    report.peak_chunk_blocks = std::max(report.peak_chunk_blocks, sample.chunk_blocks);
    report.peak_prefix_blocks = std::max(report.peak_prefix_blocks, sample.prefix_blocks);
    blocks_sum += sample.blocks_used;

    ++t;
    if (t > (1ull << 32)) raise(ErrorCode::ConfigError, "replay did not terminate");
  }

  report.end_tick = t == 0 ? 0 : t - 1;
  if (!report.series.empty())
    report.mean_blocks_used = static_cast<double>(blocks_sum) / static_cast<double>(report.series.size());

  const Engine::Counters& counters = engine.counters();
  if (counters.prefix_block_lookups > 0)
    report.prefix_hit_rate =
        static_cast<double>(counters.prefix_block_hits) / static_cast<double>(counters.prefix_block_lookups);
  std::uint64_t chunk_hits = counters.chunk_resident_hits;
  if (sharing_semantics(ecfg.policy) == SharingSemantics::PrivatePerRequest)
    chunk_hits = counters.remote_fetches;  // staged restage counts as the reuse event
  if (counters.chunk_eligible_refs > 0)
    report.chunk_hit_rate = static_cast<double>(chunk_hits) / static_cast<double>(counters.chunk_eligible_refs);

  double q = 0, p = 0, f = 0, d = 0, l = 0;
  for (const RequestLatency& row : report.request_latencies) {
    q += static_cast<double>(row.queue);
    p += static_cast<double>(row.prefill);
    f += static_cast<double>(row.fetch);
    d += static_cast<double>(row.decode);
    l += static_cast<double>(row.total());
  }
  if (!report.request_latencies.empty()) {
    const double n = static_cast<double>(report.request_latencies.size());
    report.mean_queue_ticks = q / n;
    report.mean_prefill_ticks = p / n;
    report.mean_fetch_ticks = f / n;
    report.mean_decode_ticks = d / n;
    report.mean_latency_ticks = l / n;
  }
  report.peak_hbm_bytes = report.peak_blocks_used * ecfg.cost_model.block_bytes;
  return report;
}

ComparisonResult compare(const Trace& trace, const std::vector<Policy>& policies, const ReplayConfig& base) {
  if (policies.size() < 2) raise(ErrorCode::ConfigError, "compare needs at least two policies");
  ComparisonResult result;
  for (const Policy& policy : policies) {
    ReplayConfig cfg = base;
    cfg.engine.policy = policy;
    result.reports.push_back(replay(trace, cfg));
  }
  return result;
}

std::string timeseries_csv(const MetricsReport& report) {
  std::ostringstream out;
  out << "tick,blocks_used,free_blocks,prefix_blocks,chunk_blocks,evictable_blocks,active_requests\n";
  for (const TickSample& s : report.series) {
    out << s.tick << ',' << s.blocks_used << ',' << s.free_blocks << ',' << s.prefix_blocks << ','
        << s.chunk_blocks << ',' << s.evictable_blocks << ',' << s.active_requests << "\n";
  }
  return out.str();
}

std::string summary_csv(const std::vector<MetricsReport>& reports) {
  std::ostringstream out;
  out << "policy,requests,admitted,rejections,dropped,peak_blocks_used,mean_blocks_used,"
         "peak_active_requests,peak_chunk_blocks,peak_prefix_blocks,chunk_hit_rate,prefix_hit_rate,"
         "recomputed_tokens,fetched_blocks,mean_queue_ticks,mean_prefill_ticks,mean_fetch_ticks,"
         "mean_decode_ticks,mean_latency_ticks,peak_hbm_bytes,peak_ratio_vs_mepic,recompute_ratio_vs_mepic\n";
  const MetricsReport* mepic = nullptr;
  for (const MetricsReport& r : reports)
    if (r.policy == policy_name(PolicyKind::Mepic)) mepic = &r;
  for (const MetricsReport& r : reports) {
    out << r.policy << ',' << r.requests << ',' << r.admitted << ',' << r.rejections << ',' << r.dropped << ','
        << r.peak_blocks_used << ',' << fmt_double(r.mean_blocks_used) << ',' << r.peak_active_requests << ','
        << r.peak_chunk_blocks << ',' << r.peak_prefix_blocks << ',' << fmt_double(r.chunk_hit_rate) << ','
        << fmt_double(r.prefix_hit_rate) << ',' << r.total_recomputed_tokens << ',' << r.remote_fetch_blocks << ','
        << fmt_double(r.mean_queue_ticks) << ',' << fmt_double(r.mean_prefill_ticks) << ','
        << fmt_double(r.mean_fetch_ticks) << ',' << fmt_double(r.mean_decode_ticks) << ','
        << fmt_double(r.mean_latency_ticks) << ',' << r.peak_hbm_bytes << ',';
    if (mepic != nullptr && mepic->peak_blocks_used > 0)
      out << fmt_double(static_cast<double>(r.peak_blocks_used) / static_cast<double>(mepic->peak_blocks_used));
    out << ',';
    if (mepic != nullptr && mepic->total_recomputed_tokens > 0)
      out << fmt_double(static_cast<double>(r.total_recomputed_tokens) /
                        static_cast<double>(mepic->total_recomputed_tokens));
    out << "\n";
  }
  return out.str();
}

std::string report_fingerprint(const MetricsReport& report) {
  std::ostringstream out;
  out << summary_csv({report}) << timeseries_csv(report);
  for (const RequestLatency& r : report.request_latencies)
    out << r.request << ':' << r.queue << ':' << r.prefill << ':' << r.fetch << ':' << r.decode << "\n";
  return out.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::IoError, "cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

}  // namespace mepic
