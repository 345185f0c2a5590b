#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mepic/trace.hpp"
#include "mepic/types.hpp"

namespace mepic {

// Synthetic workload shape. Generation is fully deterministic per seed:
// all sampling is hand-rolled on top of mt19937_64, so the same spec and
// seed produce byte-identical traces on any platform.
struct WorkloadSpec {
  std::uint32_t n_requests = 100;
  std::uint32_t n_distinct_chunks = 16;
  std::uint32_t chunks_per_request = 2;
  double zipf_s = 1.0;  // chunk popularity skew, >= 0
  std::uint32_t chunk_tokens = 512;   // tokens per chunk
  std::uint32_t prompt_tokens = 64;   // request-specific tokens per request
  double qps = 1.0;                   // arrivals per tick
  std::uint64_t seed = 0;
  Tick decode_hold_min = 20;
  Tick decode_hold_max = 40;
  std::uint32_t block_size = 16;

  void validate() const;
};

// Presets named after the reuse profiles they imitate: request length and
// reused-token fraction targets, with chunk/prompt splits chosen so the
// realized reuse lands within five percentage points of the target.
std::vector<std::string> preset_names();
std::optional<WorkloadSpec> preset_spec(const std::string& name, std::uint64_t seed);

Trace generate(const WorkloadSpec& spec);

// Mean over requests of the fraction of raw tokens belonging to chunk
// references already seen earlier in the trace.
double measured_mean_reuse(const Trace& trace);

}  // namespace mepic
