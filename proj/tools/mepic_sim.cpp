// Command-line front end: trace generation, replay, policy comparison, and
// numeric verification of the fused rotary attention path.
//
// Exit codes: 0 success, 1 usage/config error, 2 runtime error,
// 3 verification failure.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>

#include "mepic/replay.hpp"
#include "mepic/rope.hpp"
#include "mepic/workload.hpp"

namespace {

using namespace mepic;

struct CommonRunOptions {
  std::string trace_path;
  std::string out_dir = "mepic_out";
  std::uint32_t capacity = 4096;
  std::uint64_t seed = 0;
  double blend_fraction = 0.15;
  std::uint32_t epic_n = 16;
  std::string remote_policy = "cost_based";
  bool no_remote = false;
  bool retain_prefix = false;
  bool materialize = false;
  std::uint32_t d_head = 64;
  double prefill_ticks_per_token = 0.01;
  double bandwidth = 4.0;
  std::uint64_t latency = 2;
  std::uint64_t block_bytes = 8192;
  std::uint64_t retry_limit = 100;
};

void add_run_options(CLI::App* cmd, CommonRunOptions& opt) {
  cmd->add_option("--trace", opt.trace_path, "trace file to replay")->required();
  cmd->add_option("-o,--out-dir", opt.out_dir, "directory for metrics CSVs");
  cmd->add_option("--capacity", opt.capacity, "pool capacity in blocks");
  cmd->add_option("--seed", opt.seed, "seed for seeded policy choices")->envname("MEPIC_SIM_SEED");
  cmd->add_option("--blend-frac", opt.blend_fraction, "cacheblend recompute fraction");
  cmd->add_option("--epic-n", opt.epic_n, "epic leading recompute tokens (e.g. 16 or 32)");
  cmd->add_option("--remote-policy", opt.remote_policy, "always_fetch|always_recompute|cost_based")
      ->check(CLI::IsMember({"always_fetch", "always_recompute", "cost_based"}));
  cmd->add_flag("--no-remote", opt.no_remote, "disable the remote tier (discard on evict)");
  cmd->add_flag("--retain-prefix", opt.retain_prefix, "keep zero-reference prefix blocks resident");
  cmd->add_flag("--materialize", opt.materialize, "materialize KV payload bytes");
  cmd->add_option("--d-head", opt.d_head, "head dimension for payloads");
  cmd->add_option("--prefill-ticks-per-token", opt.prefill_ticks_per_token, "modeled prefill cost");
  cmd->add_option("--bandwidth", opt.bandwidth, "remote bandwidth, blocks per tick");
  cmd->add_option("--latency", opt.latency, "remote latency in ticks");
  cmd->add_option("--block-bytes", opt.block_bytes, "bytes per block, reporting only");
  cmd->add_option("--retry-limit", opt.retry_limit, "ticks a rejected request keeps retrying");
}

ReplayConfig to_replay_config(const CommonRunOptions& opt, PolicyKind kind) {
  ReplayConfig cfg;
  cfg.engine.pool.capacity_blocks = opt.capacity;
  cfg.engine.policy.kind = kind;
  cfg.engine.policy.recompute_fraction = opt.blend_fraction;
  cfg.engine.policy.recompute_tokens = opt.epic_n;
  cfg.engine.seed = opt.seed;
  cfg.engine.remote_enabled = !opt.no_remote;
  cfg.engine.retain_zero_ref_prefix = opt.retain_prefix;
  cfg.engine.materialize_payloads = opt.materialize;
  cfg.engine.d_head = opt.d_head;
  cfg.engine.cost_model.prefill_ticks_per_token = opt.prefill_ticks_per_token;
  cfg.engine.cost_model.block_bytes = opt.block_bytes;
  cfg.engine.remote_bandwidth_blocks_per_tick = opt.bandwidth;
  cfg.engine.remote_latency_ticks = opt.latency;
  cfg.retry_limit_ticks = opt.retry_limit;
  if (opt.remote_policy == "always_fetch") cfg.engine.remote_policy = RemotePolicy::AlwaysFetch;
  else if (opt.remote_policy == "always_recompute") cfg.engine.remote_policy = RemotePolicy::AlwaysRecompute;
  else cfg.engine.remote_policy = RemotePolicy::CostBased;
  return cfg;
}

PolicyKind parse_policy_or_throw(const std::string& name) {
  const auto kind = parse_policy(name);
  if (!kind)
    raise(ErrorCode::ConfigError,
          "unknown policy '" + name + "'; valid: naive, full_recompute, cacheblend, epic, mepic");
  return *kind;
}

void print_summary_line(const MetricsReport& r) {
  std::printf(
      "%-15s admitted=%llu/%llu dropped=%llu peak_blocks=%llu mean_blocks=%.1f chunk_hit=%.3f "
      "prefix_hit=%.3f recomputed=%llu fetched=%llu mean_latency=%.1f\n",
      r.policy.c_str(), static_cast<unsigned long long>(r.admitted), static_cast<unsigned long long>(r.requests),
      static_cast<unsigned long long>(r.dropped), static_cast<unsigned long long>(r.peak_blocks_used),
      r.mean_blocks_used, r.chunk_hit_rate, r.prefix_hit_rate,
      static_cast<unsigned long long>(r.total_recomputed_tokens),
      static_cast<unsigned long long>(r.remote_fetch_blocks), r.mean_latency_ticks);
}

int cmd_generate(const std::string& preset, const WorkloadSpec& custom, bool use_custom, std::uint64_t seed,
                 const std::string& out_path) {
  WorkloadSpec spec;
  if (use_custom) {
    spec = custom;
    spec.seed = seed;
  } else {
    const auto p = preset_spec(preset, seed);
    if (!p) {
      std::string names;
      for (const auto& n : preset_names()) names += (names.empty() ? "" : ", ") + n;
      std::cerr << "error: unknown preset '" << preset << "'; valid presets: " << names << "\n";
      return 1;
    }
    spec = *p;
  }
  const Trace trace = generate(spec);
  write_trace(trace, out_path);
  std::printf("wrote %s: %zu requests, %zu distinct chunks, mean reuse %.3f\n", out_path.c_str(),
              trace.requests.size(), trace.chunk_table.size(), measured_mean_reuse(trace));
  return 0;
}

int cmd_replay(const CommonRunOptions& opt, const std::string& policy_name_str) {
  const Trace trace = read_trace(opt.trace_path);
  const PolicyKind kind = parse_policy_or_throw(policy_name_str);
  const MetricsReport report = replay(trace, to_replay_config(opt, kind));

  std::filesystem::create_directories(opt.out_dir);
  const std::string ts_path = opt.out_dir + "/timeseries_" + report.policy + ".csv";
  write_file(ts_path, timeseries_csv(report));
  write_file(opt.out_dir + "/summary.csv", summary_csv({report}));
  print_summary_line(report);
  std::printf("metrics written to %s\n", opt.out_dir.c_str());
  return 0;
}

int cmd_compare(const CommonRunOptions& opt, const std::vector<std::string>& policy_names) {
  if (policy_names.size() < 2) {
    std::cerr << "error: compare needs at least two policies\n";
    return 1;
  }
  const Trace trace = read_trace(opt.trace_path);
  std::vector<Policy> policies;
  for (const std::string& name : policy_names) {
    Policy p;
    p.kind = parse_policy_or_throw(name);
    p.recompute_fraction = opt.blend_fraction;
    p.recompute_tokens = opt.epic_n;
    policies.push_back(p);
  }
  const ComparisonResult result = compare(trace, policies, to_replay_config(opt, policies[0].kind));

  std::filesystem::create_directories(opt.out_dir);
  for (const MetricsReport& r : result.reports) {
    write_file(opt.out_dir + "/timeseries_" + r.policy + ".csv", timeseries_csv(r));
    print_summary_line(r);
  }
  write_file(opt.out_dir + "/comparison.csv", summary_csv(result.reports));
  std::printf("comparison written to %s/comparison.csv\n", opt.out_dir.c_str());
  return 0;
}

struct VerifyRopeOptions {
  int instances = 400;
  std::string dtype = "both";
  std::uint32_t max_keys = 512;
  std::int64_t max_position = 8192;
  std::uint64_t seed = 1;
  bool inject_error = false;
};

int cmd_verify_rope(const VerifyRopeOptions& opt) {
  std::mt19937_64 rng(opt.seed);
  const std::uint32_t dims[] = {8, 32, 64};
  double max_f32 = 0.0, max_f64 = 0.0, max_shift_f32 = 0.0;
  const bool run_f32 = opt.dtype == "f32" || opt.dtype == "both";
  const bool run_f64 = opt.dtype == "f64" || opt.dtype == "both";

  auto unit = [&rng]() { return static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0; };

  for (int i = 0; i < opt.instances; ++i) {
    const std::uint32_t d = dims[i % 3];
    AttnConfig cfg{d, 10000.0};
    const std::size_t n = 1 + rng() % opt.max_keys;
    std::vector<std::int64_t> pos(n);
    for (auto& p : pos) p = static_cast<std::int64_t>(rng() % (opt.max_position + 1));
    const std::int64_t pq = static_cast<std::int64_t>(rng() % (opt.max_position + 1));
    std::vector<std::uint8_t> mask(n, 1);

    if (run_f32) {
      std::vector<float> q(d), keys(d * n), values(d * n);
      for (auto& x : q) x = static_cast<float>(unit());
      for (auto& x : keys) x = static_cast<float>(unit());
      for (auto& x : values) x = static_cast<float>(unit());
      std::vector<float> rotated(d * n);
      for (std::size_t k = 0; k < n; ++k) {
        const auto kr = rope_rotate(std::span<const float>(keys).subspan(k * d, d), pos[k], cfg);
        std::copy(kr.begin(), kr.end(), rotated.begin() + static_cast<std::ptrdiff_t>(k * d));
      }
      const auto pre = attention_pre_applied(std::span<const float>(q), pq, std::span<const float>(rotated),
                                             std::span<const float>(values), mask, cfg);
      auto fused = attention_fused(std::span<const float>(q), pq, std::span<const float>(keys), pos,
                                   std::span<const float>(values), mask, cfg);
      if (opt.inject_error && i == 0) fused[0] += 1e-3f;  // harness self-test
      for (std::size_t j = 0; j < d; ++j)
        max_f32 = std::max(max_f32, static_cast<double>(std::abs(pre[j] - fused[j])));

      // Shift invariance: move the query and every key by the same offset.
      const std::int64_t delta = static_cast<std::int64_t>(rng() % 2048);
      std::vector<std::int64_t> shifted = pos;
      for (auto& p : shifted) p += delta;
      const auto moved = attention_fused(std::span<const float>(q), pq + delta, std::span<const float>(keys),
                                         shifted, std::span<const float>(values), mask, cfg);
      const auto base = attention_fused(std::span<const float>(q), pq, std::span<const float>(keys), pos,
                                        std::span<const float>(values), mask, cfg);
      for (std::size_t j = 0; j < d; ++j)
        max_shift_f32 = std::max(max_shift_f32, static_cast<double>(std::abs(moved[j] - base[j])));
    }
    if (run_f64) {
      std::vector<double> q(d), keys(d * n), values(d * n);
      for (auto& x : q) x = unit();
      for (auto& x : keys) x = unit();
      for (auto& x : values) x = unit();
      std::vector<double> rotated(d * n);
      for (std::size_t k = 0; k < n; ++k) {
        const auto kr = rope_rotate(std::span<const double>(keys).subspan(k * d, d), pos[k], cfg);
        std::copy(kr.begin(), kr.end(), rotated.begin() + static_cast<std::ptrdiff_t>(k * d));
      }
      const auto pre = attention_pre_applied(std::span<const double>(q), pq, std::span<const double>(rotated),
                                             std::span<const double>(values), mask, cfg);
      auto fused = attention_fused(std::span<const double>(q), pq, std::span<const double>(keys), pos,
                                   std::span<const double>(values), mask, cfg);
      if (opt.inject_error && i == 0) fused[0] += 1e-9;
      for (std::size_t j = 0; j < d; ++j) max_f64 = std::max(max_f64, std::abs(pre[j] - fused[j]));
    }
  }

  bool ok = true;
  if (run_f32) {
    std::printf("f32: max |fused - pre_applied| = %.3e (tolerance 1e-5), max shift deviation = %.3e\n", max_f32,
                max_shift_f32);
    ok = ok && max_f32 < 1e-5 && max_shift_f32 < 1e-5;
  }
  if (run_f64) {
    std::printf("f64: max |fused - pre_applied| = %.3e (tolerance 1e-12)\n", max_f64);
    ok = ok && max_f64 < 1e-12;
  }
  std::printf("verify-rope: %s\n", ok ? "PASS" : "FAIL");
  return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chunk-aware paged KV cache simulator"};
  app.require_subcommand(1);
  app.set_config("--config", "", "flat key=value config file; flags override it");

  // generate
  auto* gen = app.add_subcommand("generate", "write a synthetic trace");
  std::string preset;
  std::string gen_out = "workload.trace";
  std::uint64_t gen_seed = 0;
  WorkloadSpec custom;
  bool use_custom = false;
  gen->add_option("--preset", preset, "one of: newsqa-like, squad-like, narrativeqa-like, emrqa-like");
  gen->add_option("-o,--out", gen_out, "output trace path");
  gen->add_option("--seed", gen_seed, "generation seed")->envname("MEPIC_SIM_SEED");
  gen->add_flag("--custom", use_custom, "use the explicit shape options instead of a preset");
  gen->add_option("--requests", custom.n_requests, "request count");
  gen->add_option("--distinct-chunks", custom.n_distinct_chunks, "distinct chunk count");
  gen->add_option("--chunks-per-request", custom.chunks_per_request, "chunk references per request");
  gen->add_option("--zipf", custom.zipf_s, "popularity skew");
  gen->add_option("--chunk-tokens", custom.chunk_tokens, "tokens per chunk");
  gen->add_option("--prompt-tokens", custom.prompt_tokens, "request-specific tokens");
  gen->add_option("--qps", custom.qps, "arrivals per tick");
  gen->add_option("--hold-min", custom.decode_hold_min, "min decode hold ticks");
  gen->add_option("--hold-max", custom.decode_hold_max, "max decode hold ticks");
  gen->add_option("--block-size", custom.block_size, "tokens per KV block");

  // replay
  auto* rep = app.add_subcommand("replay", "replay a trace under one policy");
  CommonRunOptions rep_opt;
  std::string rep_policy = "mepic";
  add_run_options(rep, rep_opt);
  rep->add_option("--policy", rep_policy, "naive|full_recompute|cacheblend|epic|mepic");

  // compare
  auto* cmp = app.add_subcommand("compare", "replay a trace under several policies");
  CommonRunOptions cmp_opt;
  std::vector<std::string> cmp_policies{"mepic", "epic", "cacheblend"};
  add_run_options(cmp, cmp_opt);
  cmp->add_option("--policies", cmp_policies, "policy list")->delimiter(',');

  // verify-rope
  auto* ver = app.add_subcommand("verify-rope", "check fused rotary attention against the pre-applied route");
  VerifyRopeOptions ver_opt;
  ver->add_option("--instances", ver_opt.instances, "random instances per dtype");
  ver->add_option("--dtype", ver_opt.dtype, "f32|f64|both")->check(CLI::IsMember({"f32", "f64", "both"}));
  ver->add_option("--max-keys", ver_opt.max_keys, "keys per instance upper bound");
  ver->add_option("--max-position", ver_opt.max_position, "absolute position upper bound");
  ver->add_option("--seed", ver_opt.seed, "instance seed")->envname("MEPIC_SIM_SEED");
  ver->add_flag("--inject-error", ver_opt.inject_error, "perturb one output to self-test the harness");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      if (preset.empty() && !use_custom) {
        std::cerr << "error: pass --preset or --custom with explicit shape options\n";
        return 1;
      }
      return cmd_generate(preset, custom, use_custom, gen_seed, gen_out);
    }
    if (rep->parsed()) return cmd_replay(rep_opt, rep_policy);
    if (cmp->parsed()) return cmd_compare(cmp_opt, cmp_policies);
    if (ver->parsed()) return cmd_verify_rope(ver_opt);
  } catch (const mepic::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == mepic::ErrorCode::ConfigError ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
