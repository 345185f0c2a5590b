#pragma once

#include <map>
#include <string>
#include <vector>

#include "mepic/segmentation.hpp"
#include "mepic/types.hpp"

namespace mepic {

inline constexpr std::uint32_t kTraceFormatVersion = 1;

struct TraceSegment {
  SegmentKind kind = SegmentKind::Prompt;
  std::string chunk_ref;  // chunk table key when kind == Chunk
  TokenSeq tokens;        // inline tokens when kind == Prompt
};

struct TraceRequest {
  RequestId id = 0;
  Tick arrival_tick = 0;
  Tick decode_hold_ticks = 0;
  std::vector<TraceSegment> segments;
};

// Line-delimited text trace with an explicit chunk table header:
//   MEPIC_TRACE 1
//   block_size 16
//   chunk <name> <tok> <tok> ...
//   req <id> <arrival_tick> <decode_hold> c:<name> p:<tok>,<tok>,...
struct Trace {
  std::uint32_t block_size = 16;
  std::map<std::string, TokenSeq> chunk_table;
  std::vector<TraceRequest> requests;

  std::vector<Segment> request_segments(const TraceRequest& req) const;
};

std::string trace_to_string(const Trace& trace);
Trace trace_from_string(const std::string& text);  // throws TraceFormatError

void write_trace(const Trace& trace, const std::string& path);
Trace read_trace(const std::string& path);

}  // namespace mepic
