#include "mepic/trace.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "mepic/errors.hpp"

namespace mepic {

std::vector<Segment> Trace::request_segments(const TraceRequest& req) const {
  std::vector<Segment> out;
  out.reserve(req.segments.size());
  for (const TraceSegment& ts : req.segments) {
    if (ts.kind == SegmentKind::Chunk) {
      auto it = chunk_table.find(ts.chunk_ref);
      if (it == chunk_table.end())
        raise(ErrorCode::TraceFormatError, "unknown chunk reference '" + ts.chunk_ref + "'");
      out.push_back(Segment{SegmentKind::Chunk, it->second});
    } else {
      out.push_back(Segment{SegmentKind::Prompt, ts.tokens});
    }
  }
  return out;
}

std::string trace_to_string(const Trace& trace) {
  std::ostringstream out;
  out << "MEPIC_TRACE " << kTraceFormatVersion << "\n";
  out << "block_size " << trace.block_size << "\n";
  for (const auto& [name, tokens] : trace.chunk_table) {
    out << "chunk " << name;
    for (Token t : tokens) out << ' ' << t;
    out << "\n";
  }
  for (const TraceRequest& req : trace.requests) {
    out << "req " << req.id << ' ' << req.arrival_tick << ' ' << req.decode_hold_ticks;
    for (const TraceSegment& seg : req.segments) {
      if (seg.kind == SegmentKind::Chunk) {
        out << " c:" << seg.chunk_ref;
      } else {
        out << " p:";
        for (std::size_t i = 0; i < seg.tokens.size(); ++i) {
          if (i) out << ',';
          out << seg.tokens[i];
        }
      }
    }
    out << "\n";
  }
  return out.str();
}

namespace {

[[noreturn]] void bad_trace(std::size_t line_no, const std::string& what) {
  raise(ErrorCode::TraceFormatError, "line " + std::to_string(line_no) + ": " + what);
}

Token parse_token(const std::string& s, std::size_t line_no) {
  try {
    const long v = std::stol(s);
    if (v < 1 || v > 0x7fffffffL) bad_trace(line_no, "token id out of range: " + s);
    return static_cast<Token>(v);
  } catch (const std::logic_error&) {
    bad_trace(line_no, "not a token id: '" + s + "'");
  }
}

}  // namespace

Trace trace_from_string(const std::string& text) {
  Trace trace;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  bool have_block_size = false;
  Tick last_arrival = 0;
  std::set<RequestId> seen_ids;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (!have_header) {
      std::uint32_t version = 0;
      if (word != "MEPIC_TRACE" || !(ls >> version)) bad_trace(line_no, "missing MEPIC_TRACE header");
      if (version != kTraceFormatVersion) bad_trace(line_no, "unsupported trace version " + std::to_string(version));
      have_header = true;
      continue;
    }
    if (word == "block_size") {
      if (!(ls >> trace.block_size) || trace.block_size == 0) bad_trace(line_no, "invalid block_size");
      have_block_size = true;
    } else if (word == "chunk") {
      std::string name;
      if (!(ls >> name)) bad_trace(line_no, "chunk line without a name");
      if (trace.chunk_table.count(name)) bad_trace(line_no, "duplicate chunk '" + name + "'");
      TokenSeq tokens;
      std::string tok;
      while (ls >> tok) tokens.push_back(parse_token(tok, line_no));
      if (tokens.empty()) bad_trace(line_no, "chunk '" + name + "' has no tokens");
      trace.chunk_table.emplace(name, std::move(tokens));
    } else if (word == "req") {
      TraceRequest req;
      if (!(ls >> req.id >> req.arrival_tick >> req.decode_hold_ticks))
        bad_trace(line_no, "malformed request line");
      if (!seen_ids.insert(req.id).second)
        bad_trace(line_no, "duplicate request id " + std::to_string(req.id));
      if (!trace.requests.empty() && req.arrival_tick < last_arrival)
        bad_trace(line_no, "arrival ticks must be nondecreasing");
      last_arrival = req.arrival_tick;
      std::string seg;
      while (ls >> seg) {
        if (seg.size() < 3 || seg[1] != ':') bad_trace(line_no, "malformed segment '" + seg + "'");
        const std::string body = seg.substr(2);
        if (seg[0] == 'c') {
          if (!trace.chunk_table.count(body)) bad_trace(line_no, "unknown chunk reference '" + body + "'");
          req.segments.push_back(TraceSegment{SegmentKind::Chunk, body, {}});
        } else if (seg[0] == 'p') {
          TraceSegment ts;
          ts.kind = SegmentKind::Prompt;
          std::size_t start = 0;
          while (start < body.size()) {
            std::size_t comma = body.find(',', start);
            if (comma == std::string::npos) comma = body.size();
            ts.tokens.push_back(parse_token(body.substr(start, comma - start), line_no));
            start = comma + 1;
          }
          if (ts.tokens.empty()) bad_trace(line_no, "empty prompt segment");
          req.segments.push_back(std::move(ts));
        } else {
          bad_trace(line_no, "unknown segment kind '" + seg + "'");
        }
      }
      if (req.segments.empty()) bad_trace(line_no, "request without segments");
      trace.requests.push_back(std::move(req));
    } else {
      bad_trace(line_no, "unknown directive '" + word + "'");
    }
  }
  if (!have_header) raise(ErrorCode::TraceFormatError, "empty trace: missing header");
  if (!have_block_size) raise(ErrorCode::TraceFormatError, "trace missing block_size line");
  return trace;
}

void write_trace(const Trace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::IoError, "cannot write trace file " + path);
  const std::string text = trace_to_string(trace);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

Trace read_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoError, "cannot read trace file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return trace_from_string(buf.str());
}

}  // namespace mepic
