#include "mepic/segmentation.hpp"

#include <algorithm>
#include <string>

#include "mepic/errors.hpp"
#include "mepic/hash.hpp"

namespace mepic {

std::vector<Segment> segment(std::span<const Token> marked_request) {
  if (marked_request.empty()) raise(ErrorCode::MalformedMarkers, "empty request");
  std::vector<Segment> out;
  TokenSeq current;
  bool in_chunk = false;
  for (std::size_t i = 0; i < marked_request.size(); ++i) {
    const Token t = marked_request[i];
    if (t == kChunkBegin) {
      if (in_chunk) raise(ErrorCode::MalformedMarkers, "nested chunk marker at position " + std::to_string(i));
      if (!current.empty()) {
        out.push_back(Segment{SegmentKind::Prompt, std::move(current)});
        current.clear();
      }
      in_chunk = true;
    } else if (t == kChunkEnd) {
      if (!in_chunk) raise(ErrorCode::MalformedMarkers, "chunk end without begin at position " + std::to_string(i));
      if (current.empty()) raise(ErrorCode::MalformedMarkers, "empty chunk at position " + std::to_string(i));
      out.push_back(Segment{SegmentKind::Chunk, std::move(current)});
      current.clear();
      in_chunk = false;
    } else if (t <= kPadToken) {
      raise(ErrorCode::MalformedMarkers, "invalid token id " + std::to_string(t));
    } else {
      current.push_back(t);
    }
  }
  if (in_chunk) raise(ErrorCode::MalformedMarkers, "unclosed chunk marker");
  if (!current.empty()) out.push_back(Segment{SegmentKind::Prompt, std::move(current)});
  if (out.empty()) raise(ErrorCode::MalformedMarkers, "request has no content tokens");
  return out;
}

namespace {

std::uint32_t pad_for(std::size_t len, std::uint32_t block_size) {
  return static_cast<std::uint32_t>((block_size - len % block_size) % block_size);
}

void validate_segment(const Segment& seg) {
  if (seg.tokens.empty()) raise(ErrorCode::ConfigError, "segment with no tokens");
  for (Token t : seg.tokens)
    if (t <= kPadToken) raise(ErrorCode::ConfigError, "raw segment contains reserved token id " + std::to_string(t));
}

}  // namespace

AlignedLayout canonicalize(const std::vector<Segment>& segments, std::uint32_t block_size) {
  if (segments.empty()) raise(ErrorCode::ConfigError, "cannot canonicalize an empty segment list");
  if (block_size == 0) raise(ErrorCode::ConfigError, "block size must be positive");

  AlignedLayout layout;
  layout.block_size = block_size;
  std::size_t raw_pos = 0;

  for (std::size_t i = 0; i < segments.size(); ++i) {
    const Segment& seg = segments[i];
    validate_segment(seg);
    const bool final_prompt = seg.kind == SegmentKind::Prompt && i + 1 == segments.size();
    const std::uint32_t pad = final_prompt ? 0u : pad_for(seg.tokens.size(), block_size);

    SpanInfo span;
    span.kind = seg.kind;
    span.raw_begin = raw_pos;
    span.raw_end = raw_pos + seg.tokens.size();
    span.padded_begin = layout.padded_tokens.size();

    if (seg.kind == SegmentKind::Chunk) {
      span.pad_prefix = pad;
      layout.padded_tokens.insert(layout.padded_tokens.end(), pad, kPadToken);
      layout.padded_tokens.insert(layout.padded_tokens.end(), seg.tokens.begin(), seg.tokens.end());
    } else {
      span.pad_suffix = pad;
      layout.padded_tokens.insert(layout.padded_tokens.end(), seg.tokens.begin(), seg.tokens.end());
      layout.padded_tokens.insert(layout.padded_tokens.end(), pad, kPadToken);
    }
    span.padded_end = layout.padded_tokens.size();
    raw_pos = span.raw_end;
    layout.spans.push_back(span);
  }
  return layout;
}

TokenSeq padded_chunk_tokens(const Segment& chunk, std::uint32_t block_size) {
  if (chunk.kind != SegmentKind::Chunk) raise(ErrorCode::ConfigError, "chunk_id on a prompt segment");
  validate_segment(chunk);
  const std::uint32_t pad = pad_for(chunk.tokens.size(), block_size);
  TokenSeq padded;
  padded.reserve(pad + chunk.tokens.size());
  padded.insert(padded.end(), pad, kPadToken);
  padded.insert(padded.end(), chunk.tokens.begin(), chunk.tokens.end());
  return padded;
}

ChunkId chunk_id(const Segment& chunk, std::uint32_t block_size) {
  return hash128_tokens(padded_chunk_tokens(chunk, block_size));
}

namespace {

struct PadRun {
  std::size_t begin;
  std::size_t end;
};

struct InferEvent {
  std::size_t pos;       // boundary the event anchors to
  bool prompt_end;       // true: prompt ends at pos; false: chunk starts at pos
  std::size_t pad_begin;  // for prompt_end: where its trailing pads start
};

}  // namespace

std::vector<InferredSpan> infer_spans(std::span<const Token> padded_tokens, std::uint32_t block_size) {
  const std::size_t n = padded_tokens.size();
  const std::size_t bs = block_size;
  if (bs == 0) raise(ErrorCode::ConfigError, "block size must be positive");
  if (n == 0) raise(ErrorCode::AmbiguousPadding, "empty sequence");

  // Collect maximal PAD runs.
  std::vector<PadRun> runs;
  for (std::size_t i = 0; i < n;) {
    if (padded_tokens[i] == kPadToken) {
      std::size_t j = i;
      while (j < n && padded_tokens[j] == kPadToken) ++j;
      runs.push_back(PadRun{i, j});
      i = j;
    } else {
      ++i;
    }
  }

  // Classify runs. Valid runs touch exactly one block boundary: starting on
  // one (chunk lead), ending on one (prompt trail), or crossing one (a trail
  // merged with the next chunk's lead). Anything else cannot come from
  // canonicalize.
  std::vector<InferEvent> events;
  for (const PadRun& run : runs) {
    const bool starts_on = run.begin % bs == 0;
    const bool ends_on = run.end % bs == 0 || run.end == n;
    // Boundaries strictly inside the run. Segment pads are shorter than a
    // block, so a run may cross at most one boundary (a prompt's trailing
    // pads merged with the next chunk's leading pads); a run containing a
    // whole block is impossible.
    std::size_t interior = 0;
    std::size_t boundary = 0;
    for (std::size_t m = (run.begin / bs + 1) * bs; m < run.end; m += bs) {
      boundary = m;
      ++interior;
    }
    if (run.end == n && run.end % bs != 0)
      raise(ErrorCode::AmbiguousPadding, "sequence ends inside padding");
    if (starts_on && !ends_on && interior == 0) {
      events.push_back(InferEvent{run.begin, false, run.begin});
    } else if (!starts_on && ends_on && interior == 0) {
      events.push_back(InferEvent{run.end, true, run.begin});
    } else if (!starts_on && !ends_on && interior == 1) {
      events.push_back(InferEvent{boundary, true, run.begin});
      events.push_back(InferEvent{boundary, false, boundary});
    } else {
      raise(ErrorCode::AmbiguousPadding, "pad pattern at " + std::to_string(run.begin) +
                                             " cannot come from block-aligned padding");
    }
  }
  std::sort(events.begin(), events.end(), [](const InferEvent& a, const InferEvent& b) {
    if (a.pos != b.pos) return a.pos < b.pos;
    return a.prompt_end && !b.prompt_end;  // close prompts before opening chunks
  });

  std::vector<InferredSpan> out;
  std::size_t cursor = 0;
  bool chunk_open = false;
  std::size_t chunk_begin = 0;

  auto close_chunk_at = [&](std::size_t end) {
    if (end <= chunk_begin || (end - chunk_begin) % bs != 0)
      raise(ErrorCode::AmbiguousPadding, "chunk span cannot close at " + std::to_string(end));
    out.push_back(InferredSpan{SegmentKind::Chunk, chunk_begin, end});
    chunk_open = false;
    cursor = end;
  };

  for (const InferEvent& ev : events) {
    if (ev.prompt_end) {
      if (chunk_open) {
        // The prompt owns only the partial block its padding sits in; the
        // full blocks before it belong to the open chunk.
        close_chunk_at(ev.pad_begin / bs * bs);
      }
      if (ev.pad_begin <= cursor) raise(ErrorCode::AmbiguousPadding, "prompt with no tokens");
      out.push_back(InferredSpan{SegmentKind::Prompt, cursor, ev.pos});
      cursor = ev.pos;
    } else {
      if (chunk_open) {
        close_chunk_at(ev.pos);
      } else if (cursor < ev.pos) {
        out.push_back(InferredSpan{SegmentKind::Prompt, cursor, ev.pos});
        cursor = ev.pos;
      }
      chunk_open = true;
      chunk_begin = ev.pos;
    }
  }

  if (chunk_open) {
    if (n % bs == 0) {
      close_chunk_at(n);
    } else {
      close_chunk_at(n / bs * bs);
      out.push_back(InferredSpan{SegmentKind::Prompt, cursor, n});
    }
  } else if (cursor < n) {
    out.push_back(InferredSpan{SegmentKind::Prompt, cursor, n});
  }
  return out;
}

}  // namespace mepic
