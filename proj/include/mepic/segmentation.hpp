#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mepic/errors.hpp"
#include "mepic/types.hpp"

namespace mepic {

enum class SegmentKind : std::uint8_t { Chunk, Prompt };

struct Segment {
  SegmentKind kind = SegmentKind::Prompt;
  TokenSeq tokens;  // raw tokens, non-empty, no PAD ids
};

struct SpanInfo {
  SegmentKind kind = SegmentKind::Prompt;
  std::size_t raw_begin = 0;   // offsets into the concatenated raw stream
  std::size_t raw_end = 0;
  std::size_t padded_begin = 0;  // offsets into the padded sequence
  std::size_t padded_end = 0;
  std::uint32_t pad_prefix = 0;  // chunks pad in front
  std::uint32_t pad_suffix = 0;  // non-final prompts pad behind
};

// Block-aligned layout of a request. Chunk spans start and end on block
// boundaries; every prompt span except the last is block-aligned; the final
// prompt carries no padding. Stripping PAD tokens recovers the raw stream.
struct AlignedLayout {
  TokenSeq padded_tokens;
  std::vector<SpanInfo> spans;
  std::uint32_t block_size = 16;

  std::size_t padded_size() const { return padded_tokens.size(); }
  std::size_t full_blocks() const { return padded_tokens.size() / block_size; }
  std::size_t total_blocks() const { return (padded_tokens.size() + block_size - 1) / block_size; }
};

// Splits a marker-delimited token stream into chunk/prompt segments. Marker
// tokens are removed. A request without markers is one prompt segment.
// Throws MalformedMarkers on unclosed, nested or empty chunk markers.
std::vector<Segment> segment(std::span<const Token> marked_request);

// Applies the asymmetric padding scheme: leading pads for chunks, trailing
// pads for non-final prompts, none for the final prompt. The pad amount per
// segment is (block_size - len % block_size) % block_size, so the padded
// form of a chunk depends only on its tokens and the block size.
AlignedLayout canonicalize(const std::vector<Segment>& segments, std::uint32_t block_size);

// Padded token sequence of a single chunk: leading pads ++ raw tokens.
TokenSeq padded_chunk_tokens(const Segment& chunk, std::uint32_t block_size);

// Identity digest of a chunk, computed over its padded token sequence.
ChunkId chunk_id(const Segment& chunk, std::uint32_t block_size);

struct InferredSpan {
  SegmentKind kind;
  std::size_t padded_begin;
  std::size_t padded_end;
};

// Recovers segment spans from the padding pattern alone. A maximal PAD run
// starting on a block boundary and ending mid-block opens a chunk; a run
// ending on a boundary closes a prompt; the trailing unpadded region is the
// final prompt. Chunks or prompts that needed zero padding leave no signal
// and are absorbed into the surrounding prompt region. Throws
// AmbiguousPadding on patterns canonicalize cannot emit.
std::vector<InferredSpan> infer_spans(std::span<const Token> padded_tokens, std::uint32_t block_size);

}  // namespace mepic
