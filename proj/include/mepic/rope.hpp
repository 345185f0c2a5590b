#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mepic/pages.hpp"
#include "mepic/types.hpp"

namespace mepic {

struct AttnConfig {
  std::uint32_t d_head = 64;  // even
  double rope_base = 10000.0;
};

// Rotates interleaved pairs (2i, 2i+1) by angle position * base^(-2i/d).
// Position 0 is the identity; rotations preserve the 2-norm. Angles are
// evaluated in extended precision so that the two attention routes below
// agree to well under the stated tolerances even at positions of a few
// thousand.
std::vector<float> rope_rotate(std::span<const float> v, std::int64_t position, const AttnConfig& cfg);
std::vector<double> rope_rotate(std::span<const double> v, std::int64_t position, const AttnConfig& cfg);

// Baseline attention over keys that were rotated at their absolute positions
// before being stored. The query is rotated at pos_q, then
// softmax(q K^T / sqrt(d)) V over valid slots.
std::vector<float> attention_pre_applied(std::span<const float> q, std::int64_t pos_q,
                                         std::span<const float> keys_with_rope, std::span<const float> values,
                                         std::span<const std::uint8_t> mask, const AttnConfig& cfg);
std::vector<double> attention_pre_applied(std::span<const double> q, std::int64_t pos_q,
                                          std::span<const double> keys_with_rope, std::span<const double> values,
                                          std::span<const std::uint8_t> mask, const AttnConfig& cfg);

// Attention over keys stored without positional encoding. Rotary offsets are
// injected at score time using only the relative offset key_pos - pos_q, so
// the stored bytes are position-free and a uniform shift of all positions
// leaves the scores unchanged.
std::vector<float> attention_fused(std::span<const float> q, std::int64_t pos_q, std::span<const float> nope_keys,
                                   std::span<const std::int64_t> key_positions, std::span<const float> values,
                                   std::span<const std::uint8_t> mask, const AttnConfig& cfg);
std::vector<double> attention_fused(std::span<const double> q, std::int64_t pos_q, std::span<const double> nope_keys,
                                    std::span<const std::int64_t> key_positions, std::span<const double> values,
                                    std::span<const std::uint8_t> mask, const AttnConfig& cfg);

// Stand-in for a model: maps token ids to deterministic pseudo-random
// query/key/value vectors. Same seed, same parameters.
class ToyLayer {
 public:
  ToyLayer(std::uint64_t seed, std::uint32_t d_head) : seed_(seed), d_head_(d_head) {}

  std::uint64_t seed() const { return seed_; }
  std::uint32_t d_head() const { return d_head_; }

  void project(Token token, std::span<float> k_out, std::span<float> v_out) const;
  std::vector<float> query(Token token) const;

 private:
  float component(Token token, std::uint32_t dim, std::uint32_t role) const;

  std::uint64_t seed_;
  std::uint32_t d_head_;
};

struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;  // half-open, indices into the padded sequence
};

// Writes NoPE key/value vectors for every position inside the recompute
// spans into the given pages (page i backs padded block i). PAD slots are
// zeroed and masked; slots outside the spans are left untouched.
void materialize_segment(const ToyLayer& layer, std::span<const Token> padded_tokens,
                         std::span<const TokenSpan> recompute_spans, std::span<KvPage*> pages,
                         std::uint32_t block_size);

// Per-block L2 deviation between two page sequences of identical shape.
// Zero exactly when the pages are equal.
std::vector<double> kv_deviation(std::span<const KvPage> full_recompute_pages, std::span<const KvPage> reused_pages);

}  // namespace mepic
