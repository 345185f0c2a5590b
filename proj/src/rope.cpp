#include "mepic/rope.hpp"

#include <cmath>
#include <string>

#include "mepic/errors.hpp"
#include "mepic/hash.hpp"

namespace mepic {
namespace {

void check_config(const AttnConfig& cfg) {
  if (cfg.d_head == 0 || cfg.d_head % 2 != 0)
    raise(ErrorCode::DimensionMismatch, "d_head must be a positive even integer");
  if (!(cfg.rope_base > 0.0)) raise(ErrorCode::DimensionMismatch, "rope_base must be positive");
}

// cos/sin of position * base^(-2i/d) for pair i, evaluated in long double.
void pair_angle(std::int64_t position, std::uint32_t pair, const AttnConfig& cfg, long double& c, long double& s) {
  const long double exponent = -2.0L * static_cast<long double>(pair) / static_cast<long double>(cfg.d_head);
  const long double inv_freq = powl(static_cast<long double>(cfg.rope_base), exponent);
  const long double angle = static_cast<long double>(position) * inv_freq;
  c = cosl(angle);
  s = sinl(angle);
}

template <typename T>
std::vector<T> rope_rotate_impl(std::span<const T> v, std::int64_t position, const AttnConfig& cfg) {
  check_config(cfg);
  if (v.size() != cfg.d_head)
    raise(ErrorCode::DimensionMismatch,
          "vector has " + std::to_string(v.size()) + " dims, config expects " + std::to_string(cfg.d_head));
  std::vector<T> out(v.size());
  for (std::uint32_t i = 0; i < cfg.d_head / 2; ++i) {
    long double cl, sl;
    pair_angle(position, i, cfg, cl, sl);
    const T c = static_cast<T>(cl);
    const T s = static_cast<T>(sl);
    const T x = v[2 * i];
    const T y = v[2 * i + 1];
    out[2 * i] = x * c - y * s;
    out[2 * i + 1] = x * s + y * c;
  }
  return out;
}

template <typename T>
std::vector<T> attention_over_scores(std::span<const double> scores, std::span<const T> values,
                                     std::span<const std::uint8_t> mask, std::uint32_t d_head) {
  double max_score = -1e300;
  bool any_valid = false;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!mask[i]) continue;
    any_valid = true;
    max_score = std::max(max_score, scores[i]);
  }
  if (!any_valid) raise(ErrorCode::EmptyValidSet, "all key slots are masked");

  std::vector<double> weights(scores.size(), 0.0);
  double denom = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!mask[i]) continue;
    weights[i] = std::exp(scores[i] - max_score);
    denom += weights[i];
  }
  std::vector<T> out(d_head, T(0));
  std::vector<double> acc(d_head, 0.0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!mask[i]) continue;
    const double w = weights[i] / denom;
    for (std::uint32_t d = 0; d < d_head; ++d) acc[d] += w * static_cast<double>(values[i * d_head + d]);
  }
  for (std::uint32_t d = 0; d < d_head; ++d) out[d] = static_cast<T>(acc[d]);
  return out;
}

template <typename T>
void check_attention_shapes(std::span<const T> q, std::span<const T> keys, std::span<const T> values,
                            std::span<const std::uint8_t> mask, const AttnConfig& cfg, std::size_t* n_keys) {
  check_config(cfg);
  if (q.size() != cfg.d_head) raise(ErrorCode::DimensionMismatch, "query dimension mismatch");
  if (keys.size() % cfg.d_head != 0) raise(ErrorCode::DimensionMismatch, "key buffer not a multiple of d_head");
  *n_keys = keys.size() / cfg.d_head;
  if (values.size() != keys.size()) raise(ErrorCode::DimensionMismatch, "value buffer shape mismatch");
  if (mask.size() != *n_keys) raise(ErrorCode::DimensionMismatch, "mask length mismatch");
}

template <typename T>
std::vector<T> attention_pre_applied_impl(std::span<const T> q, std::int64_t pos_q, std::span<const T> keys_with_rope,
                                          std::span<const T> values, std::span<const std::uint8_t> mask,
                                          const AttnConfig& cfg) {
  std::size_t n_keys = 0;
  check_attention_shapes(q, keys_with_rope, values, mask, cfg, &n_keys);
  const std::vector<T> q_rot = rope_rotate_impl<T>(q, pos_q, cfg);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_head));
  std::vector<double> scores(n_keys, 0.0);
  for (std::size_t i = 0; i < n_keys; ++i) {
    if (!mask[i]) continue;
    double dot = 0.0;
    for (std::uint32_t d = 0; d < cfg.d_head; ++d)
      dot += static_cast<double>(q_rot[d]) * static_cast<double>(keys_with_rope[i * cfg.d_head + d]);
    scores[i] = dot * scale;
  }
  return attention_over_scores<T>(scores, values, mask, cfg.d_head);
}

template <typename T>
std::vector<T> attention_fused_impl(std::span<const T> q, std::int64_t pos_q, std::span<const T> nope_keys,
                                    std::span<const std::int64_t> key_positions, std::span<const T> values,
                                    std::span<const std::uint8_t> mask, const AttnConfig& cfg) {
  std::size_t n_keys = 0;
  check_attention_shapes(q, nope_keys, values, mask, cfg, &n_keys);
  if (key_positions.size() != n_keys) raise(ErrorCode::DimensionMismatch, "key position count mismatch");

  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_head));
  std::vector<double> scores(n_keys, 0.0);
  std::vector<T> k_rel(cfg.d_head);
  for (std::size_t i = 0; i < n_keys; ++i) {
    if (!mask[i]) continue;
    // <R(pos_q) q, R(pos_k) k> = <q, R(pos_k - pos_q) k>: only the relative
    // offset enters, which is what makes the stored bytes reusable at any
    // absolute position.
    const std::int64_t rel = key_positions[i] - pos_q;
    for (std::uint32_t p = 0; p < cfg.d_head / 2; ++p) {
      long double cl, sl;
      pair_angle(rel, p, cfg, cl, sl);
      const T c = static_cast<T>(cl);
      const T s = static_cast<T>(sl);
      const T x = nope_keys[i * cfg.d_head + 2 * p];
      const T y = nope_keys[i * cfg.d_head + 2 * p + 1];
      k_rel[2 * p] = x * c - y * s;
      k_rel[2 * p + 1] = x * s + y * c;
    }
    double dot = 0.0;
    for (std::uint32_t d = 0; d < cfg.d_head; ++d)
      dot += static_cast<double>(q[d]) * static_cast<double>(k_rel[d]);
    scores[i] = dot * scale;
  }
  return attention_over_scores<T>(scores, values, mask, cfg.d_head);
}

}  // namespace

std::vector<float> rope_rotate(std::span<const float> v, std::int64_t position, const AttnConfig& cfg) {
  return rope_rotate_impl<float>(v, position, cfg);
}
std::vector<double> rope_rotate(std::span<const double> v, std::int64_t position, const AttnConfig& cfg) {
  return rope_rotate_impl<double>(v, position, cfg);
}

std::vector<float> attention_pre_applied(std::span<const float> q, std::int64_t pos_q,
                                         std::span<const float> keys_with_rope, std::span<const float> values,
                                         std::span<const std::uint8_t> mask, const AttnConfig& cfg) {
  return attention_pre_applied_impl<float>(q, pos_q, keys_with_rope, values, mask, cfg);
}
std::vector<double> attention_pre_applied(std::span<const double> q, std::int64_t pos_q,
                                          std::span<const double> keys_with_rope, std::span<const double> values,
                                          std::span<const std::uint8_t> mask, const AttnConfig& cfg) {
  return attention_pre_applied_impl<double>(q, pos_q, keys_with_rope, values, mask, cfg);
}

std::vector<float> attention_fused(std::span<const float> q, std::int64_t pos_q, std::span<const float> nope_keys,
                                   std::span<const std::int64_t> key_positions, std::span<const float> values,
                                   std::span<const std::uint8_t> mask, const AttnConfig& cfg) {
  return attention_fused_impl<float>(q, pos_q, nope_keys, key_positions, values, mask, cfg);
}
std::vector<double> attention_fused(std::span<const double> q, std::int64_t pos_q, std::span<const double> nope_keys,
                                    std::span<const std::int64_t> key_positions, std::span<const double> values,
                                    std::span<const std::uint8_t> mask, const AttnConfig& cfg) {
  return attention_fused_impl<double>(q, pos_q, nope_keys, key_positions, values, mask, cfg);
}

float ToyLayer::component(Token token, std::uint32_t dim, std::uint32_t role) const {
  const std::uint64_t bits = mix_seed(seed_, (static_cast<std::uint64_t>(role) << 32) | static_cast<std::uint32_t>(token), dim);
  // Top 53 bits to a double in [0, 1), mapped to [-1, 1).
  const double unit = static_cast<double>(bits >> 11) * 0x1.0p-53;
  return static_cast<float>(2.0 * unit - 1.0);
}

void ToyLayer::project(Token token, std::span<float> k_out, std::span<float> v_out) const {
  if (k_out.size() != d_head_ || v_out.size() != d_head_)
    raise(ErrorCode::DimensionMismatch, "projection buffer size mismatch");
  for (std::uint32_t d = 0; d < d_head_; ++d) {
    k_out[d] = component(token, d, 1);
    v_out[d] = component(token, d, 2);
  }
}

std::vector<float> ToyLayer::query(Token token) const {
  std::vector<float> q(d_head_);
  for (std::uint32_t d = 0; d < d_head_; ++d) q[d] = component(token, d, 0);
  return q;
}

void materialize_segment(const ToyLayer& layer, std::span<const Token> padded_tokens,
                         std::span<const TokenSpan> recompute_spans, std::span<KvPage*> pages,
                         std::uint32_t block_size) {
  const std::uint32_t d = layer.d_head();
  for (const TokenSpan& span : recompute_spans) {
    if (span.end < span.begin || span.end > padded_tokens.size())
      raise(ErrorCode::SpanOutOfRange, "recompute span exceeds padded tokens");
    if (span.end > pages.size() * block_size)
      raise(ErrorCode::SpanOutOfRange, "recompute span exceeds provided pages");
    for (std::size_t pos = span.begin; pos < span.end; ++pos) {
      KvPage& page = *pages[pos / block_size];
      const std::size_t slot = pos % block_size;
      float* k = page.keys.data() + slot * d;
      float* v = page.values.data() + slot * d;
      if (padded_tokens[pos] == kPadToken) {
        std::fill(k, k + d, 0.0f);
        std::fill(v, v + d, 0.0f);
        page.valid[slot] = 0;
      } else {
        layer.project(padded_tokens[pos], std::span<float>(k, d), std::span<float>(v, d));
        page.valid[slot] = 1;
      }
    }
  }
}

std::vector<double> kv_deviation(std::span<const KvPage> full_recompute_pages, std::span<const KvPage> reused_pages) {
  if (full_recompute_pages.size() != reused_pages.size())
    raise(ErrorCode::ShapeMismatch, "page count mismatch");
  std::vector<double> out;
  out.reserve(full_recompute_pages.size());
  for (std::size_t i = 0; i < full_recompute_pages.size(); ++i) {
    const KvPage& a = full_recompute_pages[i];
    const KvPage& b = reused_pages[i];
    if (a.keys.size() != b.keys.size() || a.values.size() != b.values.size())
      raise(ErrorCode::ShapeMismatch, "page shape mismatch at block " + std::to_string(i));
    double sum = 0.0;
    for (std::size_t j = 0; j < a.keys.size(); ++j) {
      const double dk = static_cast<double>(a.keys[j]) - static_cast<double>(b.keys[j]);
      sum += dk * dk;
    }
    for (std::size_t j = 0; j < a.values.size(); ++j) {
      const double dv = static_cast<double>(a.values[j]) - static_cast<double>(b.values[j]);
      sum += dv * dv;
    }
    out.push_back(std::sqrt(sum));
  }
  return out;
}

}  // namespace mepic
