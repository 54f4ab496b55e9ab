// Copyright 2026 The Wayspeak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "wayspeak/layers.hpp"

#include <cmath>

#include "wayspeak/error.hpp"

namespace wayspeak {

void MfdConfig::validate() const {
  for (double p : {p1_env, p2_activation, p3_attention, p4_qkv, p5_output}) {
    if (p < 0.0 || p >= 1.0) {
      throw ParameterError("feature dropout rate must be in [0,1), got " +
                           std::to_string(p));
    }
  }
}

std::vector<std::uint8_t> causal_mask(std::size_t t) {
  if (t == 0) throw ParameterError("causal_mask: length must be >= 1");
  std::vector<std::uint8_t> m(t * t, 0);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j <= i; ++j) m[i * t + j] = 1;
  }
  return m;
}

Tensor positional_encoding(std::size_t t, std::size_t d_model) {
  if (d_model == 0 || d_model % 2 != 0) {
    throw ParameterError("positional_encoding: dimension must be even, got " +
                         std::to_string(d_model));
  }
  Tensor pe({t, d_model}, 0.0);
  for (std::size_t pos = 0; pos < t; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double angle =
          static_cast<double>(pos) /
          std::pow(10000.0, 2.0 * static_cast<double>(i) /
                                static_cast<double>(d_model));
      pe.values()[pos * d_model + 2 * i] = std::sin(angle);
      pe.values()[pos * d_model + 2 * i + 1] = std::cos(angle);
    }
  }
  return pe;
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

Linear::Linear(std::size_t in, std::size_t out, Rng& rng)
    : weight(Tensor::fan_in_uniform({in, out}, in, rng)),
      bias(Tensor::fan_in_uniform({out}, in, rng)) {}

Tensor Linear::forward(const Tensor& x) const {
  return add(matmul(x, weight), bias);
}

void Linear::collect(ParamList& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

// ---------------------------------------------------------------------------
// MultiHeadAttention
// ---------------------------------------------------------------------------

MultiHeadAttention::MultiHeadAttention(std::size_t d_model, std::size_t heads,
                                       std::size_t head_dim, Rng& rng)
    : heads(heads),
      head_dim(head_dim),
      proj_q(d_model, heads * head_dim, rng),
      proj_k(d_model, heads * head_dim, rng),
      proj_v(d_model, heads * head_dim, rng),
      proj_out(heads * head_dim, d_model, rng) {
  if (heads == 0 || head_dim == 0) {
    throw ParameterError("attention: heads and head_dim must be positive");
  }
}

Tensor MultiHeadAttention::attend(const Tensor& query, const Tensor& key_value,
                                  const std::vector<std::uint8_t>* mask,
                                  bool training, Rng& rng) const {
  if (query.ndim() != 2 || key_value.ndim() != 2) {
    throw DimensionError("attend: query " + shape_str(query.shape()) +
                         " and key_value " + shape_str(key_value.shape()) +
                         " must be 2-D");
  }
  const std::size_t tq = query.shape()[0];
  const std::size_t tkv = key_value.shape()[0];
  if (mask && mask->size() != tq * tkv) {
    throw DimensionError("attend: mask has " + std::to_string(mask->size()) +
                         " entries for a " + std::to_string(tq) + "x" +
                         std::to_string(tkv) + " attention matrix");
  }

  Tensor q = proj_q.forward(query);
  Tensor k = proj_k.forward(key_value);
  Tensor v = proj_v.forward(key_value);
  q = dropout(q, qkv_dropout_p, training, rng);
  k = dropout(k, qkv_dropout_p, training, rng);
  v = dropout(v, qkv_dropout_p, training, rng);

  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Tensor merged;
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t c0 = h * head_dim, c1 = (h + 1) * head_dim;
    Tensor scores =
        scale(matmul_nt(slice_cols(q, c0, c1), slice_cols(k, c0, c1)),
              inv_sqrt_dk);
    Tensor weights = mask ? masked_softmax_rows(scores, *mask)
                          : softmax(scores, 1);
    weights = dropout(weights, attn_dropout_p, training, rng);
    Tensor head_out = matmul(weights, slice_cols(v, c0, c1));
    merged = h == 0 ? head_out : concat_cols(merged, head_out);
  }
  return proj_out.forward(merged);
}

Tensor MultiHeadAttention::head_weights(
    const Tensor& query, const Tensor& key_value, std::size_t head,
    const std::vector<std::uint8_t>* mask) const {
  if (head >= heads) {
    throw IndexError("head_weights: head " + std::to_string(head) + " of " +
                     std::to_string(heads));
  }
  NoGradGuard ng;
  const std::size_t c0 = head * head_dim, c1 = (head + 1) * head_dim;
  Tensor q = slice_cols(proj_q.forward(query), c0, c1);
  Tensor k = slice_cols(proj_k.forward(key_value), c0, c1);
  Tensor scores =
      scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(head_dim)));
  return mask ? masked_softmax_rows(scores, *mask) : softmax(scores, 1);
}

void MultiHeadAttention::collect(ParamList& out,
                                 const std::string& prefix) const {
  proj_q.collect(out, prefix + ".q");
  proj_k.collect(out, prefix + ".k");
  proj_v.collect(out, prefix + ".v");
  proj_out.collect(out, prefix + ".out");
}

// ---------------------------------------------------------------------------
// FeedForward
// ---------------------------------------------------------------------------

FeedForward::FeedForward(std::size_t d_model, std::size_t hidden, Rng& rng)
    : in(d_model, hidden, rng), out(hidden, d_model, rng) {}

Tensor FeedForward::forward(const Tensor& x, bool training, Rng& rng) const {
  Tensor h = relu(in.forward(x));
  h = dropout(h, activation_dropout_p, training, rng);
  return out.forward(h);
}

void FeedForward::collect(ParamList& out_list,
                          const std::string& prefix) const {
  in.collect(out_list, prefix + ".in");
  out.collect(out_list, prefix + ".out");
}

// ---------------------------------------------------------------------------
// Encoder / decoder layers
// ---------------------------------------------------------------------------

EncoderLayer::EncoderLayer(std::size_t d_model, std::size_t heads,
                           std::size_t head_dim, std::size_t ffn_hidden,
                           Rng& rng)
    : attention(d_model, heads, head_dim, rng),
      ffn(d_model, ffn_hidden, rng),
      ln1_gain({d_model}, 1.0, true),
      ln1_bias({d_model}, 0.0, true),
      ln2_gain({d_model}, 1.0, true),
      ln2_bias({d_model}, 0.0, true) {}

Tensor EncoderLayer::forward(const Tensor& x, bool training, Rng& rng) const {
  Tensor h = layernorm(add(attention.attend(x, x, nullptr, training, rng), x),
                       ln1_gain, ln1_bias);
  return layernorm(add(ffn.forward(h, training, rng), h), ln2_gain, ln2_bias);
}

void EncoderLayer::collect(ParamList& out, const std::string& prefix) const {
  attention.collect(out, prefix + ".attn");
  ffn.collect(out, prefix + ".ffn");
  out.emplace_back(prefix + ".ln1.gain", ln1_gain);
  out.emplace_back(prefix + ".ln1.bias", ln1_bias);
  out.emplace_back(prefix + ".ln2.gain", ln2_gain);
  out.emplace_back(prefix + ".ln2.bias", ln2_bias);
}

DecoderLayer::DecoderLayer(std::size_t d_model, std::size_t heads,
                           std::size_t head_dim, std::size_t ffn_hidden,
                           Rng& rng)
    : self_attention(d_model, heads, head_dim, rng),
      cross_attention(d_model, heads, head_dim, rng),
      ffn(d_model, ffn_hidden, rng),
      ln1_gain({d_model}, 1.0, true),
      ln1_bias({d_model}, 0.0, true),
      ln2_gain({d_model}, 1.0, true),
      ln2_bias({d_model}, 0.0, true),
      ln3_gain({d_model}, 1.0, true),
      ln3_bias({d_model}, 0.0, true) {}

Tensor DecoderLayer::forward(const Tensor& x, const Tensor& memory,
                             const std::vector<std::uint8_t>& self_mask,
                             bool training, Rng& rng) const {
  Tensor h = layernorm(
      add(self_attention.attend(x, x, &self_mask, training, rng), x), ln1_gain,
      ln1_bias);
  h = layernorm(
      add(cross_attention.attend(h, memory, nullptr, training, rng), h),
      ln2_gain, ln2_bias);
  return layernorm(add(ffn.forward(h, training, rng), h), ln3_gain, ln3_bias);
}

void DecoderLayer::collect(ParamList& out, const std::string& prefix) const {
  self_attention.collect(out, prefix + ".self");
  cross_attention.collect(out, prefix + ".cross");
  ffn.collect(out, prefix + ".ffn");
  out.emplace_back(prefix + ".ln1.gain", ln1_gain);
  out.emplace_back(prefix + ".ln1.bias", ln1_bias);
  out.emplace_back(prefix + ".ln2.gain", ln2_gain);
  out.emplace_back(prefix + ".ln2.bias", ln2_bias);
  out.emplace_back(prefix + ".ln3.gain", ln3_gain);
  out.emplace_back(prefix + ".ln3.bias", ln3_bias);
}

void set_mfd(MultiHeadAttention& a, const MfdConfig& mfd) {
  a.attn_dropout_p = mfd.p3_attention;
  a.qkv_dropout_p = mfd.p4_qkv;
}

void set_mfd(FeedForward& f, const MfdConfig& mfd) {
  f.activation_dropout_p = mfd.p2_activation;
}

void set_mfd(EncoderLayer& l, const MfdConfig& mfd) {
  set_mfd(l.attention, mfd);
  set_mfd(l.ffn, mfd);
}

void set_mfd(DecoderLayer& l, const MfdConfig& mfd) {
  set_mfd(l.self_attention, mfd);
  set_mfd(l.cross_attention, mfd);
  set_mfd(l.ffn, mfd);
}

}  // namespace wayspeak
