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

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wayspeak/tensor.hpp"

namespace wayspeak {

using ParamList = std::vector<std::pair<std::string, Tensor>>;

// The five feature-dropout sites. Sites 2-5 live inside the transformer
// blocks; site 1 masks input environment features (angles are never
// dropped). All sites are inert in eval mode.
struct MfdConfig {
  double p1_env = 0.0;
  double p2_activation = 0.0;
  double p3_attention = 0.0;
  double p4_qkv = 0.0;
  double p5_output = 0.0;

  void validate() const;
  bool all_zero() const {
    return p1_env == 0.0 && p2_activation == 0.0 && p3_attention == 0.0 &&
           p4_qkv == 0.0 && p5_output == 0.0;
  }
};

// Lower-triangular attendability: position t sees positions <= t.
std::vector<std::uint8_t> causal_mask(std::size_t t);

// Sinusoidal position table, [T, d_model]: even dims sin(t / 10000^(2i/d)),
// odd dims cos of the same argument. d_model must be even.
Tensor positional_encoding(std::size_t t, std::size_t d_model);

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

// Scaled dot-product attention over H heads with combined projections;
// head i owns columns [i*head_dim, (i+1)*head_dim) of Q/K/V. Dropout
// sites: MFD-4 on the projected Q/K/V, MFD-3 on the attention weights.
// Residual & layernorm are the caller's.
struct MultiHeadAttention {
  std::size_t heads = 0;
  std::size_t head_dim = 0;
  Linear proj_q, proj_k, proj_v, proj_out;
  double qkv_dropout_p = 0.0;   // MFD-4
  double attn_dropout_p = 0.0;  // MFD-3

  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t d_model, std::size_t heads,
                     std::size_t head_dim, Rng& rng);

  // query: [Tq, d_model]; key_value: [Tkv, d_model];
  // mask: row-major [Tq*Tkv], true = attendable, or nullptr for all-on.
  Tensor attend(const Tensor& query, const Tensor& key_value,
                const std::vector<std::uint8_t>* mask, bool training,
                Rng& rng) const;

  // Eval-mode attention weights of one head, for inspection and tests.
  Tensor head_weights(const Tensor& query, const Tensor& key_value,
                      std::size_t head,
                      const std::vector<std::uint8_t>* mask = nullptr) const;

  void collect(ParamList& out, const std::string& prefix) const;
};

// w2(dropout(relu(w1 x + b1))) + b2, with MFD-2 after the activation.
struct FeedForward {
  Linear in, out;
  double activation_dropout_p = 0.0;  // MFD-2

  FeedForward() = default;
  FeedForward(std::size_t d_model, std::size_t hidden, Rng& rng);
  Tensor forward(const Tensor& x, bool training, Rng& rng) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

// Post-norm transformer encoder layer:
//   h = LN(selfattn(x) + x); y = LN(ffn(h) + h)
struct EncoderLayer {
  MultiHeadAttention attention;
  FeedForward ffn;
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;

  EncoderLayer() = default;
  EncoderLayer(std::size_t d_model, std::size_t heads, std::size_t head_dim,
               std::size_t ffn_hidden, Rng& rng);
  Tensor forward(const Tensor& x, bool training, Rng& rng) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

// Post-norm decoder layer: causal self-attention, cross-attention to the
// encoder memory, then the feed-forward block.
struct DecoderLayer {
  MultiHeadAttention self_attention;
  MultiHeadAttention cross_attention;
  FeedForward ffn;
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias, ln3_gain, ln3_bias;

  DecoderLayer() = default;
  DecoderLayer(std::size_t d_model, std::size_t heads, std::size_t head_dim,
               std::size_t ffn_hidden, Rng& rng);
  Tensor forward(const Tensor& x, const Tensor& memory,
                 const std::vector<std::uint8_t>& self_mask, bool training,
                 Rng& rng) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

// Applies per-site rates from an MfdConfig to a stack of layers.
void set_mfd(MultiHeadAttention& a, const MfdConfig& mfd);
void set_mfd(FeedForward& f, const MfdConfig& mfd);
void set_mfd(EncoderLayer& l, const MfdConfig& mfd);
void set_mfd(DecoderLayer& l, const MfdConfig& mfd);

}  // namespace wayspeak
