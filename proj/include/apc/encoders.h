// Copyright 2026 The apcspeech Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef APC_ENCODERS_H_
#define APC_ENCODERS_H_

// Autoregressive encoders: a residual stack of unidirectional GRUs and a
// causal (decoder-only) Transformer whose output projection is the
// transpose of its input projection.
//
// Sequences are N x d matrices, one row per frame. Batched entry points take
// a padded [B x N x d] block and return rows in utterance-major order
// (row b*N + t). Every encoder is strictly causal: output row t depends only
// on input rows <= t.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "apc/autograd.h"
#include "apc/params.h"
#include "json.hpp"

namespace apc {

// ---- GRU ------------------------------------------------------------------

// Gate order in the packed matrices is reset | update | candidate.
template <typename T>
struct GruLayer {
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
  Var<T> w_x;   // [input_dim x 3H]
  Var<T> u_rz;  // [H x 2H]
  Var<T> u_h;   // [H x H]
  Var<T> bias;  // [1 x 3H]

  static GruLayer Create(std::size_t input_dim, std::size_t hidden, Initializer& init);
  void AppendParams(const std::string& prefix, ParamList<T>& out) const;
  static std::size_t ParameterCount(std::size_t input_dim, std::size_t hidden) {
    return input_dim * 3 * hidden + hidden * 3 * hidden + 3 * hidden;
  }
};

// r = sigma(x Wr + h Ur + br), z = sigma(x Wz + h Uz + bz),
// c = tanh(x Wc + (r . h) Uc + bc), h' = (1 - z) . h + z . c
template <typename T>
Var<T> GruCell(const Var<T>& x, const Var<T>& h_prev, const GruLayer<T>& layer);

// Runs a layer over a time-major input whose rows t*B .. t*B+B-1 hold step
// t for B sequences; the initial state is zero. With reverse the recurrence
// runs from the last step to the first. Output keeps the input row order.
template <typename T>
Var<T> GruSequence(const Var<T>& inputs, std::size_t batch, const GruLayer<T>& layer,
                   bool reverse = false);

// Row-order permutations between a padded [B x N x d] block laid out
// utterance-major (b*N + t) and time-major (t*B + b).
std::vector<std::int64_t> TimeMajorToUtteranceMajor(std::size_t batch, std::size_t steps);
std::vector<std::int64_t> UtteranceMajorToTimeMajor(std::size_t batch, std::size_t steps);

// [B x N x d] block to [N*B x d] with row t*B + b.
template <typename T>
Tensor<T> PaddedToTimeMajor(const Tensor<T>& padded);

// Stacked GRU layers over time-major input. Layers after the first add a
// residual connection when enabled. next_seed is drawn once per dropout mask.
template <typename T>
std::vector<Var<T>> GruStack(const std::vector<GruLayer<T>>& layers, const Var<T>& time_major,
                             std::size_t batch, bool residual, double dropout,
                             const std::function<std::uint64_t()>& next_seed);

// ---- shared encoder interface ----------------------------------------------

enum class EncoderKind { kRnn, kTransformer, kCpc };

const char* EncoderKindName(EncoderKind kind);

template <typename T>
struct EncoderOutput {
  std::vector<Var<T>> hidden;  // h_1 .. h_L, each N x width
  Var<T> predictions;          // y, N x d
  const Var<T>& last() const { return hidden.back(); }
};

template <typename T>
struct BatchOutput {
  Var<T> last_hidden;  // [B*N x width], utterance-major
  Var<T> predictions;  // [B*N x d], utterance-major
};

template <typename T>
class Encoder {
 public:
  virtual ~Encoder() = default;

  virtual EncoderKind kind() const = 0;
  virtual std::size_t input_dim() const = 0;
  // Width of h_L, the extracted representation.
  virtual std::size_t width() const = 0;
  virtual std::size_t num_layers() const = 0;

  // One utterance, x is N x d.
  virtual EncoderOutput<T> Forward(const Var<T>& x) const = 0;
  // Padded block [B x N x d].
  virtual BatchOutput<T> ForwardBatch(const Tensor<T>& padded) const = 0;

  virtual ParamList<T> Params() const = 0;
  virtual nlohmann::json Config() const = 0;

  // Dropout is applied only while training is on and the rate is nonzero.
  void set_training(bool on) const { training_ = on; }
  bool training() const { return training_; }
  // Dropout masks are drawn from consecutive seeds starting here.
  void set_dropout_seed(std::uint64_t seed) const { dropout_seed_ = seed; }

 protected:
  std::uint64_t NextDropoutSeed() const { return dropout_seed_++; }

 private:
  mutable bool training_ = false;
  mutable std::uint64_t dropout_seed_ = 0x5eedULL;
};

// ---- RNN encoder ----------------------------------------------------------

struct RnnEncoderConfig {
  std::size_t input_dim = 80;
  std::size_t hidden = 512;
  std::size_t layers = 4;
  bool residual = true;
  double dropout = 0.0;

  nlohmann::json ToJson() const;
  static RnnEncoderConfig FromJson(const nlohmann::json& j);
  void Validate() const;
};

template <typename T>
class RnnEncoder : public Encoder<T> {
 public:
  RnnEncoder(const RnnEncoderConfig& cfg, std::uint64_t seed);

  EncoderKind kind() const override { return EncoderKind::kRnn; }
  std::size_t input_dim() const override { return cfg_.input_dim; }
  std::size_t width() const override { return cfg_.hidden; }
  std::size_t num_layers() const override { return cfg_.layers; }

  EncoderOutput<T> Forward(const Var<T>& x) const override;
  BatchOutput<T> ForwardBatch(const Tensor<T>& padded) const override;
  ParamList<T> Params() const override;
  nlohmann::json Config() const override { return cfg_.ToJson(); }

  const RnnEncoderConfig& config() const { return cfg_; }
  std::vector<GruLayer<T>>& layers() { return layers_; }
  const Var<T>& projection() const { return proj_; }

  static std::size_t ParameterCount(const RnnEncoderConfig& cfg);

 private:
  // Time-major forward shared by both entry points; returns every layer.
  std::vector<Var<T>> RunLayers(const Var<T>& time_major, std::size_t batch) const;

  RnnEncoderConfig cfg_;
  std::vector<GruLayer<T>> layers_;
  Var<T> proj_;  // W, [hidden x d]
};

// ---- Transformer encoder --------------------------------------------------

struct TransformerEncoderConfig {
  std::size_t input_dim = 80;
  std::size_t d_model = 512;
  std::size_t heads = 8;
  std::size_t ffn_hidden = 2048;
  std::size_t layers = 4;
  bool pre_norm = false;
  bool final_norm = false;
  double dropout = 0.0;
  double layer_norm_eps = 1e-5;

  nlohmann::json ToJson() const;
  static TransformerEncoderConfig FromJson(const nlohmann::json& j);
  void Validate() const;
};

template <typename T>
struct TransformerBlockParams {
  Var<T> w_qkv;  // [D x 3D]
  Var<T> b_qkv;  // [1 x 3D]
  Var<T> w_o;    // [D x D]
  Var<T> b_o;
  Var<T> ln1_gain, ln1_bias;
  Var<T> w_ff1;  // [D x F]
  Var<T> b_ff1;
  Var<T> w_ff2;  // [F x D]
  Var<T> b_ff2;
  Var<T> ln2_gain, ln2_bias;

  static TransformerBlockParams Create(const TransformerEncoderConfig& cfg, Initializer& init);
  void AppendParams(const std::string& prefix, ParamList<T>& out) const;
};

// PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(same).
template <typename T>
Tensor<T> SinusoidalPositionalEncoding(std::size_t length, std::size_t d_model);

// Multi-head attention where row i attends to rows 0..i. When `weights` is
// given it receives one N x N probability matrix per head.
template <typename T>
Var<T> CausalSelfAttention(const Var<T>& h, const TransformerBlockParams<T>& block,
                           std::size_t heads, std::vector<Tensor<T>>* weights = nullptr);

// Post-norm by default: a = LN(h + Attn(h)); h' = LN(a + FFN(a)) with a
// GELU MLP. Pre-norm: a = h + Attn(LN(h)); h' = a + FFN(LN(a)).
template <typename T>
Var<T> TransformerBlock(const Var<T>& h, const TransformerBlockParams<T>& block,
                        const TransformerEncoderConfig& cfg);

template <typename T>
class TransformerEncoder : public Encoder<T> {
 public:
  TransformerEncoder(const TransformerEncoderConfig& cfg, std::uint64_t seed);

  EncoderKind kind() const override { return EncoderKind::kTransformer; }
  std::size_t input_dim() const override { return cfg_.input_dim; }
  std::size_t width() const override { return cfg_.d_model; }
  std::size_t num_layers() const override { return cfg_.layers; }

  EncoderOutput<T> Forward(const Var<T>& x) const override;
  BatchOutput<T> ForwardBatch(const Tensor<T>& padded) const override;
  ParamList<T> Params() const override;
  nlohmann::json Config() const override { return cfg_.ToJson(); }

  const TransformerEncoderConfig& config() const { return cfg_; }
  std::vector<TransformerBlockParams<T>>& blocks() { return blocks_; }
  // W_in, [d x d_model]. W_out is its transpose and has no storage of its own.
  const Var<T>& input_projection() const { return w_in_; }
  Tensor<T> OutputProjection() const;
  // h_0 = W_in x + P(x) for an N x d input.
  Var<T> Embed(const Var<T>& x) const;

  static std::size_t ParameterCount(const TransformerEncoderConfig& cfg);

 private:
  TransformerEncoderConfig cfg_;
  Var<T> w_in_;
  std::vector<TransformerBlockParams<T>> blocks_;
  Var<T> final_gain_, final_bias_;
};

// Builds either encoder from its Config() JSON (which carries "kind").
template <typename T>
std::unique_ptr<Encoder<T>> MakeEncoder(const nlohmann::json& config, std::uint64_t seed);

}  // namespace apc

#endif  // APC_ENCODERS_H_
