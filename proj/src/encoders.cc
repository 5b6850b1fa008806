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

#include "apc/encoders.h"

#include <cmath>

#include "apc/cpc.h"
#include "apc/error.h"

namespace apc {

// ---- GRU ------------------------------------------------------------------

template <typename T>
GruLayer<T> GruLayer<T>::Create(std::size_t input_dim, std::size_t hidden, Initializer& init) {
  if (input_dim == 0 || hidden == 0) throw ConfigError("GRU dims must be positive");
  GruLayer<T> g;
  g.input_dim = input_dim;
  g.hidden = hidden;
  g.w_x = init.Uniform<T>(input_dim, 3 * hidden);
  g.u_rz = init.Uniform<T>(hidden, 2 * hidden);
  g.u_h = init.Uniform<T>(hidden, hidden);
  g.bias = init.Filled<T>(1, 3 * hidden, T(0));
  return g;
}

template <typename T>
void GruLayer<T>::AppendParams(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".w_x", w_x});
  out.push_back({prefix + ".u_rz", u_rz});
  out.push_back({prefix + ".u_h", u_h});
  out.push_back({prefix + ".bias", bias});
}

namespace {

// One recurrence step given the precomputed input contributions
// x W_{r,z} + b_{r,z} (B x 2H) and x W_c + b_c (B x H).
template <typename T>
Var<T> GruStep(const Var<T>& gx_rz, const Var<T>& gx_c, const Var<T>& h, const GruLayer<T>& g) {
  const std::size_t H = g.hidden;
  Var<T> rz = Sigmoid(Add(gx_rz, Matmul(h, g.u_rz)));
  Var<T> r = SliceCols(rz, 0, H);
  Var<T> z = SliceCols(rz, H, 2 * H);
  Var<T> cand = Tanh(Add(gx_c, Matmul(Mul(r, h), g.u_h)));
  return Add(h, Mul(z, Sub(cand, h)));
}

template <typename T>
void CheckGruInput(const Var<T>& x, const GruLayer<T>& g, const char* where) {
  if (x.shape().size() != 2 || x.cols() != g.input_dim) {
    throw DimensionError(std::string(where) + ": input " + ShapeString(x.shape()) +
                         " does not match GRU input dim " + std::to_string(g.input_dim));
  }
}

}  // namespace

template <typename T>
Var<T> GruCell(const Var<T>& x, const Var<T>& h_prev, const GruLayer<T>& layer) {
  CheckGruInput(x, layer, "gru_cell");
  if (h_prev.shape() != Shape{x.rows(), layer.hidden}) {
    throw DimensionError("gru_cell: state " + ShapeString(h_prev.shape()) + " expected [" +
                         std::to_string(x.rows()) + "x" + std::to_string(layer.hidden) + "]");
  }
  const std::size_t H = layer.hidden;
  Var<T> gx = Add(Matmul(x, layer.w_x), layer.bias);
  return GruStep(SliceCols(gx, 0, 2 * H), SliceCols(gx, 2 * H, 3 * H), h_prev, layer);
}

template <typename T>
Var<T> GruSequence(const Var<T>& inputs, std::size_t batch, const GruLayer<T>& layer,
                   bool reverse) {
  CheckGruInput(inputs, layer, "gru_sequence");
  if (batch == 0 || inputs.rows() % batch != 0) {
    throw DimensionError("gru_sequence: " + std::to_string(inputs.rows()) +
                         " rows do not split into batch " + std::to_string(batch));
  }
  const std::size_t steps = inputs.rows() / batch;
  const std::size_t H = layer.hidden;
  Var<T> gx = Add(Matmul(inputs, layer.w_x), layer.bias);
  Var<T> gx_rz = SliceCols(gx, 0, 2 * H);
  Var<T> gx_c = SliceCols(gx, 2 * H, 3 * H);
  Var<T> h = Var<T>::Constant(Tensor<T>(batch, H));
  std::vector<Var<T>> outputs(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    const std::size_t t = reverse ? steps - 1 - i : i;
    h = GruStep(SliceRows(gx_rz, t * batch, (t + 1) * batch),
                SliceRows(gx_c, t * batch, (t + 1) * batch), h, layer);
    outputs[t] = h;
  }
  return ConcatRows<T>(outputs);
}

std::vector<std::int64_t> TimeMajorToUtteranceMajor(std::size_t batch, std::size_t steps) {
  std::vector<std::int64_t> idx(batch * steps);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < steps; ++t) idx[b * steps + t] = std::int64_t(t * batch + b);
  return idx;
}

std::vector<std::int64_t> UtteranceMajorToTimeMajor(std::size_t batch, std::size_t steps) {
  std::vector<std::int64_t> idx(batch * steps);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t b = 0; b < batch; ++b) idx[t * batch + b] = std::int64_t(b * steps + t);
  return idx;
}

const char* EncoderKindName(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::kRnn: return "rnn";
    case EncoderKind::kTransformer: return "transformer";
    case EncoderKind::kCpc: return "cpc";
  }
  return "?";
}

namespace {

template <typename T>
void CheckPadded(const Tensor<T>& padded, std::size_t input_dim) {
  if (padded.ndim() != 3 || padded.dim(2) != input_dim) {
    throw DimensionError("padded batch " + ShapeString(padded.shape()) + " expected [B x N x " +
                         std::to_string(input_dim) + "]");
  }
}

template <typename T>
void CheckSequence(const Var<T>& x, std::size_t input_dim) {
  if (x.shape().size() != 2 || x.cols() != input_dim) {
    throw DimensionError("sequence " + ShapeString(x.shape()) + " expected [N x " +
                         std::to_string(input_dim) + "]");
  }
}

}  // namespace

// ---- RNN encoder ----------------------------------------------------------

nlohmann::json RnnEncoderConfig::ToJson() const {
  return {{"kind", "rnn"},         {"input_dim", input_dim}, {"hidden", hidden},
          {"layers", layers},      {"residual", residual},   {"dropout", dropout}};
}

RnnEncoderConfig RnnEncoderConfig::FromJson(const nlohmann::json& j) {
  RnnEncoderConfig c;
  c.input_dim = j.value("input_dim", c.input_dim);
  c.hidden = j.value("hidden", c.hidden);
  c.layers = j.value("layers", c.layers);
  c.residual = j.value("residual", c.residual);
  c.dropout = j.value("dropout", c.dropout);
  return c;
}

void RnnEncoderConfig::Validate() const {
  if (input_dim == 0 || hidden == 0 || layers == 0) {
    throw ConfigError("rnn encoder needs positive input_dim, hidden and layers");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
}

template <typename T>
RnnEncoder<T>::RnnEncoder(const RnnEncoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.Validate();
  Initializer init(seed);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    layers_.push_back(
        GruLayer<T>::Create(l == 0 ? cfg_.input_dim : cfg_.hidden, cfg_.hidden, init));
  }
  proj_ = init.Uniform<T>(cfg_.hidden, cfg_.input_dim);
}

template <typename T>
Tensor<T> PaddedToTimeMajor(const Tensor<T>& padded) {
  if (padded.ndim() != 3) throw DimensionError("expected [B x N x d], got " + ShapeString(padded.shape()));
  const std::size_t B = padded.dim(0), N = padded.dim(1), d = padded.dim(2);
  Tensor<T> tm(B * N, d);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < N; ++t) {
      const T* src = padded.data() + (b * N + t) * d;
      std::copy(src, src + d, tm.data() + (t * B + b) * d);
    }
  return tm;
}

template <typename T>
std::vector<Var<T>> GruStack(const std::vector<GruLayer<T>>& layers, const Var<T>& time_major,
                             std::size_t batch, bool residual, double dropout,
                             const std::function<std::uint64_t()>& next_seed) {
  std::vector<Var<T>> hidden;
  Var<T> h = time_major;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Var<T> out = GruSequence(h, batch, layers[l]);
    // Residual connections start at layer 2, where widths agree.
    if (l > 0 && residual) out = Add(out, h);
    if (dropout > 0.0 && l + 1 < layers.size()) out = Dropout(out, dropout, next_seed());
    hidden.push_back(out);
    h = out;
  }
  return hidden;
}

template <typename T>
std::vector<Var<T>> RnnEncoder<T>::RunLayers(const Var<T>& time_major, std::size_t batch) const {
  const double rate = this->training() ? cfg_.dropout : 0.0;
  return GruStack(layers_, time_major, batch, cfg_.residual, rate,
                  [this] { return this->NextDropoutSeed(); });
}

template <typename T>
EncoderOutput<T> RnnEncoder<T>::Forward(const Var<T>& x) const {
  CheckSequence(x, cfg_.input_dim);
  EncoderOutput<T> out;
  out.hidden = RunLayers(x, 1);
  out.predictions = Matmul(out.hidden.back(), proj_);
  return out;
}

template <typename T>
BatchOutput<T> RnnEncoder<T>::ForwardBatch(const Tensor<T>& padded) const {
  CheckPadded(padded, cfg_.input_dim);
  const std::size_t B = padded.dim(0), N = padded.dim(1);
  auto hidden = RunLayers(Var<T>::Constant(PaddedToTimeMajor(padded)), B);
  BatchOutput<T> out;
  out.last_hidden = GatherRows<T>(hidden.back(), TimeMajorToUtteranceMajor(B, N));
  out.predictions = Matmul(out.last_hidden, proj_);
  return out;
}

template <typename T>
ParamList<T> RnnEncoder<T>::Params() const {
  ParamList<T> out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].AppendParams("rnn.gru" + std::to_string(l), out);
  }
  out.push_back({"rnn.proj", proj_});
  return out;
}

template <typename T>
std::size_t RnnEncoder<T>::ParameterCount(const RnnEncoderConfig& cfg) {
  std::size_t n = GruLayer<T>::ParameterCount(cfg.input_dim, cfg.hidden);
  n += (cfg.layers - 1) * GruLayer<T>::ParameterCount(cfg.hidden, cfg.hidden);
  return n + cfg.hidden * cfg.input_dim;
}

// ---- Transformer ------------------------------------------------------------

nlohmann::json TransformerEncoderConfig::ToJson() const {
  return {{"kind", "transformer"}, {"input_dim", input_dim},   {"d_model", d_model},
          {"heads", heads},        {"ffn_hidden", ffn_hidden}, {"layers", layers},
          {"pre_norm", pre_norm},  {"final_norm", final_norm}, {"dropout", dropout},
          {"layer_norm_eps", layer_norm_eps}};
}

TransformerEncoderConfig TransformerEncoderConfig::FromJson(const nlohmann::json& j) {
  TransformerEncoderConfig c;
  c.input_dim = j.value("input_dim", c.input_dim);
  c.d_model = j.value("d_model", c.d_model);
  c.heads = j.value("heads", c.heads);
  c.ffn_hidden = j.value("ffn_hidden", c.ffn_hidden);
  c.layers = j.value("layers", c.layers);
  c.pre_norm = j.value("pre_norm", c.pre_norm);
  c.final_norm = j.value("final_norm", c.final_norm);
  c.dropout = j.value("dropout", c.dropout);
  c.layer_norm_eps = j.value("layer_norm_eps", c.layer_norm_eps);
  return c;
}

void TransformerEncoderConfig::Validate() const {
  if (input_dim == 0 || d_model == 0 || heads == 0 || ffn_hidden == 0) {
    throw ConfigError("transformer dims must be positive");
  }
  if (d_model % heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by heads " +
                      std::to_string(heads));
  }
  if (d_model % 2 != 0) throw ConfigError("d_model must be even for sinusoidal encodings");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
}

template <typename T>
TransformerBlockParams<T> TransformerBlockParams<T>::Create(const TransformerEncoderConfig& cfg,
                                                            Initializer& init) {
  const std::size_t D = cfg.d_model, F = cfg.ffn_hidden;
  TransformerBlockParams<T> p;
  p.w_qkv = init.Uniform<T>(D, 3 * D);
  p.b_qkv = init.Filled<T>(1, 3 * D, T(0));
  p.w_o = init.Uniform<T>(D, D);
  p.b_o = init.Filled<T>(1, D, T(0));
  p.ln1_gain = init.Filled<T>(1, D, T(1));
  p.ln1_bias = init.Filled<T>(1, D, T(0));
  p.w_ff1 = init.Uniform<T>(D, F);
  p.b_ff1 = init.Filled<T>(1, F, T(0));
  p.w_ff2 = init.Uniform<T>(F, D);
  p.b_ff2 = init.Filled<T>(1, D, T(0));
  p.ln2_gain = init.Filled<T>(1, D, T(1));
  p.ln2_bias = init.Filled<T>(1, D, T(0));
  return p;
}

template <typename T>
void TransformerBlockParams<T>::AppendParams(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".attn.w_qkv", w_qkv});
  out.push_back({prefix + ".attn.b_qkv", b_qkv});
  out.push_back({prefix + ".attn.w_o", w_o});
  out.push_back({prefix + ".attn.b_o", b_o});
  out.push_back({prefix + ".ln1.gain", ln1_gain});
  out.push_back({prefix + ".ln1.bias", ln1_bias});
  out.push_back({prefix + ".ffn.w1", w_ff1});
  out.push_back({prefix + ".ffn.b1", b_ff1});
  out.push_back({prefix + ".ffn.w2", w_ff2});
  out.push_back({prefix + ".ffn.b2", b_ff2});
  out.push_back({prefix + ".ln2.gain", ln2_gain});
  out.push_back({prefix + ".ln2.bias", ln2_bias});
}

template <typename T>
Tensor<T> SinusoidalPositionalEncoding(std::size_t length, std::size_t d_model) {
  if (d_model == 0 || d_model % 2 != 0) {
    throw ConfigError("sinusoidal encoding needs an even d_model, got " + std::to_string(d_model));
  }
  Tensor<T> pe(length, d_model);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double angle =
          double(pos) / std::pow(10000.0, double(2 * i) / double(d_model));
      pe(pos, 2 * i) = static_cast<T>(std::sin(angle));
      pe(pos, 2 * i + 1) = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

template <typename T>
Var<T> CausalSelfAttention(const Var<T>& h, const TransformerBlockParams<T>& block,
                           std::size_t heads, std::vector<Tensor<T>>* weights) {
  const std::size_t D = block.w_qkv.rows();
  if (h.shape().size() != 2 || h.cols() != D) {
    throw DimensionError("attention input " + ShapeString(h.shape()) + " expected [N x " +
                         std::to_string(D) + "]");
  }
  const std::size_t dk = D / heads;
  const T scale = T(1) / std::sqrt(T(dk));
  Var<T> qkv = Add(Matmul(h, block.w_qkv), block.b_qkv);
  std::vector<Var<T>> outs;
  outs.reserve(heads);
  if (weights) weights->clear();
  for (std::size_t i = 0; i < heads; ++i) {
    Var<T> q = SliceCols(qkv, i * dk, (i + 1) * dk);
    Var<T> k = SliceCols(qkv, D + i * dk, D + (i + 1) * dk);
    Var<T> v = SliceCols(qkv, 2 * D + i * dk, 2 * D + (i + 1) * dk);
    Var<T> p = Softmax(MaskFuture(Scale(MatmulNT(q, k), scale)), 1);
    if (weights) weights->push_back(p.value());
    outs.push_back(Matmul(p, v));
  }
  Var<T> cat = heads == 1 ? outs[0] : ConcatCols<T>(outs);
  return Add(Matmul(cat, block.w_o), block.b_o);
}

template <typename T>
Var<T> TransformerBlock(const Var<T>& h, const TransformerBlockParams<T>& block,
                        const TransformerEncoderConfig& cfg) {
  const T eps = static_cast<T>(cfg.layer_norm_eps);
  auto ffn = [&](const Var<T>& x) {
    return Add(Matmul(Gelu(Add(Matmul(x, block.w_ff1), block.b_ff1)), block.w_ff2), block.b_ff2);
  };
  if (cfg.pre_norm) {
    Var<T> a = Add(h, CausalSelfAttention(LayerNorm(h, block.ln1_gain, block.ln1_bias, eps),
                                          block, cfg.heads));
    return Add(a, ffn(LayerNorm(a, block.ln2_gain, block.ln2_bias, eps)));
  }
  Var<T> a = LayerNorm(Add(h, CausalSelfAttention(h, block, cfg.heads)), block.ln1_gain,
                       block.ln1_bias, eps);
  return LayerNorm(Add(a, ffn(a)), block.ln2_gain, block.ln2_bias, eps);
}

template <typename T>
TransformerEncoder<T>::TransformerEncoder(const TransformerEncoderConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  cfg_.Validate();
  Initializer init(seed);
  w_in_ = init.Uniform<T>(cfg_.input_dim, cfg_.d_model);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    blocks_.push_back(TransformerBlockParams<T>::Create(cfg_, init));
  }
  if (cfg_.final_norm) {
    final_gain_ = init.Filled<T>(1, cfg_.d_model, T(1));
    final_bias_ = init.Filled<T>(1, cfg_.d_model, T(0));
  }
}

template <typename T>
Tensor<T> TransformerEncoder<T>::OutputProjection() const {
  return Transpose(Var<T>::Constant(w_in_.value())).value();
}

template <typename T>
Var<T> TransformerEncoder<T>::Embed(const Var<T>& x) const {
  CheckSequence(x, cfg_.input_dim);
  auto pe = Var<T>::Constant(SinusoidalPositionalEncoding<T>(x.rows(), cfg_.d_model));
  return Add(Matmul(x, w_in_), pe);
}

template <typename T>
EncoderOutput<T> TransformerEncoder<T>::Forward(const Var<T>& x) const {
  EncoderOutput<T> out;
  Var<T> h = Embed(x);
  if (blocks_.empty()) out.hidden.push_back(h);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    if (this->training() && cfg_.dropout > 0.0) {
      h = Dropout(h, cfg_.dropout, this->NextDropoutSeed());
    }
    h = TransformerBlock(h, blocks_[l], cfg_);
    out.hidden.push_back(h);
  }
  if (cfg_.final_norm) {
    out.hidden.back() = LayerNorm(out.hidden.back(), final_gain_, final_bias_,
                                  static_cast<T>(cfg_.layer_norm_eps));
  }
  // Tied output projection: y = h_L W_in^T.
  out.predictions = MatmulNT(out.hidden.back(), w_in_);
  return out;
}

template <typename T>
BatchOutput<T> TransformerEncoder<T>::ForwardBatch(const Tensor<T>& padded) const {
  CheckPadded(padded, cfg_.input_dim);
  const std::size_t B = padded.dim(0), N = padded.dim(1), d = padded.dim(2);
  std::vector<Var<T>> hidden, preds;
  for (std::size_t b = 0; b < B; ++b) {
    const T* src = padded.data() + b * N * d;
    Tensor<T> x(Shape{N, d}, std::vector<T>(src, src + N * d));
    auto out = Forward(Var<T>::Constant(std::move(x)));
    hidden.push_back(out.last());
    preds.push_back(out.predictions);
  }
  return {ConcatRows<T>(hidden), ConcatRows<T>(preds)};
}

template <typename T>
ParamList<T> TransformerEncoder<T>::Params() const {
  ParamList<T> out;
  out.push_back({"transformer.w_in", w_in_});
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    blocks_[l].AppendParams("transformer.block" + std::to_string(l), out);
  }
  if (cfg_.final_norm) {
    out.push_back({"transformer.final_norm.gain", final_gain_});
    out.push_back({"transformer.final_norm.bias", final_bias_});
  }
  return out;
}

template <typename T>
std::size_t TransformerEncoder<T>::ParameterCount(const TransformerEncoderConfig& cfg) {
  const std::size_t D = cfg.d_model, F = cfg.ffn_hidden;
  const std::size_t block = D * 3 * D + 3 * D + D * D + D + D * F + F + F * D + D + 4 * D;
  return cfg.input_dim * D + cfg.layers * block + (cfg.final_norm ? 2 * D : 0);
}

template <typename T>
std::unique_ptr<Encoder<T>> MakeEncoder(const nlohmann::json& config, std::uint64_t seed) {
  const std::string kind = config.value("kind", "");
  if (kind == "rnn") return std::make_unique<RnnEncoder<T>>(RnnEncoderConfig::FromJson(config), seed);
  if (kind == "transformer") {
    return std::make_unique<TransformerEncoder<T>>(TransformerEncoderConfig::FromJson(config), seed);
  }
  if (kind == "cpc") return std::make_unique<CpcEncoder<T>>(CpcConfig::FromJson(config), seed);
  throw ConfigError("unknown encoder kind '" + kind + "' (expected rnn, transformer or cpc)");
}

#define APC_INSTANTIATE_ENCODERS(T)                                                         \
  template struct GruLayer<T>;                                                              \
  template Var<T> GruCell(const Var<T>&, const Var<T>&, const GruLayer<T>&);                \
  template Var<T> GruSequence(const Var<T>&, std::size_t, const GruLayer<T>&, bool);        \
  template Tensor<T> PaddedToTimeMajor(const Tensor<T>&);                                   \
  template std::vector<Var<T>> GruStack(const std::vector<GruLayer<T>>&, const Var<T>&,     \
                                        std::size_t, bool, double,                          \
                                        const std::function<std::uint64_t()>&);             \
  template class RnnEncoder<T>;                                                             \
  template struct TransformerBlockParams<T>;                                                \
  template Tensor<T> SinusoidalPositionalEncoding<T>(std::size_t, std::size_t);             \
  template Var<T> CausalSelfAttention(const Var<T>&, const TransformerBlockParams<T>&,      \
                                      std::size_t, std::vector<Tensor<T>>*);                \
  template Var<T> TransformerBlock(const Var<T>&, const TransformerBlockParams<T>&,         \
                                   const TransformerEncoderConfig&);                        \
  template class TransformerEncoder<T>;                                                     \
  template std::unique_ptr<Encoder<T>> MakeEncoder<T>(const nlohmann::json&, std::uint64_t);

APC_INSTANTIATE_ENCODERS(float)
APC_INSTANTIATE_ENCODERS(double)

}  // namespace apc
