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

#include <cmath>
#include <cstring>
#include <random>

#include <gtest/gtest.h>

#include "apc/encoders.h"
#include "apc/error.h"
#include "grad_check.h"

namespace apc {
namespace {

using testing::MaxGradientError;
using testing::RandomTensor;
using D = Var<double>;

constexpr double kGradTol = 1e-4;

std::vector<D> AsVec(const ParamList<double>& params) {
  std::vector<D> out;
  for (const auto& p : params) out.push_back(p.var);
  return out;
}

void ZeroLayer(GruLayer<float>& g) {
  g.w_x.mutable_value().Fill(0);
  g.u_rz.mutable_value().Fill(0);
  g.u_h.mutable_value().Fill(0);
  g.bias.mutable_value().Fill(0);
}

TEST(GruCell, ZeroWeightsClosedForms) {
  Initializer init(1);
  auto g = GruLayer<float>::Create(3, 4, init);
  ZeroLayer(g);
  auto x = Var<float>::Constant(Tensor<float>(1, 3, 0.7f));
  auto h0 = Var<float>::Constant(Tensor<float>(1, 4));
  auto h = GruCell(x, h0, g);
  for (float v : h.value().values()) EXPECT_EQ(v, 0.0f);
  auto v = Var<float>::Constant(Tensor<float>::FromRows({{1.0f, -2.0f, 0.25f, 8.0f}}));
  auto h1 = GruCell(x, v, g).value();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(h1[i], 0.5f * v.value()[i]);
}

TEST(GruCell, DimensionErrors) {
  Initializer init(1);
  auto g = GruLayer<float>::Create(3, 4, init);
  auto bad_x = Var<float>::Constant(Tensor<float>(1, 5));
  auto h = Var<float>::Constant(Tensor<float>(1, 4));
  EXPECT_THROW(GruCell(bad_x, h, g), DimensionError);
  auto x = Var<float>::Constant(Tensor<float>(1, 3));
  auto bad_h = Var<float>::Constant(Tensor<float>(1, 3));
  EXPECT_THROW(GruCell(x, bad_h, g), DimensionError);
}

TEST(GruCell, ThreeChainedCellsGradient) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    Initializer init(100 + trial);
    auto g = GruLayer<double>::Create(3, 4, init);
    g.bias = D::Param(RandomTensor({1, 12}, rng, 0.3));
    auto x = D::Param(RandomTensor({3, 3}, rng));
    auto h0 = D::Param(RandomTensor({1, 4}, rng));
    auto w = D::Constant(RandomTensor({1, 4}, rng));
    auto loss = [&] {
      D h = h0;
      for (std::size_t t = 0; t < 3; ++t) h = GruCell(SliceRows(x, t, t + 1), h, g);
      return Sum(Mul(h, w));
    };
    EXPECT_LT(MaxGradientError({x, h0, g.w_x, g.u_rz, g.u_h, g.bias}, loss), kGradTol);
  }
}

TEST(GruSequence, MatchesCellByCellAndReverse) {
  Initializer init(3);
  auto g = GruLayer<double>::Create(2, 3, init);
  std::mt19937_64 rng(4);
  auto x = D::Constant(RandomTensor({5, 2}, rng));
  auto seq = GruSequence(x, 1, g).value();
  D h = D::Constant(Tensor<double>(1, 3));
  for (std::size_t t = 0; t < 5; ++t) {
    h = GruCell(SliceRows(x, t, t + 1), h, g);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(seq(t, j), h.value()[j], 1e-12);
  }
  auto rev = GruSequence(x, 1, g, true).value();
  h = D::Constant(Tensor<double>(1, 3));
  for (std::size_t t = 5; t-- > 0;) {
    h = GruCell(SliceRows(x, t, t + 1), h, g);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(rev(t, j), h.value()[j], 1e-12);
  }
}

TEST(RnnEncoder, TwoLayerLossGradient) {
  // 5 frames of 8-dim input through a 2-layer residual GRU and projection.
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 10; ++trial) {
    RnnEncoder<double> enc({.input_dim = 8, .hidden = 6, .layers = 2}, 200 + trial);
    auto x = D::Constant(RandomTensor({5, 8}, rng));
    auto t = D::Constant(RandomTensor({5, 8}, rng));
    auto loss = [&] {
      auto diff = Sub(enc.Forward(x).predictions, t);
      return Sum(Mul(diff, diff));
    };
    EXPECT_LT(MaxGradientError(AsVec(enc.Params()), loss), kGradTol);
  }
}

template <typename Enc>
void ExpectCausal(const Enc& enc, std::size_t n, std::size_t d, std::size_t k, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g;
  Tensor<float> x(n, d);
  for (auto& v : x.values()) v = g(rng);
  Tensor<float> y = x;
  for (std::size_t t = k; t < n; ++t)
    for (std::size_t j = 0; j < d; ++j) y(t, j) += 5.0f * g(rng);
  auto a = enc.Forward(Var<float>::Constant(x));
  auto b = enc.Forward(Var<float>::Constant(y));
  for (std::size_t t = 0; t < k; ++t) {
    EXPECT_EQ(std::memcmp(a.predictions.value().row(t).data(), b.predictions.value().row(t).data(),
                          d * sizeof(float)), 0) << "prediction row " << t << " k=" << k;
    for (std::size_t l = 0; l < a.hidden.size(); ++l) {
      EXPECT_EQ(std::memcmp(a.hidden[l].value().row(t).data(), b.hidden[l].value().row(t).data(),
                            a.hidden[l].cols() * sizeof(float)), 0);
    }
  }
  // The perturbation itself must reach the outputs.
  if (k < n) EXPECT_NE(a.predictions.value().row(k)[0], b.predictions.value().row(k)[0]);
}

TEST(RnnEncoder, Causality) {
  RnnEncoder<float> enc({.input_dim = 6, .hidden = 10, .layers = 3}, 5);
  for (std::size_t k : {1u, 16u, 31u}) ExpectCausal(enc, 32, 6, k, 30 + k);
}

TEST(RnnEncoder, ShapeAndSingleLayerHasNoResidual) {
  RnnEncoder<double> enc({.input_dim = 4, .hidden = 5, .layers = 1}, 6);
  std::mt19937_64 rng(7);
  for (std::size_t n : {1u, 3u, 11u}) {
    auto x = D::Constant(RandomTensor({n, 4}, rng));
    auto out = enc.Forward(x);
    EXPECT_EQ(out.predictions.shape(), (Shape{n, 4}));
    ASSERT_EQ(out.hidden.size(), 1u);
    auto plain = GruSequence(x, 1, enc.layers()[0]).value();
    EXPECT_TRUE(BitwiseEqual(plain, out.last().value()));
  }
}

TEST(RnnEncoder, ZeroedUpperLayersActAsIdentity) {
  RnnEncoder<float> enc({.input_dim = 4, .hidden = 6, .layers = 4}, 8);
  for (std::size_t l = 1; l < 4; ++l) ZeroLayer(enc.layers()[l]);
  std::mt19937_64 rng(9);
  auto x = Var<float>::Constant(RandomTensor({7, 4}, rng).Cast<float>());
  auto out = enc.Forward(x);
  for (std::size_t l = 1; l < 4; ++l) {
    EXPECT_TRUE(BitwiseEqual(out.hidden[0].value(), out.hidden[l].value()));
  }
}

TEST(RnnEncoder, BatchMatchesPerUtterance) {
  RnnEncoder<double> enc({.input_dim = 3, .hidden = 4, .layers = 2}, 10);
  std::mt19937_64 rng(11);
  Tensor<double> padded(Shape{3, 6, 3});
  for (auto& v : padded.values()) v = std::normal_distribution<double>()(rng);
  auto batch = enc.ForwardBatch(padded);
  for (std::size_t b = 0; b < 3; ++b) {
    Tensor<double> x(Shape{6, 3}, std::vector<double>(padded.data() + b * 18, padded.data() + (b + 1) * 18));
    auto single = enc.Forward(D::Constant(x));
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t j = 0; j < 3; ++j)
        EXPECT_NEAR(batch.predictions.value()(b * 6 + t, j), single.predictions.value()(t, j), 1e-12);
  }
}

TEST(RnnEncoder, ParameterCountFormula) {
  RnnEncoderConfig cfg;  // 4 x 512 over 80-dim input
  RnnEncoder<float> enc(cfg, 1);
  EXPECT_EQ(CountParameters(enc.Params()), RnnEncoder<float>::ParameterCount(cfg));
  const std::size_t h = 512, d = 80;
  EXPECT_EQ(RnnEncoder<float>::ParameterCount(cfg),
            (3 * h * d + 3 * h * h + 3 * h) + 3 * (6 * h * h + 3 * h) + h * d);
  EXPECT_EQ(enc.width(), 512u);
}

TEST(SinusoidalPe, ClosedForms) {
  auto pe = SinusoidalPositionalEncoding<double>(6, 8);
  for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(pe(0, j), j % 2 == 0 ? 0.0 : 1.0);
  EXPECT_NEAR(pe(1, 0), 0.841471, 1e-6);
  EXPECT_NEAR(pe(3, 5), std::cos(3.0 / std::pow(10000.0, 4.0 / 8.0)), 1e-12);
  for (double v : pe.values()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_THROW(SinusoidalPositionalEncoding<double>(4, 7), ConfigError);
}

TransformerEncoderConfig ToyConfig(std::size_t d_in = 5) {
  return {.input_dim = d_in, .d_model = 16, .heads = 4, .ffn_hidden = 24, .layers = 2};
}

TEST(CausalSelfAttention, MaskPatternAndSingleton) {
  TransformerEncoderConfig cfg = ToyConfig();
  Initializer init(12);
  auto block = TransformerBlockParams<double>::Create(cfg, init);
  std::mt19937_64 rng(13);
  std::vector<Tensor<double>> weights;
  CausalSelfAttention(D::Constant(RandomTensor({3, 16}, rng)), block, 4, &weights);
  ASSERT_EQ(weights.size(), 4u);
  for (const auto& w : weights) {
    for (std::size_t i = 0; i < 3; ++i) {
      double total = 0;
      for (std::size_t j = 0; j < 3; ++j) {
        if (j > i) EXPECT_EQ(w(i, j), 0.0);
        else EXPECT_GT(w(i, j), 0.0);
        total += w(i, j);
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
  CausalSelfAttention(D::Constant(RandomTensor({1, 16}, rng)), block, 4, &weights);
  for (const auto& w : weights) {
    EXPECT_EQ(w.shape(), (Shape{1, 1}));
    EXPECT_EQ(w[0], 1.0);
  }
}

TEST(CausalSelfAttention, FuturePerturbationLeavesPastBitwise) {
  TransformerEncoderConfig cfg = ToyConfig();
  Initializer init(14);
  auto block = TransformerBlockParams<float>::Create(cfg, init);
  std::mt19937_64 rng(15);
  Tensor<float> h = RandomTensor({9, 16}, rng).Cast<float>();
  for (std::size_t k : {1u, 4u, 8u}) {
    Tensor<float> p = h;
    for (std::size_t t = k; t < 9; ++t)
      for (std::size_t j = 0; j < 16; ++j) p(t, j) = -3.0f * p(t, j) + 1.0f;
    auto a = CausalSelfAttention(Var<float>::Constant(h), block, 4).value();
    auto b = CausalSelfAttention(Var<float>::Constant(p), block, 4).value();
    for (std::size_t t = 0; t < k; ++t)
      EXPECT_EQ(std::memcmp(a.row(t).data(), b.row(t).data(), 16 * sizeof(float)), 0);
    auto ba = TransformerBlock(Var<float>::Constant(h), block, cfg).value();
    auto bb = TransformerBlock(Var<float>::Constant(p), block, cfg).value();
    EXPECT_EQ(ba.shape(), h.shape());
    for (std::size_t t = 0; t < k; ++t)
      EXPECT_EQ(std::memcmp(ba.row(t).data(), bb.row(t).data(), 16 * sizeof(float)), 0);
  }
}

TEST(TransformerBlock, GradientOnToyConfig) {
  std::mt19937_64 rng(16);
  for (bool pre_norm : {false, true}) {
    for (int trial = 0; trial < 10; ++trial) {
      TransformerEncoderConfig cfg = ToyConfig();
      cfg.pre_norm = pre_norm;
      Initializer init(300 + trial);
      auto block = TransformerBlockParams<double>::Create(cfg, init);
      block.b_qkv = D::Param(RandomTensor({1, 48}, rng, 0.1));
      auto h = D::Param(RandomTensor({4, 16}, rng));
      auto w = D::Constant(RandomTensor({4, 16}, rng));
      ParamList<double> params;
      block.AppendParams("b", params);
      auto vars = AsVec(params);
      vars.push_back(h);
      EXPECT_LT(MaxGradientError(vars, [&] { return Sum(Mul(TransformerBlock(h, block, cfg), w)); }),
                kGradTol);
    }
  }
}

TEST(TransformerEncoder, EndToEndCausality) {
  TransformerEncoder<float> enc(ToyConfig(6), 17);
  for (std::size_t k : {1u, 16u, 31u}) ExpectCausal(enc, 32, 6, k, 40 + k);
}

TEST(TransformerEncoder, ZeroInputEmbedsToPositionalEncoding) {
  TransformerEncoder<float> enc(ToyConfig(), 18);
  auto h0 = enc.Embed(Var<float>::Constant(Tensor<float>(7, 5))).value();
  EXPECT_TRUE(BitwiseEqual(h0, SinusoidalPositionalEncoding<float>(7, 16)));
}

TEST(TransformerEncoder, WeightTyingSurvivesUpdates) {
  TransformerEncoder<double> enc(ToyConfig(), 19);
  std::mt19937_64 rng(20);
  auto x = D::Constant(RandomTensor({6, 5}, rng));
  int tied = 0;
  for (const auto& p : enc.Params()) {
    EXPECT_EQ(p.name.find("w_out"), std::string::npos);
    tied += p.name == "transformer.w_in";
  }
  EXPECT_EQ(tied, 1);
  for (int step = 0; step < 3; ++step) {
    auto params = enc.Params();
    ZeroGrads(params);
    Backward(Sum(Abs(Sub(enc.Forward(x).predictions, x))));
    for (auto& p : params) {
      auto& v = p.var.mutable_value();
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= 0.05 * p.var.grad()[i];
    }
    const auto& w_in = enc.input_projection().value();
    auto w_out = enc.OutputProjection();
    ASSERT_EQ(w_out.shape(), (Shape{16, 5}));
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(w_out(j, i), w_in(i, j));
  }
}

TEST(TransformerEncoder, ZeroLayersIsTiedLinearMap) {
  auto cfg = ToyConfig();
  cfg.layers = 0;
  TransformerEncoder<double> enc(cfg, 21);
  std::mt19937_64 rng(22);
  auto xv = RandomTensor({4, 5}, rng);
  auto y = enc.Forward(D::Constant(xv)).predictions.value();
  const auto& w = enc.input_projection().value();
  auto pe = SinusoidalPositionalEncoding<double>(4, 16);
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t i = 0; i < 5; ++i) {
      double acc = 0;
      for (std::size_t m = 0; m < 16; ++m) {
        double h0 = pe(t, m);
        for (std::size_t j = 0; j < 5; ++j) h0 += xv(t, j) * w(j, m);
        acc += h0 * w(i, m);
      }
      EXPECT_NEAR(y(t, i), acc, 1e-12);
    }
  }
}

TEST(TransformerEncoder, BatchMatchesPerUtterance) {
  TransformerEncoder<double> enc(ToyConfig(3), 23);
  std::mt19937_64 rng(24);
  Tensor<double> padded(Shape{2, 5, 3});
  for (auto& v : padded.values()) v = std::normal_distribution<double>()(rng);
  auto batch = enc.ForwardBatch(padded);
  Tensor<double> x(Shape{5, 3}, std::vector<double>(padded.data() + 15, padded.data() + 30));
  auto single = enc.Forward(D::Constant(x));
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t j = 0; j < 3; ++j)
      EXPECT_EQ(batch.predictions.value()(5 + t, j), single.predictions.value()(t, j));
}

TEST(TransformerEncoder, ParameterCountFormulaAndConfigErrors) {
  TransformerEncoderConfig cfg;  // 4 blocks, 512, 8 heads, 2048
  TransformerEncoder<float> enc(cfg, 1);
  EXPECT_EQ(CountParameters(enc.Params()), TransformerEncoder<float>::ParameterCount(cfg));
  const std::size_t D = 512, F = 2048;
  EXPECT_EQ(TransformerEncoder<float>::ParameterCount(cfg),
            80 * D + 4 * (4 * D * D + 2 * D * F + 9 * D + F));
  auto bad = ToyConfig();
  bad.heads = 3;
  EXPECT_THROW(TransformerEncoder<float>(bad, 1), ConfigError);
  auto j = enc.Config();
  EXPECT_EQ(MakeEncoder<float>(j, 1)->kind(), EncoderKind::kTransformer);
  EXPECT_THROW(MakeEncoder<float>(nlohmann::json{{"kind", "lstm"}}, 1), ConfigError);
}

}  // namespace
}  // namespace apc
