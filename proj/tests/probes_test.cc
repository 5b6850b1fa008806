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
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "apc/error.h"
#include "apc/metrics.h"
#include "apc/probes.h"
#include "apc/seq2seq.h"
#include "apc/sweep.h"
#include "apc/synthetic.h"
#include "grad_check.h"

namespace apc {
namespace {

using testing::MaxGradientError;
using testing::RandomTensor;

std::vector<FeatureSequence> Speakers(std::size_t per_speaker, double signature, std::size_t dim = 8,
                                      std::uint64_t seed = 1) {
  SpeakerCorpusConfig sc;
  sc.utterances_per_speaker = per_speaker;
  sc.min_frames = 10;
  sc.max_frames = 16;
  sc.dim = dim;
  sc.band = 2;
  sc.signature = signature;
  sc.seed = seed;
  return SpeakerCorpus(sc);
}

nlohmann::json SmallRnn(std::size_t input_dim) {
  return {{"kind", "rnn"}, {"input_dim", input_dim}, {"hidden", 12}, {"layers", 2}};
}

std::vector<Tensor<float>> Snapshot(const Encoder<float>& enc) {
  std::vector<Tensor<float>> out;
  for (const auto& p : enc.Params()) out.push_back(p.var.value());
  return out;
}

// ---- extraction -------------------------------------------------------------

TEST(Extract, DeterministicAndGraphFree) {
  RnnEncoderConfig cfg;
  cfg.input_dim = 6;
  auto enc = RnnEncoder<float>(cfg, 3);
  std::mt19937_64 rng(1);
  Tensor<float> x = RandomTensor(Shape{7, 6}, rng).Cast<float>();
  auto a = Extract(enc, x), b = Extract(enc, x);
  EXPECT_TRUE(BitwiseEqual(a, b));
  EXPECT_EQ(a.rows(), 7u);
  EXPECT_EQ(a.cols(), 512u);  // default width
  EXPECT_TRUE(GradEnabled());
  EXPECT_FALSE(enc.training());
  EXPECT_TRUE(BitwiseEqual(a, enc.Forward(Var<float>::Constant(x)).last().value()));
  EXPECT_THROW(Extract(enc, Tensor<float>(3, 5)), ConfigError);
}

TEST(Extract, IgnoresDropoutAndKeepsMetadata) {
  auto enc = MakeEncoder<float>({{"kind", "rnn"}, {"input_dim", 8}, {"hidden", 12}, {"layers", 3}, {"dropout", 0.5}}, 4);
  auto data = Speakers(2, 0.5);
  enc->set_training(true);
  auto reps = ExtractAll(*enc, data);
  EXPECT_TRUE(enc->training());
  ASSERT_EQ(reps.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(reps[i].utterance_id, data[i].utterance_id);
    EXPECT_EQ(reps[i].speaker_id, data[i].speaker_id);
    EXPECT_EQ(reps[i].num_frames(), data[i].num_frames());
    EXPECT_EQ(reps[i].dim(), 12u);
    EXPECT_TRUE(BitwiseEqual(reps[i].frames, Extract(*enc, data[i].frames)));
  }
}

// ---- speaker probe ------------------------------------------------------------

TEST(SpeakerProbe, PaddedBatchMatchesSingleUtterances) {
  auto data = Speakers(2, 0.5);
  auto probe = SpeakerProbe<double>::Create(8, 5, {"spk0000", "spk0001"}, 9);
  ProbeFrontend<double> front(nullptr, TransferMode::Frozen(), data);
  const std::size_t all[] = {0, 1, 2, 3};
  std::size_t max_len = 0;
  std::vector<std::size_t> lens;
  for (auto i : all) lens.push_back(front.length(i));
  auto batched = probe.Logits(front.TimeMajor(all, max_len), lens).value();
  EXPECT_EQ(max_len, *std::max_element(lens.begin(), lens.end()));
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t one[] = {i};
    std::size_t n = 0;
    const std::size_t len[] = {lens[i]};
    auto single = probe.Logits(front.TimeMajor(one, n), len).value();
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(batched(i, c), single(0, c), 1e-12);
  }
}

TEST(SpeakerProbe, FrozenModeLeavesEncoderUntouched) {
  auto data = Speakers(6, 0.5);
  auto enc = MakeEncoder<float>(SmallRnn(8), 2);
  const auto before = Snapshot(*enc);
  SpeakerProbeConfig cfg;
  cfg.hidden = 8;
  cfg.train.epochs = 1000;
  cfg.train.max_steps = 100;
  cfg.train.batch_size = 4;
  auto r = TrainSpeakerProbe<float>(enc.get(), TransferMode::Frozen(), data, data, cfg);
  EXPECT_EQ(r.steps, 100u);
  const auto after = Snapshot(*enc);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_TRUE(BitwiseEqual(before[i], after[i]));
  for (const auto& p : enc->Params()) {
    for (auto g : p.var.grad().values()) ASSERT_EQ(g, 0.0f) << p.name;
  }
}

TEST(SpeakerProbe, FinetuneModeUpdatesEncoder) {
  auto data = Speakers(3, 0.5);
  auto enc = MakeEncoder<float>(SmallRnn(8), 2);
  const auto before = Snapshot(*enc);
  SpeakerProbeConfig cfg;
  cfg.hidden = 8;
  cfg.train.max_steps = 1;
  auto r = TrainSpeakerProbe<float>(enc.get(), TransferMode::Finetuned(), data, {}, cfg);
  EXPECT_EQ(r.steps, 1u);
  EXPECT_GT(r.epoch_losses.front(), 0.0);
  const auto after = Snapshot(*enc);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < before.size(); ++i) changed += !BitwiseEqual(before[i], after[i]);
  EXPECT_GE(changed, 1u);
  EXPECT_FALSE(enc->training());
}

TEST(SpeakerProbe, ChanceLevelWithoutSpeakerInformation) {
  auto data = Speakers(110, 0.0);
  auto split = SplitPerSpeaker(data, 100);
  ASSERT_EQ(split.eval.size(), 200u);
  auto enc = MakeEncoder<float>(SmallRnn(8), 5);
  SpeakerProbeConfig cfg;
  cfg.hidden = 8;
  cfg.train.epochs = 20;
  cfg.train.batch_size = 4;
  auto r = TrainSpeakerProbe<float>(enc.get(), TransferMode::Frozen(), split.train, split.eval, cfg);
  EXPECT_NEAR(r.accuracy, 0.5, 0.1);
}

TEST(SpeakerProbe, SeparableSpeakersFromRawFeatures) {
  auto data = Speakers(20, 2.0);
  auto split = SplitPerSpeaker(data, 10);
  SpeakerProbeConfig cfg;
  cfg.hidden = 8;
  cfg.train.epochs = 30;
  cfg.train.batch_size = 4;
  cfg.train.adam.lr = 1e-2;
  auto r = TrainSpeakerProbe<float>(nullptr, TransferMode::Frozen(), CapUtterancesPerSpeaker(split.train, 5),
                                    split.eval, cfg);
  EXPECT_GE(r.accuracy, 0.95);
  EXPECT_LT(r.epoch_losses.back(), r.epoch_losses.front());
}

TEST(SpeakerProbe, OneShotProtocolRuns) {
  auto data = Speakers(4, 1.0);
  auto split = SplitPerSpeaker(data, 2);
  auto train = CapUtterancesPerSpeaker(split.train, 1);
  ASSERT_EQ(train.size(), 2u);
  auto enc = MakeEncoder<float>(SmallRnn(8), 5);
  SpeakerProbeConfig cfg;
  cfg.hidden = 4;
  cfg.train.epochs = 3;
  auto r = TrainSpeakerProbe<float>(enc.get(), TransferMode::Frozen(), train, split.eval, cfg);
  EXPECT_GE(r.accuracy, 0.0);
  EXPECT_LE(r.accuracy, 1.0);
  EXPECT_EQ(r.probe.speakers, (std::vector<std::string>{"spk0000", "spk0001"}));
}

TEST(SpeakerProbe, DataProtocolErrors) {
  auto data = Speakers(4, 1.0);
  auto split = SplitPerSpeaker(data, 1);
  EXPECT_EQ(split.train.size(), 6u);
  EXPECT_EQ(split.eval.size(), 2u);
  auto capped = CapUtterancesPerSpeaker(data, 2);
  ASSERT_EQ(capped.size(), 4u);
  EXPECT_EQ(capped[0].utterance_id, data[0].utterance_id);
  EXPECT_EQ(capped[3].utterance_id, data[3].utterance_id);
  EXPECT_EQ(CapUtterancesPerSpeaker(data, 0).size(), data.size());
  EXPECT_THROW(CapUtterancesPerSpeaker(data, 5), InputError);

  std::vector<FeatureSequence> eval = {data[0]};
  eval[0].speaker_id = "spk9999";
  SpeakerProbeConfig cfg;
  cfg.hidden = 4;
  cfg.train.epochs = 1;
  EXPECT_THROW(TrainSpeakerProbe<float>(nullptr, TransferMode::Frozen(), data, eval, cfg), InputError);
  EXPECT_THROW(TrainSpeakerProbe<float>(nullptr, TransferMode::Frozen(), {}, {}, cfg), InputError);
  auto probe = SpeakerProbe<float>::Create(8, 4, {"a", "b"}, 1);
  EXPECT_EQ(probe.Label("b"), 1u);
  EXPECT_THROW(probe.Label("c"), InputError);
  EXPECT_THROW(SpeakerProbeConfig::FromJson({{"hidden", 0}}), ConfigError);
  EXPECT_THROW(SpeakerProbeConfig::FromJson({{"train", {{"batch_size", 0}}}}), ConfigError);
  EXPECT_EQ(SpeakerProbeConfig::FromJson(cfg.ToJson()).ToJson(), cfg.ToJson());
}

// ---- seq2seq ------------------------------------------------------------------

Seq2SeqConfig TinySeq2Seq(std::size_t input_dim = 8, std::size_t vocab = 5) {
  Seq2SeqConfig c;
  c.input_dim = input_dim;
  c.conv_channels = 8;
  c.encoder_hidden = 8;
  c.encoder_layers = 2;
  c.decoder_hidden = 8;
  c.attention_dim = 8;
  c.embed_dim = 8;
  c.vocab_size = vocab;
  return c;
}

TEST(Seq2Seq, EncodedLengthIsTwoHalvings) {
  Seq2SeqModel<double> model(TinySeq2Seq(), 1);
  std::mt19937_64 rng(2);
  for (std::size_t n = 1; n <= 21; ++n) {
    const std::size_t expected = static_cast<std::size_t>(std::ceil(std::ceil(n / 2.0) / 2.0));
    EXPECT_EQ(Seq2SeqModel<double>::EncodedLength(n), expected);
    auto memory = model.Encode(Var<double>::Constant(RandomTensor(Shape{n, 8}, rng)));
    EXPECT_EQ(memory.states.rows(), expected) << n;
    EXPECT_EQ(memory.states.cols(), 16u);
  }
}

TEST(Seq2Seq, DownsampleMatchesDirectConvolution) {
  Seq2SeqModel<double> model(TinySeq2Seq(3), 4);
  const auto params = model.Params();
  const auto& w = params[0].var.value();  // [9 x 8]
  const auto& b = params[1].var.value();
  std::mt19937_64 rng(3);
  for (std::size_t n : {1u, 2u, 5u, 6u}) {
    auto x = RandomTensor(Shape{n, 3}, rng);
    auto y = model.Downsample(Var<double>::Constant(x), 0).value();
    ASSERT_EQ(y.rows(), (n + 1) / 2);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      for (std::size_t c = 0; c < 8; ++c) {
        double acc = b(0, c);
        for (std::size_t k = 0; k < 3; ++k) {
          const long t = 2 * long(i) + long(k) - 1;
          if (t < 0 || t >= long(n)) continue;
          for (std::size_t j = 0; j < 3; ++j) acc += x(t, j) * w(k * 3 + j, c);
        }
        const double gelu = 0.5 * acc * (1 + std::tanh(std::sqrt(2 / M_PI) * (acc + 0.044715 * acc * acc * acc)));
        const double gelu_erf = 0.5 * acc * (1 + std::erf(acc / std::sqrt(2.0)));
        EXPECT_TRUE(std::abs(y(i, c) - gelu) < 1e-12 || std::abs(y(i, c) - gelu_erf) < 1e-12);
      }
    }
  }
}

TEST(Seq2Seq, AttentionRowsAreDistributions) {
  Seq2SeqModel<float> model(TinySeq2Seq(), 5);
  std::mt19937_64 rng(4);
  const std::int64_t target[] = {2, 4, 3, 3};
  for (std::size_t n : {1u, 4u, 13u, 30u}) {
    auto out = model.Forward(Var<float>::Constant(RandomTensor(Shape{n, 8}, rng, 3.0).Cast<float>()), target);
    ASSERT_EQ(out.attention.rows(), 5u);
    ASSERT_EQ(out.attention.cols(), Seq2SeqModel<float>::EncodedLength(n));
    ASSERT_EQ(out.log_probs.rows(), 5u);
    for (std::size_t t = 0; t < 5; ++t) {
      double sum = 0, prob = 0;
      for (auto a : out.attention.value().row(t)) {
        EXPECT_GE(a, 0.0f);
        sum += a;
      }
      for (auto lp : out.log_probs.value().row(t)) prob += std::exp(double(lp));
      EXPECT_NEAR(sum, 1.0, 1e-6);
      EXPECT_NEAR(prob, 1.0, 1e-5);
    }
    EXPECT_EQ(out.targets.back(), CharVocab::kEos);
  }
}

TEST(Seq2Seq, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (int instance = 0; instance < 10; ++instance) {
    Seq2SeqModel<double> model(TinySeq2Seq(), 100 + instance);
    // Default initialization leaves attention nearly uniform and some
    // gradients near zero; random weights give every path a usable signal.
    for (auto& p : model.Params()) p.var.mutable_value() = RandomTensor(p.var.shape(), rng, 0.6);
    auto src = Var<double>::Param(RandomTensor(Shape{6, 8}, rng));
    std::uniform_int_distribution<std::int64_t> tok(2, 4);
    const std::vector<std::int64_t> target = {tok(rng), tok(rng), tok(rng)};
    std::vector<Var<double>> vars = {src};
    for (const auto& p : model.Params()) vars.push_back(p.var);
    const double err = MaxGradientError(vars, [&] { return Seq2SeqModel<double>::Loss(model.Forward(src, target)); });
    EXPECT_LT(err, 1e-4) << "instance " << instance;
  }
}

TEST(Seq2Seq, ErrorsAndConfig) {
  Seq2SeqModel<float> model(TinySeq2Seq(), 5);
  auto src = Var<float>::Constant(Tensor<float>(6, 8));
  EXPECT_THROW(model.Forward(src, std::vector<std::int64_t>{}), InputError);
  EXPECT_THROW(model.Encode(Var<float>::Constant(Tensor<float>(6, 7))), DimensionError);
  EXPECT_THROW(model.Step(model.Encode(src), model.InitialState(), 9), InputError);
  auto bad = TinySeq2Seq();
  bad.vocab_size = 2;
  EXPECT_THROW(Seq2SeqModel<float>(bad, 1), ConfigError);
  EXPECT_THROW(Seq2SeqConfig::FromJson({{"encoder_layer", 2}}), ConfigError);
  EXPECT_EQ(Seq2SeqConfig::FromJson(TinySeq2Seq().ToJson()).ToJson(), TinySeq2Seq().ToJson());
  Seq2SeqProbeConfig pc;
  EXPECT_EQ(pc.beam, 5u);
  EXPECT_EQ(Seq2SeqProbeConfig::FromJson(pc.ToJson()).ToJson(), pc.ToJson());
  EXPECT_THROW(Seq2SeqProbeConfig::FromJson({{"beam", 0}}), ConfigError);
}

TEST(CharVocab, EncodeDecode) {
  CharVocab v("cabba c");
  EXPECT_EQ(v.chars(), " abc");
  EXPECT_EQ(v.size(), 6u);
  auto t = v.Encode("a cab");
  EXPECT_EQ(t, (std::vector<std::int64_t>{3, 2, 5, 3, 4}));
  t.insert(t.begin(), CharVocab::kSos);
  t.push_back(CharVocab::kEos);
  EXPECT_EQ(v.Decode(t), "a cab");
  EXPECT_THROW(v.Encode("d"), InputError);
}

// ---- decoding -----------------------------------------------------------------

// Log-probability of a hypothesis scored token by token, ending with <eos>
// when complete.
double ScoreSequence(const Seq2SeqModel<double>& model, const Var<double>& src, const std::vector<std::int64_t>& tokens,
                     bool complete) {
  NoGradGuard guard;
  auto memory = model.Encode(src);
  auto state = model.InitialState();
  std::int64_t prev = CharVocab::kSos;
  double lp = 0;
  std::vector<std::int64_t> seq = tokens;
  if (complete) seq.push_back(CharVocab::kEos);
  for (auto tok : seq) {
    auto step = model.Step(memory, state, prev);
    lp += step.log_probs.value()(0, tok);
    state = step.state;
    prev = tok;
  }
  return lp;
}

TEST(BeamDecode, BeamOneIsGreedy) {
  std::mt19937_64 rng(6);
  for (int m = 0; m < 8; ++m) {
    Seq2SeqModel<double> model(TinySeq2Seq(), 200 + m);
    auto src = Var<double>::Constant(RandomTensor(Shape{9, 8}, rng, 2.0));
    for (std::size_t max_len : {0u, 1u, 4u, 12u}) {
      auto g = GreedyDecode(model, src, max_len);
      auto b = BeamDecode(model, src, 1, max_len);
      EXPECT_EQ(g.tokens, b.tokens);
      EXPECT_EQ(g.log_prob, b.log_prob);
      EXPECT_EQ(g.complete, b.complete);
      EXPECT_LE(g.tokens.size(), max_len);
      EXPECT_NEAR(g.log_prob, ScoreSequence(model, src, g.tokens, g.complete), 1e-12);
    }
  }
}

TEST(BeamDecode, DominatesGreedyAndGrowsWithBeam) {
  std::mt19937_64 rng(7);
  for (int m = 0; m < 8; ++m) {
    Seq2SeqModel<double> model(TinySeq2Seq(), 300 + m);
    auto src = Var<double>::Constant(RandomTensor(Shape{9, 8}, rng, 2.0));
    const double greedy = GreedyDecode(model, src, 6).log_prob;
    double previous = -INFINITY;
    for (std::size_t beam : {1u, 2u, 5u}) {
      auto h = BeamDecode(model, src, beam, 6);
      EXPECT_GE(h.log_prob, greedy);
      EXPECT_GE(h.log_prob, previous) << "beam " << beam;
      EXPECT_NEAR(h.log_prob, ScoreSequence(model, src, h.tokens, h.complete), 1e-12);
      previous = h.log_prob;
    }
  }
}

TEST(BeamDecode, WideBeamFindsExhaustiveOptimum) {
  std::mt19937_64 rng(8);
  const std::size_t max_len = 3;
  for (int m = 0; m < 4; ++m) {
    Seq2SeqModel<double> model(TinySeq2Seq(8, 4), 400 + m);  // two characters
    auto src = Var<double>::Constant(RandomTensor(Shape{7, 8}, rng, 2.0));
    double best = -INFINITY;
    // Every character string up to max_len, each either ended by <eos> or
    // cut at the bound.
    std::vector<std::vector<std::int64_t>> frontier = {{}};
    for (std::size_t len = 0; len <= max_len; ++len) {
      std::vector<std::vector<std::int64_t>> next;
      for (const auto& s : frontier) {
        best = std::max(best, ScoreSequence(model, src, s, true));
        if (len == max_len) best = std::max(best, ScoreSequence(model, src, s, false));
        for (std::int64_t c : {2, 3}) {
          auto e = s;
          e.push_back(c);
          next.push_back(e);
        }
      }
      frontier = next;
    }
    EXPECT_NEAR(BeamDecode(model, src, 64, max_len).log_prob, best, 1e-12);
  }
}

// ---- seq2seq probe training ---------------------------------------------------

TEST(Seq2SeqProbe, OverfitsTinyCorpusAndModesBehave) {
  TranscriptionCorpusConfig tc;
  tc.utterances = 6;
  tc.tokens = 3;
  tc.alphabet = "abc";
  tc.dim = 6;
  auto data = TranscriptionCorpus(tc);
  Seq2SeqProbeConfig cfg;
  cfg.model = {{"conv_channels", 16}, {"encoder_hidden", 16}, {"encoder_layers", 1}, {"decoder_hidden", 16},
               {"attention_dim", 16},  {"embed_dim", 8}};
  cfg.train.epochs = 400;
  cfg.train.batch_size = 3;
  cfg.train.adam.lr = 3e-3;
  cfg.train.target_loss = 0.02;
  auto raw = TrainSeq2SeqProbe<float>(nullptr, TransferMode::Frozen(), data, data, cfg);
  EXPECT_LE(raw.epoch_losses.back(), 0.02);
  EXPECT_LT(raw.epoch_losses.size(), 400u);
  EXPECT_EQ(raw.teacher_forced_cer, 0.0);
  EXPECT_EQ(raw.cer, 0.0);
  EXPECT_EQ(raw.hypotheses[0], data[0].transcript);

  auto enc = MakeEncoder<float>(SmallRnn(6), 3);
  const auto before = Snapshot(*enc);
  cfg.train.epochs = 2;
  TrainSeq2SeqProbe<float>(enc.get(), TransferMode::Frozen(), data, data, cfg);
  auto after = Snapshot(*enc);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_TRUE(BitwiseEqual(before[i], after[i]));
  auto ft = TrainSeq2SeqProbe<float>(enc.get(), TransferMode::Finetuned(), data, {}, cfg);
  EXPECT_EQ(ft.model.config().input_dim, 12u);
  after = Snapshot(*enc);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < before.size(); ++i) changed += !BitwiseEqual(before[i], after[i]);
  EXPECT_GT(changed, 0u);

  data[1].transcript.clear();
  EXPECT_THROW(TrainSeq2SeqProbe<float>(nullptr, TransferMode::Frozen(), data, {}, cfg), InputError);
}

// ---- metrics ------------------------------------------------------------------

TEST(Metrics, WorkedExamples) {
  EXPECT_EQ(ErrorRate("a b c", "a b c", ErrorUnit::kWord), 0.0);
  EXPECT_DOUBLE_EQ(ErrorRate("a x c", "a b c", ErrorUnit::kWord), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(ErrorRate("", "a b", ErrorUnit::kWord), 1.0);
  EXPECT_DOUBLE_EQ(ErrorRate("a b c d", "a b", ErrorUnit::kWord), 1.0);
  EXPECT_DOUBLE_EQ(ErrorRate("kitten", "sitting", ErrorUnit::kChar), 3.0 / 7.0);
  EXPECT_DOUBLE_EQ(ErrorRate("  a   b ", "a b", ErrorUnit::kWord), 0.0);
  EXPECT_THROW(ErrorRate("a", "", ErrorUnit::kChar), InputError);
  EXPECT_THROW(ErrorRate("a", "   ", ErrorUnit::kWord), InputError);
  const std::vector<std::string> hyps = {"ab", "x"}, refs = {"abc", "y"};
  EXPECT_DOUBLE_EQ(CorpusErrorRate(hyps, refs, ErrorUnit::kChar), 2.0 / 4.0);
}

TEST(Metrics, EditDistanceIsAMetric) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> len(0, 7), ch(0, 2);
  auto random_string = [&] {
    std::string s;
    for (int i = len(rng); i > 0; --i) s.push_back(char('a' + ch(rng)));
    return s;
  };
  for (int i = 0; i < 300; ++i) {
    const auto a = random_string(), b = random_string(), c = random_string();
    EXPECT_EQ(EditDistance(a, a), 0u);
    EXPECT_EQ(EditDistance(a, b), EditDistance(b, a));
    EXPECT_LE(EditDistance(a, c), EditDistance(a, b) + EditDistance(b, c));
    EXPECT_LE(EditDistance(a, b), std::max(a.size(), b.size()));
    EXPECT_GE(EditDistance(a, b), a.size() > b.size() ? a.size() - b.size() : b.size() - a.size());
  }
}

// ---- sweeps -------------------------------------------------------------------

TEST(Sweep, GridsAndFractionArithmetic) {
  std::vector<std::string> labels;
  for (const auto& c : SweepColumns(SweepProtocol::kNSweep)) labels.push_back(c.label);
  EXPECT_EQ(labels, (std::vector<std::string>{"1", "2", "3", "5", "10", "20"}));
  auto fractions = SweepColumns(SweepProtocol::kDataFraction);
  ASSERT_EQ(fractions.size(), 6u);
  EXPECT_EQ(fractions.back().label, "1/32");
  EXPECT_EQ(fractions.back().value, 32u);
  EXPECT_EQ(SweepColumns(SweepProtocol::kEncoderDepth).size(), 4u);
  auto m = SweepColumns(SweepProtocol::kUttsPerSpeaker);
  EXPECT_EQ(m.back().label, "full");
  EXPECT_EQ(m.back().value, 0u);
  EXPECT_EQ(FractionCount(100, 32), 3u);
  EXPECT_EQ(FractionCount(20, 32), 1u);
  EXPECT_EQ(FractionCount(64, 32), 2u);
  EXPECT_EQ(FractionCount(100, 1), 100u);
  for (auto p : {SweepProtocol::kNSweep, SweepProtocol::kDataFraction, SweepProtocol::kEncoderDepth,
                 SweepProtocol::kUttsPerSpeaker}) {
    EXPECT_EQ(ParseSweepProtocol(SweepProtocolName(p)), p);
  }
  EXPECT_THROW(ParseSweepProtocol("width"), ConfigError);
}

TEST(Sweep, RecordsFailuresAndKeepsGoing) {
  std::vector<std::string> order;
  auto cell = [&](const std::string& row, const SweepColumn& col) {
    order.push_back(row + "@" + col.label);
    if (row == "B" && col.value == 3) throw InputError("cell broke");
    return static_cast<double>(col.value) + (row == "A" ? 0.5 : 0.25);
  };
  auto t = RunSweep(SweepProtocol::kNSweep, {"A", "B"}, "cer", cell);
  ASSERT_EQ(t.cells.size(), 12u);
  EXPECT_EQ(order.front(), "A@1");
  EXPECT_EQ(order[6], "B@1");
  EXPECT_EQ(order.back(), "B@20");
  EXPECT_FALSE(t.at(1, 2).value);
  EXPECT_EQ(t.at(1, 2).error, "cell broke");
  EXPECT_DOUBLE_EQ(*t.at(1, 3).value, 5.25);
  const std::string tsv = t.ToTsv();
  EXPECT_EQ(tsv,
            "features\t1\t2\t3\t5\t10\t20\n"
            "A\t1.5000\t2.5000\t3.5000\t5.5000\t10.5000\t20.5000\n"
            "B\t1.2500\t2.2500\terror\t5.2500\t10.2500\t20.2500\n");
  EXPECT_EQ(RunSweep(SweepProtocol::kNSweep, {"A", "B"}, "cer", cell).ToTsv(), tsv);
  auto j = t.ToJson();
  EXPECT_EQ(j["cells"][8]["error"], "cell broke");
  EXPECT_EQ(j["columns"].size(), 6u);
}

}  // namespace
}  // namespace apc
