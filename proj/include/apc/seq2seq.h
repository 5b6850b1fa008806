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

#ifndef APC_SEQ2SEQ_H_
#define APC_SEQ2SEQ_H_

// Attention-based sequence-to-sequence transducer: two stride-2 convolutions,
// a bidirectional GRU stack, and a GRU decoder with additive attention over
// the encoder states. Outputs are characters plus <sos> and <eos>.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "apc/dsp.h"
#include "apc/encoders.h"
#include "apc/probes.h"
#include "json.hpp"

namespace apc {

class CharVocab {
 public:
  static constexpr std::int64_t kSos = 0;
  static constexpr std::int64_t kEos = 1;

  // Characters are deduplicated and sorted.
  explicit CharVocab(std::string_view alphabet);
  static CharVocab FromTranscripts(std::span<const FeatureSequence> data);

  std::size_t size() const { return chars_.size() + 2; }
  const std::string& chars() const { return chars_; }
  // Throws InputError for a character outside the vocabulary.
  std::vector<std::int64_t> Encode(std::string_view text) const;
  // Specials are skipped.
  std::string Decode(std::span<const std::int64_t> tokens) const;

 private:
  std::string chars_;
};

struct Seq2SeqConfig {
  std::size_t input_dim = 512;
  std::size_t conv_channels = 256;
  std::size_t encoder_hidden = 256;  // per direction
  std::size_t encoder_layers = 4;
  std::size_t decoder_hidden = 256;
  std::size_t attention_dim = 256;
  std::size_t embed_dim = 128;
  std::size_t vocab_size = 0;

  nlohmann::json ToJson() const;
  static Seq2SeqConfig FromJson(const nlohmann::json& j);
  void Validate() const;
};

template <typename T>
struct Seq2SeqMemory {
  Var<T> states;  // [M x 2*encoder_hidden]
  Var<T> keys;    // states * U_a, [M x attention_dim]
};

template <typename T>
struct DecoderStep {
  Var<T> log_probs;  // [1 x V]
  Var<T> attention;  // [1 x M], sums to 1
  Var<T> state;      // [1 x decoder_hidden]
};

template <typename T>
struct Seq2SeqOutput {
  Var<T> log_probs;  // [(T+1) x V], one row per target token and <eos>
  Var<T> attention;  // [(T+1) x M]
  std::vector<std::int64_t> targets;  // target tokens followed by <eos>
};

template <typename T>
class Seq2SeqModel {
 public:
  Seq2SeqModel(const Seq2SeqConfig& cfg, std::uint64_t seed);

  const Seq2SeqConfig& config() const { return cfg_; }
  ParamList<T> Params() const;

  // Frames after the two stride-2 convolutions.
  static std::size_t EncodedLength(std::size_t frames) { return ((frames + 1) / 2 + 1) / 2; }

  // Kernel 3, stride 2, one zero frame of padding on each side, then GELU.
  Var<T> Downsample(const Var<T>& x, std::size_t layer) const;
  Seq2SeqMemory<T> Encode(const Var<T>& src) const;
  Var<T> InitialState() const;
  DecoderStep<T> Step(const Seq2SeqMemory<T>& memory, const Var<T>& state, std::int64_t prev_token) const;
  // Teacher-forced pass over target tokens (no specials). Throws InputError
  // for an empty target.
  Seq2SeqOutput<T> Forward(const Var<T>& src, std::span<const std::int64_t> target) const;
  // Mean negative log-likelihood per output token.
  static Var<T> Loss(const Seq2SeqOutput<T>& out);

 private:
  Seq2SeqConfig cfg_;
  Var<T> conv_w_[2], conv_b_[2];
  std::vector<GruLayer<T>> fwd_, bwd_;
  Var<T> w_a_, u_a_, v_a_;
  Var<T> embed_;
  GruLayer<T> decoder_;
  Var<T> w_o_, b_o_;
};

struct Hypothesis {
  std::vector<std::int64_t> tokens;  // without specials
  double log_prob = 0;              // includes <eos> when complete
  bool complete = false;            // ended with <eos> rather than the length bound
};

template <typename T>
Hypothesis GreedyDecode(const Seq2SeqModel<T>& model, const Var<T>& src, std::size_t max_len);

// Length-bounded beam search returning the highest log-probability finished
// hypothesis. A hypothesis that reaches max_len tokens is finished as is.
template <typename T>
Hypothesis BeamDecode(const Seq2SeqModel<T>& model, const Var<T>& src, std::size_t beam, std::size_t max_len);

struct Seq2SeqProbeConfig {
  nlohmann::json model = nlohmann::json::object();  // Seq2SeqConfig fields; dims are filled in
  ProbeTrainConfig train;
  std::size_t beam = 5;
  std::size_t max_decode_len = 0;  // 0: twice the longest reference plus 10

  nlohmann::json ToJson() const;
  static Seq2SeqProbeConfig FromJson(const nlohmann::json& j);
};

template <typename T>
struct Seq2SeqProbeResult {
  Seq2SeqModel<T> model;
  CharVocab vocab;
  std::vector<double> epoch_losses;
  std::size_t steps = 0;
  double teacher_forced_cer = 0;  // per-position argmax under teacher forcing
  double cer = 0;                 // beam decoding
  double wer = 0;
  std::vector<std::string> hypotheses;
};

struct Seq2SeqScores {
  double teacher_forced_cer = 0;
  double cer = 0;
  double wer = 0;
  std::vector<std::string> hypotheses;
};

// encoder may be null, in which case the model reads raw features. The
// output vocabulary covers the characters of both splits.
template <typename T>
Seq2SeqProbeResult<T> TrainSeq2SeqProbe(Encoder<T>* encoder, TransferMode mode,
                                       std::span<const FeatureSequence> train,
                                       std::span<const FeatureSequence> eval, const Seq2SeqProbeConfig& cfg);

template <typename T>
Seq2SeqScores EvaluateSeq2SeqProbe(Encoder<T>* encoder, const Seq2SeqModel<T>& model, const CharVocab& vocab,
                                   std::span<const FeatureSequence> eval, std::size_t beam,
                                   std::size_t max_decode_len);

}  // namespace apc

#endif  // APC_SEQ2SEQ_H_
