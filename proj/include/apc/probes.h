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

#ifndef APC_PROBES_H_
#define APC_PROBES_H_

// Downstream probes over encoder representations. A probe reads either raw
// features (no encoder) or h_L of an encoder that is kept frozen or
// fine-tuned together with the probe.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "apc/dsp.h"
#include "apc/encoders.h"
#include "apc/optim.h"
#include "json.hpp"

namespace apc {

// h_L for one utterance, computed without building a graph.
template <typename T>
Tensor<T> Extract(const Encoder<T>& encoder, const Tensor<T>& x);

// Copies of the utterances with frames replaced by h_L.
template <typename T>
std::vector<FeatureSequence> ExtractAll(const Encoder<T>& encoder, std::span<const FeatureSequence> data);

struct TransferMode {
  bool frozen = true;

  static TransferMode Frozen() { return {true}; }
  static TransferMode Finetuned() { return {false}; }
  const char* name() const { return frozen ? "frozen" : "finetune"; }
};

struct ProbeTrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  std::size_t max_steps = 0;  // 0: no limit
  double target_loss = 0;     // stop after an epoch whose mean loss is at or below this
  std::uint64_t seed = 1;
  AdamConfig adam;

  nlohmann::json ToJson() const;
  static ProbeTrainConfig FromJson(const nlohmann::json& j);
  void Validate() const;
};

// Probe input for a fixed list of utterances. Frozen (or encoder-less)
// representations are computed once; fine-tuned ones are recomputed through
// the encoder graph on every call.
template <typename T>
class ProbeFrontend {
 public:
  ProbeFrontend(Encoder<T>* encoder, TransferMode mode, std::span<const FeatureSequence> data);

  std::size_t size() const { return inputs_.size(); }
  std::size_t width() const;
  std::size_t length(std::size_t i) const { return inputs_[i].rows(); }
  const FeatureSequence& item(std::size_t i) const { return data_[i]; }

  // N x width representation of utterance i.
  Var<T> Utterance(std::size_t i) const;
  // Padded time-major block [Nmax*B x width], row t*B + b.
  Var<T> TimeMajor(std::span<const std::size_t> items, std::size_t& max_len) const;

  // Encoder parameters updated by the probe optimizer; empty when frozen.
  ParamList<T> TrainableParams() const;
  // Switches the encoder into training mode for one fine-tuning step.
  void BeginStep(std::uint64_t seed) const;
  void EndTraining() const;

 private:
  bool through_encoder() const { return encoder_ != nullptr && !mode_.frozen; }

  Encoder<T>* encoder_;
  TransferMode mode_;
  std::span<const FeatureSequence> data_;
  std::vector<Tensor<T>> inputs_;  // raw features or frozen representations
};

// ---- speaker identification ------------------------------------------------

struct SpeakerProbeConfig {
  std::size_t hidden = 512;
  ProbeTrainConfig train;

  nlohmann::json ToJson() const;
  static SpeakerProbeConfig FromJson(const nlohmann::json& j);
};

// One GRU layer read at the last valid frame, then a softmax over speakers.
template <typename T>
struct SpeakerProbe {
  std::vector<std::string> speakers;  // label order
  GruLayer<T> gru;
  Var<T> w_out;  // [hidden x speakers]
  Var<T> b_out;  // [1 x speakers]

  static SpeakerProbe Create(std::size_t input_dim, std::size_t hidden, std::vector<std::string> speakers,
                             std::uint64_t seed);
  ParamList<T> Params() const;
  std::size_t Label(const std::string& speaker) const;
  // time_major holds B sequences of the given lengths; returns [B x speakers] logits.
  Var<T> Logits(const Var<T>& time_major, std::span<const std::size_t> lengths) const;
};

template <typename T>
struct SpeakerProbeResult {
  SpeakerProbe<T> probe;
  double accuracy = 0;  // top-1 on the evaluation split
  std::vector<double> epoch_losses;
  std::size_t steps = 0;
};

// The first m utterances of every speaker, in input order; m == 0 keeps all.
// Throws InputError when a speaker has fewer than m.
std::vector<FeatureSequence> CapUtterancesPerSpeaker(std::span<const FeatureSequence> data, std::size_t m);

struct SpeakerSplit {
  std::vector<FeatureSequence> train;
  std::vector<FeatureSequence> eval;
};

// Holds out the last eval_per_speaker utterances of each speaker.
SpeakerSplit SplitPerSpeaker(std::span<const FeatureSequence> data, std::size_t eval_per_speaker);

// encoder may be null, in which case the probe reads raw features.
template <typename T>
SpeakerProbeResult<T> TrainSpeakerProbe(Encoder<T>* encoder, TransferMode mode,
                                       std::span<const FeatureSequence> train,
                                       std::span<const FeatureSequence> eval, const SpeakerProbeConfig& cfg);

template <typename T>
double EvaluateSpeakerProbe(Encoder<T>* encoder, const SpeakerProbe<T>& probe,
                            std::span<const FeatureSequence> eval);

}  // namespace apc

#endif  // APC_PROBES_H_
