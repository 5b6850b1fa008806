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

#include "apc/probes.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "apc/batching.h"
#include "apc/error.h"

namespace apc {
namespace {

template <typename T>
Tensor<T> PadBlock(const std::vector<const Tensor<T>*>& items, std::size_t& max_len) {
  max_len = 0;
  for (const auto* t : items) max_len = std::max(max_len, t->rows());
  const std::size_t d = items.front()->cols();
  Tensor<T> padded(Shape{items.size(), max_len, d});
  for (std::size_t b = 0; b < items.size(); ++b) {
    std::copy(items[b]->data(), items[b]->data() + items[b]->size(), padded.data() + b * max_len * d);
  }
  return padded;
}

void CheckKeys(const nlohmann::json& j, std::initializer_list<const char*> keys, const char* what) {
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError(std::string(what) + ": unknown field '" + key + "'");
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> Extract(const Encoder<T>& encoder, const Tensor<T>& x) {
  if (x.ndim() != 2 || x.cols() != encoder.input_dim()) {
    throw ConfigError("extract: encoder expects " + std::to_string(encoder.input_dim()) + "-dim frames, got " +
                      ShapeString(x.shape()));
  }
  NoGradGuard guard;
  const bool was_training = encoder.training();
  encoder.set_training(false);
  Tensor<T> h = encoder.Forward(Var<T>::Constant(x)).last().value();
  encoder.set_training(was_training);
  return h;
}

template <typename T>
std::vector<FeatureSequence> ExtractAll(const Encoder<T>& encoder, std::span<const FeatureSequence> data) {
  std::vector<FeatureSequence> out;
  out.reserve(data.size());
  for (const auto& u : data) {
    FeatureSequence r = u;
    r.frames = Extract(encoder, u.frames.Cast<T>()).template Cast<float>();
    out.push_back(std::move(r));
  }
  return out;
}

nlohmann::json ProbeTrainConfig::ToJson() const {
  return {{"epochs", epochs},         {"batch_size", batch_size}, {"max_steps", max_steps},
          {"target_loss", target_loss}, {"seed", seed},         {"adam", adam.ToJson()}};
}

ProbeTrainConfig ProbeTrainConfig::FromJson(const nlohmann::json& j) {
  CheckKeys(j, {"epochs", "batch_size", "max_steps", "target_loss", "seed", "adam"}, "probe training");
  ProbeTrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.target_loss = j.value("target_loss", c.target_loss);
    c.seed = j.value("seed", c.seed);
    if (j.contains("adam")) c.adam = AdamConfig::FromJson(j.at("adam"));
  } catch (const nlohmann::json::type_error& e) {
    throw ConfigError(std::string("probe training: ") + e.what());
  }
  c.Validate();
  return c;
}

void ProbeTrainConfig::Validate() const {
  if (epochs == 0) throw ConfigError("probe training: epochs must be positive");
  if (batch_size == 0) throw ConfigError("probe training: batch_size must be positive");
  if (!(target_loss >= 0)) throw ConfigError("probe training: target_loss must be non-negative");
  adam.Validate();
}

// ---- frontend -------------------------------------------------------------

template <typename T>
ProbeFrontend<T>::ProbeFrontend(Encoder<T>* encoder, TransferMode mode, std::span<const FeatureSequence> data)
    : encoder_(encoder), mode_(mode), data_(data) {
  if (data.empty()) throw InputError("probe: no utterances");
  for (const auto& u : data) {
    if (u.num_frames() == 0) throw InputError("probe: utterance '" + u.utterance_id + "' has no frames");
    if (u.dim() != data.front().dim()) throw DimensionError("probe: utterances differ in feature dimension");
    Tensor<T> x = u.frames.Cast<T>();
    if (encoder_ != nullptr && mode_.frozen) {
      inputs_.push_back(Extract(*encoder_, x));
    } else {
      if (encoder_ != nullptr && x.cols() != encoder_->input_dim()) {
        throw ConfigError("probe: encoder expects " + std::to_string(encoder_->input_dim()) + "-dim frames, got " +
                          std::to_string(x.cols()));
      }
      inputs_.push_back(std::move(x));
    }
  }
}

template <typename T>
std::size_t ProbeFrontend<T>::width() const {
  return encoder_ != nullptr ? encoder_->width() : inputs_.front().cols();
}

template <typename T>
Var<T> ProbeFrontend<T>::Utterance(std::size_t i) const {
  if (through_encoder()) return encoder_->Forward(Var<T>::Constant(inputs_[i])).last();
  return Var<T>::Constant(inputs_[i]);
}

template <typename T>
Var<T> ProbeFrontend<T>::TimeMajor(std::span<const std::size_t> items, std::size_t& max_len) const {
  std::vector<const Tensor<T>*> parts;
  for (auto i : items) parts.push_back(&inputs_.at(i));
  Tensor<T> padded = PadBlock(parts, max_len);
  if (!through_encoder()) return Var<T>::Constant(PaddedToTimeMajor(padded));
  auto out = encoder_->ForwardBatch(padded).last_hidden;
  const auto order = UtteranceMajorToTimeMajor(items.size(), max_len);
  return GatherRows(out, std::span<const std::int64_t>(order));
}

template <typename T>
ParamList<T> ProbeFrontend<T>::TrainableParams() const {
  return through_encoder() ? encoder_->Params() : ParamList<T>{};
}

template <typename T>
void ProbeFrontend<T>::BeginStep(std::uint64_t seed) const {
  if (!through_encoder()) return;
  encoder_->set_training(true);
  encoder_->set_dropout_seed(seed);
}

template <typename T>
void ProbeFrontend<T>::EndTraining() const {
  if (encoder_ != nullptr) encoder_->set_training(false);
}

// ---- speaker probe ----------------------------------------------------------

nlohmann::json SpeakerProbeConfig::ToJson() const { return {{"hidden", hidden}, {"train", train.ToJson()}}; }

SpeakerProbeConfig SpeakerProbeConfig::FromJson(const nlohmann::json& j) {
  CheckKeys(j, {"hidden", "train"}, "speaker probe");
  SpeakerProbeConfig c;
  try {
    c.hidden = j.value("hidden", c.hidden);
    if (j.contains("train")) c.train = ProbeTrainConfig::FromJson(j.at("train"));
  } catch (const nlohmann::json::type_error& e) {
    throw ConfigError(std::string("speaker probe: ") + e.what());
  }
  if (c.hidden == 0) throw ConfigError("speaker probe: hidden must be positive");
  return c;
}

template <typename T>
SpeakerProbe<T> SpeakerProbe<T>::Create(std::size_t input_dim, std::size_t hidden, std::vector<std::string> speakers,
                                        std::uint64_t seed) {
  if (speakers.empty()) throw InputError("speaker probe: no speakers");
  Initializer init(seed);
  SpeakerProbe p;
  p.speakers = std::move(speakers);
  p.gru = GruLayer<T>::Create(input_dim, hidden, init);
  p.w_out = init.Uniform<T>(hidden, p.speakers.size());
  p.b_out = init.Filled<T>(1, p.speakers.size(), T(0));
  return p;
}

template <typename T>
ParamList<T> SpeakerProbe<T>::Params() const {
  ParamList<T> out;
  gru.AppendParams("spk.gru", out);
  out.push_back({"spk.w_out", w_out});
  out.push_back({"spk.b_out", b_out});
  return out;
}

template <typename T>
std::size_t SpeakerProbe<T>::Label(const std::string& speaker) const {
  auto it = std::lower_bound(speakers.begin(), speakers.end(), speaker);
  if (it == speakers.end() || *it != speaker) {
    throw InputError("speaker probe: speaker '" + speaker + "' was not seen in training");
  }
  return static_cast<std::size_t>(it - speakers.begin());
}

template <typename T>
Var<T> SpeakerProbe<T>::Logits(const Var<T>& time_major, std::span<const std::size_t> lengths) const {
  const std::size_t B = lengths.size();
  auto states = GruSequence(time_major, B, gru);
  std::vector<std::int64_t> last(B);
  for (std::size_t b = 0; b < B; ++b) last[b] = static_cast<std::int64_t>((lengths[b] - 1) * B + b);
  return Add(Matmul(GatherRows(states, std::span<const std::int64_t>(last)), w_out), b_out);
}

std::vector<FeatureSequence> CapUtterancesPerSpeaker(std::span<const FeatureSequence> data, std::size_t m) {
  std::map<std::string, std::size_t> count, kept;
  for (const auto& u : data) ++count[u.speaker_id];
  if (m > 0) {
    for (const auto& [speaker, c] : count) {
      if (c < m) {
        throw InputError("speaker probe: speaker '" + speaker + "' has " + std::to_string(c) +
                         " training utterances, fewer than the cap " + std::to_string(m));
      }
    }
  }
  std::vector<FeatureSequence> out;
  for (const auto& u : data) {
    if (m == 0 || kept[u.speaker_id]++ < m) out.push_back(u);
  }
  return out;
}

SpeakerSplit SplitPerSpeaker(std::span<const FeatureSequence> data, std::size_t eval_per_speaker) {
  std::map<std::string, std::size_t> count, seen;
  for (const auto& u : data) ++count[u.speaker_id];
  SpeakerSplit split;
  for (const auto& u : data) {
    const std::size_t rank = seen[u.speaker_id]++;
    if (rank + eval_per_speaker >= count[u.speaker_id]) {
      split.eval.push_back(u);
    } else {
      split.train.push_back(u);
    }
  }
  return split;
}

template <typename T>
double EvaluateSpeakerProbe(Encoder<T>* encoder, const SpeakerProbe<T>& probe,
                            std::span<const FeatureSequence> eval) {
  if (eval.empty()) throw InputError("speaker probe: empty evaluation set");
  std::vector<std::size_t> labels;
  for (const auto& u : eval) labels.push_back(probe.Label(u.speaker_id));
  NoGradGuard guard;
  ProbeFrontend<T> front(encoder, TransferMode::Frozen(), eval);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < eval.size(); ++i) {
    const std::size_t item[] = {i};
    std::size_t n = 0;
    const std::size_t len[] = {front.length(i)};
    auto logits = probe.Logits(front.TimeMajor(item, n), len).value();
    const auto row = logits.row(0);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    correct += best == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(eval.size());
}

template <typename T>
SpeakerProbeResult<T> TrainSpeakerProbe(Encoder<T>* encoder, TransferMode mode,
                                       std::span<const FeatureSequence> train,
                                       std::span<const FeatureSequence> eval, const SpeakerProbeConfig& cfg) {
  cfg.train.Validate();
  if (train.empty()) throw InputError("speaker probe: empty training set");
  std::set<std::string> speaker_set;
  for (const auto& u : train) speaker_set.insert(u.speaker_id);
  for (const auto& u : eval) {
    if (!speaker_set.count(u.speaker_id)) {
      throw InputError("speaker probe: evaluation speaker '" + u.speaker_id + "' is absent from training");
    }
  }
  ProbeFrontend<T> front(encoder, mode, train);
  SpeakerProbeResult<T> result{SpeakerProbe<T>::Create(front.width(), cfg.hidden,
                                                       {speaker_set.begin(), speaker_set.end()},
                                                       DeriveSeed(cfg.train.seed, 0x5b1d)),
                                 0.0, {}, 0};
  ParamList<T> params = result.probe.Params();
  for (auto& p : front.TrainableParams()) params.push_back(p);
  Adam<T> opt(params, cfg.train.adam);

  std::vector<std::size_t> lengths(train.size()), labels(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    lengths[i] = front.length(i);
    labels[i] = result.probe.Label(train[i].speaker_id);
  }
  bool done = false;
  for (std::size_t epoch = 0; epoch < cfg.train.epochs && !done; ++epoch) {
    const auto plan = MakeBatches(lengths, cfg.train.batch_size, cfg.train.seed, epoch);
    double loss_sum = 0;
    for (std::size_t i = 0; i < plan.batches.size(); ++i) {
      const auto& batch = plan.batches[i];
      front.BeginStep(DeriveSeed(cfg.train.seed, epoch + 1, i + 1));
      ZeroGrads(params);
      std::size_t max_len = 0;
      std::vector<std::size_t> lens;
      std::vector<std::int64_t> targets;
      for (auto j : batch) {
        lens.push_back(lengths[j]);
        targets.push_back(static_cast<std::int64_t>(labels[j]));
      }
      auto logits = result.probe.Logits(front.TimeMajor(batch, max_len), lens);
      auto picked = PickColumns(LogSoftmax(logits, 1), std::span<const std::int64_t>(targets));
      auto loss = Scale(Mean(picked), T(-1));
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) throw DivergenceError("speaker probe: non-finite loss");
      Backward(loss);
      opt.Step();
      loss_sum += value * static_cast<double>(batch.size());
      ++result.steps;
      if (cfg.train.max_steps > 0 && result.steps >= cfg.train.max_steps) {
        done = true;
        break;
      }
    }
    result.epoch_losses.push_back(loss_sum / static_cast<double>(train.size()));
    if (result.epoch_losses.back() <= cfg.train.target_loss) done = true;
  }
  front.EndTraining();
  if (!eval.empty()) result.accuracy = EvaluateSpeakerProbe(encoder, result.probe, eval);
  return result;
}

#define APC_INSTANTIATE_PROBES(T)                                                                      \
  template Tensor<T> Extract(const Encoder<T>&, const Tensor<T>&);                                      \
  template std::vector<FeatureSequence> ExtractAll(const Encoder<T>&, std::span<const FeatureSequence>); \
  template class ProbeFrontend<T>;                                                                      \
  template struct SpeakerProbe<T>;                                                                      \
  template double EvaluateSpeakerProbe(Encoder<T>*, const SpeakerProbe<T>&,                             \
                                       std::span<const FeatureSequence>);                               \
  template SpeakerProbeResult<T> TrainSpeakerProbe(Encoder<T>*, TransferMode,                           \
                                                   std::span<const FeatureSequence>,                    \
                                                   std::span<const FeatureSequence>,                    \
                                                   const SpeakerProbeConfig&);

APC_INSTANTIATE_PROBES(float)
APC_INSTANTIATE_PROBES(double)

}  // namespace apc
