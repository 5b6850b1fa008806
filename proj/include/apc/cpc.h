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

#ifndef APC_CPC_H_
#define APC_CPC_H_

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "apc/apc.h"
#include "apc/encoders.h"
#include "apc/optim.h"

namespace apc {

enum class NegativeStrategy { kSameUtterance, kSameBatchOtherUtterances };

const char* NegativeStrategyName(NegativeStrategy s);
NegativeStrategy ParseNegativeStrategy(const std::string& name);

struct CpcConfig {
  std::size_t input_dim = 80;
  std::size_t embed_dim = 512;  // z = x W_z
  std::size_t hidden = 512;     // context GRU width
  std::size_t layers = 4;
  bool residual = true;
  std::size_t n = 3;
  std::size_t negatives = 10;  // K
  NegativeStrategy strategy = NegativeStrategy::kSameBatchOtherUtterances;
  // W_n starts small so the untrained scores are nearly uniform.
  double score_init_scale = 0.01;

  nlohmann::json ToJson() const;
  static CpcConfig FromJson(const nlohmann::json& j);
  void Validate() const;
};

// Frame embedding z_t = x_t W_z, context c_t = GRU stack over z_1..z_t, and
// score s = z^T W_n c. As an Encoder, hidden holds the context layers and
// predictions holds z.
template <typename T>
class CpcEncoder : public Encoder<T> {
 public:
  CpcEncoder(const CpcConfig& cfg, std::uint64_t seed);

  EncoderKind kind() const override { return EncoderKind::kCpc; }
  std::size_t input_dim() const override { return cfg_.input_dim; }
  std::size_t width() const override { return cfg_.hidden; }
  std::size_t num_layers() const override { return cfg_.layers; }

  EncoderOutput<T> Forward(const Var<T>& x) const override;
  // last_hidden is the context c, predictions the embeddings z.
  BatchOutput<T> ForwardBatch(const Tensor<T>& padded) const override;
  ParamList<T> Params() const override;
  nlohmann::json Config() const override { return cfg_.ToJson(); }

  const CpcConfig& config() const { return cfg_; }
  const Var<T>& embedding() const { return w_z_; }
  const Var<T>& score_matrix() const { return w_n_; }  // [hidden x embed_dim]

 private:
  CpcConfig cfg_;
  Var<T> w_z_;
  std::vector<GruLayer<T>> layers_;
  Var<T> w_n_;
};

struct FramePosition {
  std::size_t utterance = 0;
  std::size_t frame = 0;
  bool operator==(const FramePosition&) const = default;
};

struct NegativeSet {
  std::vector<FramePosition> positions;
};

// Uniform sampling of K distinct frames without replacement. Candidates are
// all frames of the anchor utterance except the positive (same_utterance) or
// all frames of the other utterances (same_batch_other_utterances).
NegativeSet SampleNegatives(std::span<const std::size_t> lengths, std::size_t anchor_utterance,
                            std::size_t anchor_frame, std::size_t n, std::size_t k,
                            NegativeStrategy strategy, std::mt19937_64& rng);

// -log softmax(s)[0] over s = [z_pos; negatives] W_n^T c^T.
// c is [1 x H], z_pos [1 x E], negatives [K x E], w_n [H x E].
template <typename T>
Var<T> InfoNceLoss(const Var<T>& c, const Var<T>& z_pos, const Var<T>& negatives, const Var<T>& w_n);

// Padded raw frames; utterances with N <= n are skipped.
struct CpcBatch {
  Tensor<float> features;  // [B x N_max x d]
  std::vector<std::size_t> lengths;
  std::vector<std::string> utterance_ids;
  std::size_t size() const { return lengths.size(); }
  bool empty() const { return lengths.empty(); }
};

CpcBatch MakeCpcBatch(std::span<const FeatureSequence> utterances, std::size_t n);

template <typename T>
struct CpcLossValue {
  Var<T> loss;  // mean InfoNCE over anchors
  std::size_t anchors = 0;
};

// Anchors at every valid k with k + n inside the utterance.
template <typename T>
CpcLossValue<T> CpcBatchLoss(const CpcEncoder<T>& model, const CpcBatch& batch, std::mt19937_64& rng);

template <typename T>
StepResult CpcPretrainStep(const CpcEncoder<T>& model, const CpcBatch& batch, Adam<T>& opt,
                           std::mt19937_64& rng);

}  // namespace apc

#endif  // APC_CPC_H_
