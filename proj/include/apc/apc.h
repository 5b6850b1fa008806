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

#ifndef APC_APC_H_
#define APC_APC_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "apc/dsp.h"
#include "apc/encoders.h"
#include "apc/optim.h"
#include "json.hpp"

namespace apc {

struct ApcConfig {
  std::size_t n = 3;
  nlohmann::json encoder = {{"kind", "rnn"}};

  nlohmann::json ToJson() const;
  static ApcConfig FromJson(const nlohmann::json& j);
  void Validate() const;
};

struct ShiftedPair {
  Tensor<float> inputs;   // x_1 .. x_{N-n}
  Tensor<float> targets;  // x_{1+n} .. x_N
};

// Returns nothing, and logs a warning, when the sequence has N <= n frames.
std::optional<ShiftedPair> ShiftTargets(const FeatureSequence& x, std::size_t n);

// Zero-padded block of shifted pairs. Row b*max_len + i of the flattened
// block is frame i of utterance b.
struct ApcBatch {
  Tensor<float> inputs;   // [B x N_max x d]
  Tensor<float> targets;  // [B x N_max x d]
  std::vector<std::size_t> lengths;
  std::vector<std::string> utterance_ids;

  std::size_t size() const { return lengths.size(); }
  bool empty() const { return lengths.empty(); }
  std::size_t max_len() const { return inputs.dim(1); }
  std::size_t dim() const { return inputs.dim(2); }
  // [B*N_max x 1], one for valid rows.
  Tensor<float> Mask() const;
};

// Utterances too short for the objective are skipped; the batch may be empty.
ApcBatch MakeApcBatch(std::span<const FeatureSequence> utterances, std::size_t n);

template <typename T>
struct ApcLossValue {
  Var<T> sum;   // sum of |t - y| over valid positions
  Var<T> mean;  // sum / (valid frames * d); the optimized quantity
  std::size_t valid_frames = 0;
};

template <typename T>
ApcLossValue<T> ApcLoss(const Var<T>& y, const Var<T>& t);
// mask is [rows x 1] with entries in {0, 1}.
template <typename T>
ApcLossValue<T> ApcLoss(const Var<T>& y, const Var<T>& t, const Tensor<T>& mask);

template <typename T>
ApcLossValue<T> ApcBatchLoss(const Encoder<T>& encoder, const ApcBatch& batch);

struct StepResult {
  double loss_sum = 0;
  double loss_mean = 0;
  std::size_t frames = 0;
  double grad_norm = 0;
};

// One forward/backward/Adam cycle. Throws DivergenceError on a non-finite loss
// before any parameter is modified.
template <typename T>
StepResult ApcPretrainStep(const Encoder<T>& encoder, const ApcBatch& batch, Adam<T>& opt);

// Mean per-frame-per-dim L1 of the model's n-step prediction.
template <typename T>
double ApcEvaluateL1(const Encoder<T>& encoder, std::span<const FeatureSequence> data,
                     std::size_t n);

// Same metric for the predictor that emits x_k as the estimate of x_{k+n}.
double RepeatLastFrameL1(std::span<const FeatureSequence> data, std::size_t n);

}  // namespace apc

#endif  // APC_APC_H_
