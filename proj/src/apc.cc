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

#include "apc/apc.h"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "apc/error.h"

namespace apc {

nlohmann::json ApcConfig::ToJson() const { return {{"n", n}, {"encoder", encoder}}; }

ApcConfig ApcConfig::FromJson(const nlohmann::json& j) {
  ApcConfig c;
  c.n = j.value("n", c.n);
  if (j.contains("encoder")) c.encoder = j.at("encoder");
  c.Validate();
  return c;
}

void ApcConfig::Validate() const {
  if (n < 1) throw ConfigError("apc: prediction step n must be at least 1");
  const std::string kind = encoder.value("kind", "");
  if (kind != "rnn" && kind != "transformer") {
    throw ConfigError("apc: unknown encoder kind '" + kind + "' (expected rnn or transformer)");
  }
}

std::optional<ShiftedPair> ShiftTargets(const FeatureSequence& x, std::size_t n) {
  if (n < 1) throw ConfigError("shift_targets: n must be at least 1");
  const std::size_t N = x.frames.rows(), d = x.frames.cols();
  if (N <= n) {
    spdlog::warn("shift_targets: skipping utterance '{}' with {} frames, need more than n={}",
                 x.utterance_id, N, n);
    return std::nullopt;
  }
  const float* src = x.frames.data();
  const std::size_t m = (N - n) * d;
  return ShiftedPair{Tensor<float>(Shape{N - n, d}, std::vector<float>(src, src + m)),
                     Tensor<float>(Shape{N - n, d}, std::vector<float>(src + n * d, src + n * d + m))};
}

Tensor<float> ApcBatch::Mask() const {
  Tensor<float> mask(size() * max_len(), 1);
  for (std::size_t b = 0; b < size(); ++b)
    for (std::size_t i = 0; i < lengths[b]; ++i) mask[b * max_len() + i] = 1.0f;
  return mask;
}

ApcBatch MakeApcBatch(std::span<const FeatureSequence> utterances, std::size_t n) {
  std::vector<ShiftedPair> pairs;
  ApcBatch batch;
  std::size_t d = 0;
  for (const auto& u : utterances) {
    if (d == 0) d = u.frames.cols();
    if (u.frames.cols() != d) {
      throw DimensionError("apc batch: utterance '" + u.utterance_id + "' has " +
                           std::to_string(u.frames.cols()) + " dims, expected " + std::to_string(d));
    }
    auto p = ShiftTargets(u, n);
    if (!p) continue;
    batch.lengths.push_back(p->inputs.rows());
    batch.utterance_ids.push_back(u.utterance_id);
    pairs.push_back(std::move(*p));
  }
  if (pairs.empty()) return batch;
  const std::size_t B = pairs.size();
  const std::size_t N = *std::max_element(batch.lengths.begin(), batch.lengths.end());
  batch.inputs = Tensor<float>(Shape{B, N, d});
  batch.targets = Tensor<float>(Shape{B, N, d});
  for (std::size_t b = 0; b < B; ++b) {
    std::copy(pairs[b].inputs.data(), pairs[b].inputs.data() + pairs[b].inputs.size(),
              batch.inputs.data() + b * N * d);
    std::copy(pairs[b].targets.data(), pairs[b].targets.data() + pairs[b].targets.size(),
              batch.targets.data() + b * N * d);
  }
  return batch;
}

namespace {

template <typename T>
ApcLossValue<T> Finish(const Var<T>& abs_diff, std::size_t valid_rows, std::size_t cols) {
  if (valid_rows == 0) throw InputError("apc_loss: no valid positions");
  ApcLossValue<T> out;
  out.sum = Sum(abs_diff);
  out.mean = Scale(out.sum, static_cast<T>(1.0 / static_cast<double>(valid_rows * cols)));
  out.valid_frames = valid_rows;
  return out;
}

template <typename T>
void CheckLossShapes(const Var<T>& y, const Var<T>& t) {
  if (y.shape() != t.shape() || y.value().ndim() != 2) {
    throw DimensionError("apc_loss: predictions " + ShapeString(y.shape()) + " vs targets " +
                         ShapeString(t.shape()));
  }
}

}  // namespace

template <typename T>
ApcLossValue<T> ApcLoss(const Var<T>& y, const Var<T>& t) {
  CheckLossShapes(y, t);
  return Finish(Abs(Sub(y, t)), y.rows(), y.cols());
}

template <typename T>
ApcLossValue<T> ApcLoss(const Var<T>& y, const Var<T>& t, const Tensor<T>& mask) {
  CheckLossShapes(y, t);
  if (mask.shape() != Shape{y.rows(), 1}) {
    throw DimensionError("apc_loss: mask " + ShapeString(mask.shape()) + " for " +
                         std::to_string(y.rows()) + " rows");
  }
  std::size_t valid = 0;
  for (T m : mask.values()) {
    if (m != T(0) && m != T(1)) throw ContractError("apc_loss: mask entries must be 0 or 1");
    valid += m == T(1);
  }
  return Finish(Mul(Abs(Sub(y, t)), Var<T>::Constant(mask)), valid, y.cols());
}

template <typename T>
ApcLossValue<T> ApcBatchLoss(const Encoder<T>& encoder, const ApcBatch& batch) {
  if (batch.empty()) throw InputError("apc: empty batch");
  const std::size_t rows = batch.size() * batch.max_len();
  auto out = encoder.ForwardBatch(batch.inputs.Cast<T>());
  auto targets = Var<T>::Constant(batch.targets.Cast<T>().Reshaped(Shape{rows, batch.dim()}));
  return ApcLoss(out.predictions, targets, batch.Mask().Cast<T>());
}

template <typename T>
StepResult ApcPretrainStep(const Encoder<T>& encoder, const ApcBatch& batch, Adam<T>& opt) {
  ZeroGrads(opt.params());
  auto loss = ApcBatchLoss(encoder, batch);
  StepResult r;
  r.loss_sum = static_cast<double>(loss.sum.item());
  r.loss_mean = static_cast<double>(loss.mean.item());
  r.frames = loss.valid_frames;
  if (!std::isfinite(r.loss_mean)) {
    throw DivergenceError("apc: non-finite loss at step " + std::to_string(opt.step() + 1));
  }
  Backward(loss.mean);
  r.grad_norm = opt.Step();
  return r;
}

template <typename T>
double ApcEvaluateL1(const Encoder<T>& encoder, std::span<const FeatureSequence> data,
                     std::size_t n) {
  NoGradGuard guard;
  double total = 0;
  std::size_t count = 0;
  for (const auto& u : data) {
    auto p = ShiftTargets(u, n);
    if (!p) continue;
    auto y = encoder.Forward(Var<T>::Constant(p->inputs.Cast<T>())).predictions;
    auto loss = ApcLoss(y, Var<T>::Constant(p->targets.Cast<T>()));
    total += static_cast<double>(loss.sum.item());
    count += p->targets.size();
  }
  if (count == 0) throw InputError("apc evaluation: no utterance longer than n frames");
  return total / static_cast<double>(count);
}

double RepeatLastFrameL1(std::span<const FeatureSequence> data, std::size_t n) {
  double total = 0;
  std::size_t count = 0;
  for (const auto& u : data) {
    auto p = ShiftTargets(u, n);
    if (!p) continue;
    for (std::size_t i = 0; i < p->inputs.size(); ++i) {
      total += std::abs(static_cast<double>(p->inputs[i]) - p->targets[i]);
    }
    count += p->inputs.size();
  }
  if (count == 0) throw InputError("repeat-last-frame: no utterance longer than n frames");
  return total / static_cast<double>(count);
}

#define APC_INSTANTIATE_OBJECTIVE(T)                                                     \
  template ApcLossValue<T> ApcLoss(const Var<T>&, const Var<T>&);                        \
  template ApcLossValue<T> ApcLoss(const Var<T>&, const Var<T>&, const Tensor<T>&);      \
  template ApcLossValue<T> ApcBatchLoss(const Encoder<T>&, const ApcBatch&);             \
  template StepResult ApcPretrainStep(const Encoder<T>&, const ApcBatch&, Adam<T>&);     \
  template double ApcEvaluateL1(const Encoder<T>&, std::span<const FeatureSequence>,     \
                                std::size_t);

APC_INSTANTIATE_OBJECTIVE(float)
APC_INSTANTIATE_OBJECTIVE(double)

}  // namespace apc
