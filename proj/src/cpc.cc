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

#include "apc/cpc.h"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "apc/error.h"

namespace apc {

const char* NegativeStrategyName(NegativeStrategy s) {
  return s == NegativeStrategy::kSameUtterance ? "same_utterance" : "same_batch_other_utterances";
}

NegativeStrategy ParseNegativeStrategy(const std::string& name) {
  if (name == "same_utterance") return NegativeStrategy::kSameUtterance;
  if (name == "same_batch_other_utterances") return NegativeStrategy::kSameBatchOtherUtterances;
  throw ConfigError("unknown negative sampling strategy '" + name +
                    "' (expected same_utterance or same_batch_other_utterances)");
}

nlohmann::json CpcConfig::ToJson() const {
  return {{"kind", "cpc"},
          {"input_dim", input_dim},
          {"embed_dim", embed_dim},
          {"hidden", hidden},
          {"layers", layers},
          {"residual", residual},
          {"n", n},
          {"negatives", negatives},
          {"strategy", NegativeStrategyName(strategy)},
          {"score_init_scale", score_init_scale}};
}

CpcConfig CpcConfig::FromJson(const nlohmann::json& j) {
  CpcConfig c;
  if (j.contains("kind") && j.at("kind") != "cpc") {
    throw ConfigError("cpc: config kind is " + j.at("kind").dump());
  }
  c.input_dim = j.value("input_dim", c.input_dim);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.hidden = j.value("hidden", c.hidden);
  c.layers = j.value("layers", c.layers);
  c.residual = j.value("residual", c.residual);
  c.n = j.value("n", c.n);
  c.negatives = j.value("negatives", c.negatives);
  if (j.contains("strategy")) c.strategy = ParseNegativeStrategy(j.at("strategy").get<std::string>());
  c.score_init_scale = j.value("score_init_scale", c.score_init_scale);
  c.Validate();
  return c;
}

void CpcConfig::Validate() const {
  if (input_dim == 0 || embed_dim == 0 || hidden == 0 || layers == 0) {
    throw ConfigError("cpc: dimensions and layer count must be positive");
  }
  if (n < 1) throw ConfigError("cpc: prediction step n must be at least 1");
  if (negatives < 1) throw ConfigError("cpc: the number of negatives K must be at least 1");
  if (!(score_init_scale > 0)) throw ConfigError("cpc: score_init_scale must be positive");
}

template <typename T>
CpcEncoder<T>::CpcEncoder(const CpcConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.Validate();
  Initializer init(seed);
  w_z_ = init.Uniform<T>(cfg_.input_dim, cfg_.embed_dim);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    layers_.push_back(GruLayer<T>::Create(l == 0 ? cfg_.embed_dim : cfg_.hidden, cfg_.hidden, init));
  }
  w_n_ = init.Uniform<T>(cfg_.hidden, cfg_.embed_dim, cfg_.score_init_scale);
}

template <typename T>
EncoderOutput<T> CpcEncoder<T>::Forward(const Var<T>& x) const {
  if (x.value().ndim() != 2 || x.cols() != cfg_.input_dim) {
    throw DimensionError("cpc: input " + ShapeString(x.shape()) + ", expected [N x " +
                         std::to_string(cfg_.input_dim) + "]");
  }
  EncoderOutput<T> out;
  out.predictions = Matmul(x, w_z_);
  out.hidden = GruStack(layers_, out.predictions, 1, cfg_.residual, 0.0, {});
  return out;
}

template <typename T>
BatchOutput<T> CpcEncoder<T>::ForwardBatch(const Tensor<T>& padded) const {
  if (padded.ndim() != 3 || padded.dim(2) != cfg_.input_dim) {
    throw DimensionError("cpc: batch " + ShapeString(padded.shape()) + ", expected [B x N x " +
                         std::to_string(cfg_.input_dim) + "]");
  }
  const std::size_t B = padded.dim(0), N = padded.dim(1);
  Var<T> z_tm = Matmul(Var<T>::Constant(PaddedToTimeMajor(padded)), w_z_);
  auto hidden = GruStack(layers_, z_tm, B, cfg_.residual, 0.0, {});
  const auto order = TimeMajorToUtteranceMajor(B, N);
  return {GatherRows<T>(hidden.back(), order), GatherRows<T>(z_tm, order)};
}

template <typename T>
ParamList<T> CpcEncoder<T>::Params() const {
  ParamList<T> out{{"cpc.w_z", w_z_}};
  for (std::size_t l = 0; l < layers_.size(); ++l) layers_[l].AppendParams("cpc.gru" + std::to_string(l), out);
  out.push_back({"cpc.w_n", w_n_});
  return out;
}

NegativeSet SampleNegatives(std::span<const std::size_t> lengths, std::size_t anchor_utterance,
                            std::size_t anchor_frame, std::size_t n, std::size_t k,
                            NegativeStrategy strategy, std::mt19937_64& rng) {
  if (anchor_utterance >= lengths.size()) throw InputError("sample_negatives: anchor utterance out of range");
  const std::size_t positive = anchor_frame + n;
  if (positive >= lengths[anchor_utterance]) {
    throw InputError("sample_negatives: positive frame " + std::to_string(positive) +
                     " lies outside utterance of length " + std::to_string(lengths[anchor_utterance]));
  }
  std::size_t candidates = 0;
  if (strategy == NegativeStrategy::kSameUtterance) {
    candidates = lengths[anchor_utterance] - 1;
  } else {
    for (std::size_t u = 0; u < lengths.size(); ++u)
      if (u != anchor_utterance) candidates += lengths[u];
  }
  if (candidates < k) {
    throw InputError("sample_negatives: " + std::to_string(candidates) + " candidate frames under " +
                     NegativeStrategyName(strategy) + " but K=" + std::to_string(k) +
                     "; use a larger batch or a smaller K");
  }
  // Floyd's algorithm: k distinct indices, uniform over all k-subsets.
  std::unordered_set<std::size_t> seen;
  std::vector<std::size_t> picked;
  for (std::size_t j = candidates - k; j < candidates; ++j) {
    std::size_t t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
    if (!seen.insert(t).second) {
      t = j;
      seen.insert(t);
    }
    picked.push_back(t);
  }
  NegativeSet out;
  for (std::size_t idx : picked) {
    FramePosition p;
    if (strategy == NegativeStrategy::kSameUtterance) {
      p = {anchor_utterance, idx < positive ? idx : idx + 1};
    } else {
      std::size_t u = 0;
      for (;; ++u) {
        if (u == anchor_utterance) continue;
        if (idx < lengths[u]) break;
        idx -= lengths[u];
      }
      p = {u, idx};
    }
    if (p.utterance == anchor_utterance && p.frame == positive) {
      throw ContractError("sample_negatives: drew the positive frame");
    }
    out.positions.push_back(p);
  }
  return out;
}

template <typename T>
Var<T> InfoNceLoss(const Var<T>& c, const Var<T>& z_pos, const Var<T>& negatives, const Var<T>& w_n) {
  if (c.rows() != 1 || z_pos.rows() != 1 || c.cols() != w_n.rows() || z_pos.cols() != w_n.cols() ||
      negatives.cols() != w_n.cols()) {
    throw DimensionError("infonce: c " + ShapeString(c.shape()) + ", z " + ShapeString(z_pos.shape()) +
                         ", negatives " + ShapeString(negatives.shape()) + ", W_n " + ShapeString(w_n.shape()));
  }
  const Var<T> parts[] = {z_pos, negatives};
  Var<T> scores = MatmulNT(Matmul(c, w_n), ConcatRows<T>(parts));  // [1 x K+1]
  return Scale(Sum(SliceCols(LogSoftmax(scores, 1), 0, 1)), T(-1));
}

CpcBatch MakeCpcBatch(std::span<const FeatureSequence> utterances, std::size_t n) {
  CpcBatch batch;
  std::vector<const FeatureSequence*> kept;
  for (const auto& u : utterances) {
    if (u.num_frames() <= n) {
      continue;
    }
    if (!kept.empty() && u.dim() != kept.front()->dim()) {
      throw DimensionError("cpc batch: utterance '" + u.utterance_id + "' has mismatched dimension");
    }
    kept.push_back(&u);
    batch.lengths.push_back(u.num_frames());
    batch.utterance_ids.push_back(u.utterance_id);
  }
  if (kept.empty()) return batch;
  const std::size_t N = *std::max_element(batch.lengths.begin(), batch.lengths.end());
  const std::size_t d = kept.front()->dim();
  batch.features = Tensor<float>(Shape{kept.size(), N, d});
  for (std::size_t b = 0; b < kept.size(); ++b) {
    std::copy(kept[b]->frames.data(), kept[b]->frames.data() + kept[b]->frames.size(),
              batch.features.data() + b * N * d);
  }
  return batch;
}

template <typename T>
CpcLossValue<T> CpcBatchLoss(const CpcEncoder<T>& model, const CpcBatch& batch, std::mt19937_64& rng) {
  if (batch.empty()) throw InputError("cpc: empty batch");
  const auto& cfg = model.config();
  const std::size_t N = batch.features.dim(1), K = cfg.negatives;
  auto out = model.ForwardBatch(batch.features.Cast<T>());
  std::vector<std::int64_t> anchor_rows, candidate_rows, repeat_rows;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (std::size_t k = 0; k + cfg.n < batch.lengths[b]; ++k) {
      const auto negs = SampleNegatives(batch.lengths, b, k, cfg.n, K, cfg.strategy, rng);
      const auto a = static_cast<std::int64_t>(anchor_rows.size());
      anchor_rows.push_back(static_cast<std::int64_t>(b * N + k));
      candidate_rows.push_back(static_cast<std::int64_t>(b * N + k + cfg.n));
      for (const auto& p : negs.positions) candidate_rows.push_back(static_cast<std::int64_t>(p.utterance * N + p.frame));
      repeat_rows.insert(repeat_rows.end(), K + 1, a);
    }
  }
  const std::size_t A = anchor_rows.size();
  Var<T> projected = Matmul(GatherRows<T>(out.last_hidden, anchor_rows), model.score_matrix());  // [A x E]
  Var<T> candidates = GatherRows<T>(out.predictions, candidate_rows);                           // [A(K+1) x E]
  Var<T> scores = Reshape(SumAxis(Mul(candidates, GatherRows<T>(projected, repeat_rows)), 1), Shape{A, K + 1});
  CpcLossValue<T> result;
  result.loss = Scale(Mean(SliceCols(LogSoftmax(scores, 1), 0, 1)), T(-1));
  result.anchors = A;
  return result;
}

template <typename T>
StepResult CpcPretrainStep(const CpcEncoder<T>& model, const CpcBatch& batch, Adam<T>& opt,
                           std::mt19937_64& rng) {
  ZeroGrads(opt.params());
  auto loss = CpcBatchLoss(model, batch, rng);
  StepResult r;
  r.loss_mean = static_cast<double>(loss.loss.item());
  r.loss_sum = r.loss_mean * static_cast<double>(loss.anchors);
  r.frames = loss.anchors;
  if (!std::isfinite(r.loss_mean)) {
    throw DivergenceError("cpc: non-finite loss at step " + std::to_string(opt.step() + 1));
  }
  Backward(loss.loss);
  r.grad_norm = opt.Step();
  return r;
}

#define APC_INSTANTIATE_CPC(T)                                                                 \
  template class CpcEncoder<T>;                                                                \
  template Var<T> InfoNceLoss(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&);     \
  template CpcLossValue<T> CpcBatchLoss(const CpcEncoder<T>&, const CpcBatch&, std::mt19937_64&); \
  template StepResult CpcPretrainStep(const CpcEncoder<T>&, const CpcBatch&, Adam<T>&,         \
                                      std::mt19937_64&);

APC_INSTANTIATE_CPC(float)
APC_INSTANTIATE_CPC(double)

}  // namespace apc
