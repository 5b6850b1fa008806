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

#ifndef APC_PIPELINE_H_
#define APC_PIPELINE_H_

// End-to-end transfer sweeps: pre-train the encoders a protocol needs, then
// run one probe per table cell.

#include <cstddef>
#include <span>
#include <string>

#include "apc/dsp.h"
#include "apc/experiment.h"
#include "apc/probes.h"
#include "apc/seq2seq.h"
#include "apc/sweep.h"
#include "json.hpp"

namespace apc {

struct TransferSweepConfig {
  SweepProtocol protocol = SweepProtocol::kNSweep;
  // wer | cer for the seq2seq protocols, accuracy for utts-per-speaker.
  // Empty selects wer or accuracy.
  std::string metric;
  std::string work_dir = "sweep";
  // Seed, epochs, batch size and optimizer for pre-training. Objective, n,
  // model and output_dir are set per encoder.
  RunConfig pretrain;
  nlohmann::json rnn_model = {{"kind", "rnn"}};
  nlohmann::json transformer_model = {{"kind", "transformer"}};
  nlohmann::json cpc_model = {{"kind", "cpc"}};
  // n for the R-APC, T-APC and CPC rows outside the n sweep.
  std::size_t rnn_n = 3;
  std::size_t transformer_n = 5;
  std::size_t cpc_n = 3;
  Seq2SeqProbeConfig seq2seq;
  SpeakerProbeConfig speaker;

  nlohmann::json ToJson() const;
  static TransferSweepConfig FromJson(const nlohmann::json& j);
  void Validate() const;
  std::string ResolvedMetric() const;
};

// Row labels for a protocol, in table order.
std::vector<std::string> TransferSweepRows(SweepProtocol protocol);

struct TransferSweepData {
  std::span<const FeatureSequence> pretrain;  // unlabeled audio features
  std::span<const FeatureSequence> train;     // probe training split
  std::span<const FeatureSequence> eval;      // probe evaluation split
};

// Writes <work_dir>/pretrain/<encoder>-n<n>/ runs (reused when complete),
// <work_dir>/cells.jsonl with one object per cell and
// <work_dir>/results.tsv.
SweepTable RunTransferSweep(const TransferSweepConfig& cfg, const TransferSweepData& data,
                            const SweepProgressFn& progress = {});

}  // namespace apc

#endif  // APC_PIPELINE_H_
