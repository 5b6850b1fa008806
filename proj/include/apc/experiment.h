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

#ifndef APC_EXPERIMENT_H_
#define APC_EXPERIMENT_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "apc/dsp.h"
#include "apc/optim.h"
#include "json.hpp"

namespace apc {

// Pre-training run description, read from a JSON file. Every field can be
// overridden from the command line.
struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::string objective = "apc";  // apc | cpc
  std::size_t n = 3;
  nlohmann::json model = {{"kind", "rnn"}};
  AdamConfig adam;
  std::string train_features;  // APCT feature cache
  std::string manifest;        // used when train_features is empty
  std::string output_dir = "run";
  std::size_t checkpoint_every = 1;  // epochs
  bool resume = true;

  nlohmann::json ToJson() const;
  static RunConfig FromJson(const nlohmann::json& j);
  // Checks every field, including the model config, before any work starts.
  void Validate() const;
  // The model config with the objective applied (input_dim, CPC step).
  nlohmann::json ResolvedModel(std::size_t input_dim) const;
};

RunConfig LoadRunConfig(const std::string& path);

struct EpochSummary {
  std::size_t epoch = 0;
  double mean_loss = 0;  // frame-weighted over the epoch
  std::size_t steps = 0;
};

struct ExperimentResult {
  std::string checkpoint_path;
  std::string log_path;
  std::vector<EpochSummary> epochs;  // epochs run by this call only
  std::int64_t total_steps = 0;
  std::size_t first_epoch = 0;  // > 0 after a resume
};

// Runs epochs [resumed epoch, cfg.epochs). Logs one JSON object per step and
// per epoch to <output_dir>/train.jsonl and writes <output_dir>/checkpoint.apct
// every checkpoint_every epochs and at the end.
ExperimentResult RunExperiment(const RunConfig& cfg, std::span<const FeatureSequence> train);
// Loads the training data named by the config.
ExperimentResult RunExperiment(const RunConfig& cfg);

std::vector<FeatureSequence> LoadTrainingData(const RunConfig& cfg);

}  // namespace apc

#endif  // APC_EXPERIMENT_H_
