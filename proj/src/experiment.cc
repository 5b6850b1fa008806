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

#include "apc/experiment.h"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "apc/apc.h"
#include "apc/batching.h"
#include "apc/checkpoint.h"
#include "apc/cpc.h"
#include "apc/error.h"
#include "apc/io.h"

namespace apc {
namespace fs = std::filesystem;

nlohmann::json RunConfig::ToJson() const {
  return {{"seed", seed},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"objective", objective},
          {"n", n},
          {"model", model},
          {"adam", adam.ToJson()},
          {"train_features", train_features},
          {"manifest", manifest},
          {"output_dir", output_dir},
          {"checkpoint_every", checkpoint_every},
          {"resume", resume}};
}

RunConfig RunConfig::FromJson(const nlohmann::json& j) {
  static const char* kKeys[] = {"seed",           "epochs",   "batch_size", "objective",
                                "n",              "model",    "adam",       "train_features",
                                "manifest",       "output_dir", "checkpoint_every", "resume"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(kKeys), std::end(kKeys), key) == std::end(kKeys)) {
      throw ConfigError("run config: unknown field '" + key + "'");
    }
  }
  RunConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.objective = j.value("objective", c.objective);
    c.n = j.value("n", c.n);
    if (j.contains("model")) c.model = j.at("model");
    if (j.contains("adam")) c.adam = AdamConfig::FromJson(j.at("adam"));
    c.train_features = j.value("train_features", c.train_features);
    c.manifest = j.value("manifest", c.manifest);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.resume = j.value("resume", c.resume);
  } catch (const nlohmann::json::type_error& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  c.Validate();
  return c;
}

nlohmann::json RunConfig::ResolvedModel(std::size_t input_dim) const {
  nlohmann::json m = model;
  if (m.contains("input_dim") && m.at("input_dim").get<std::size_t>() != input_dim) {
    throw ConfigError("run config: model input_dim " + m.at("input_dim").dump() + " but features have " +
                      std::to_string(input_dim) + " dims");
  }
  m["input_dim"] = input_dim;
  if (objective == "cpc") m["n"] = n;
  return m;
}

void RunConfig::Validate() const {
  if (objective != "apc" && objective != "cpc") {
    throw ConfigError("run config: objective must be apc or cpc, got '" + objective + "'");
  }
  if (epochs == 0) throw ConfigError("run config: epochs must be positive");
  if (batch_size == 0) throw ConfigError("run config: batch_size must be positive");
  if (n == 0) throw ConfigError("run config: n must be at least 1");
  if (checkpoint_every == 0) throw ConfigError("run config: checkpoint_every must be positive");
  if (output_dir.empty()) throw ConfigError("run config: output_dir is empty");
  adam.Validate();
  const std::string kind = model.value("kind", "");
  if (objective == "apc" && kind != "rnn" && kind != "transformer") {
    throw ConfigError("run config: apc needs an rnn or transformer model, got '" + kind + "'");
  }
  if (objective == "cpc" && kind != "cpc") {
    throw ConfigError("run config: cpc needs a model of kind cpc, got '" + kind + "'");
  }
  const nlohmann::json m = ResolvedModel(model.value("input_dim", std::size_t{80}));
  if (kind == "rnn") RnnEncoderConfig::FromJson(m).Validate();
  if (kind == "transformer") TransformerEncoderConfig::FromJson(m).Validate();
  if (kind == "cpc") CpcConfig::FromJson(m).Validate();
}

RunConfig LoadRunConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(IoErrorKind::kNotFound, "run config: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(IoErrorKind::kParse, "run config " + path + ": " + e.what());
  }
  return RunConfig::FromJson(j);
}

std::vector<FeatureSequence> LoadTrainingData(const RunConfig& cfg) {
  if (!cfg.train_features.empty()) return ReadFeatureCache(cfg.train_features);
  if (!cfg.manifest.empty()) return ComputeFeatures(ReadManifest(cfg.manifest), SpectrogramConfig{});
  throw ConfigError("run config: set train_features or manifest");
}

namespace {

// Keeps log lines from epochs before `epoch` so a resumed run continues the
// log of the run it replaces.
void TrimLog(const std::string& path, std::size_t epoch) {
  std::ifstream in(path);
  std::vector<std::string> keep;
  std::string line;
  while (std::getline(in, line)) {
    try {
      if (nlohmann::json::parse(line).value("epoch", std::size_t{0}) < epoch) keep.push_back(line);
    } catch (const nlohmann::json::exception&) {
      break;  // a torn final line from an interrupted write
    }
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

}  // namespace

ExperimentResult RunExperiment(const RunConfig& cfg, std::span<const FeatureSequence> train) {
  cfg.Validate();
  if (train.empty()) throw InputError("run: no training utterances");
  std::vector<FeatureSequence> data;
  for (const auto& u : train) {
    if (u.num_frames() > cfg.n) {
      data.push_back(u);
    } else {
      spdlog::warn("run: skipping utterance '{}' with {} frames, need more than n={}", u.utterance_id,
                   u.num_frames(), cfg.n);
    }
  }
  if (data.empty()) throw InputError("run: every utterance is shorter than n+1 frames");
  std::vector<std::size_t> lengths;
  for (const auto& u : data) lengths.push_back(u.num_frames());

  fs::create_directories(cfg.output_dir);
  ExperimentResult result;
  result.checkpoint_path = (fs::path(cfg.output_dir) / "checkpoint.apct").string();
  result.log_path = (fs::path(cfg.output_dir) / "train.jsonl").string();

  auto encoder = MakeEncoder<float>(cfg.ResolvedModel(data.front().dim()), DeriveSeed(cfg.seed, 0x1417));
  Adam<float> opt(encoder->Params(), cfg.adam);
  std::size_t start_epoch = 0;
  std::int64_t steps = 0;
  if (cfg.resume && fs::exists(result.checkpoint_path)) {
    auto ck = LoadCheckpoint<float>(result.checkpoint_path);
    if (ck.meta.seed != cfg.seed) {
      throw ConfigError("run: checkpoint was written with seed " + std::to_string(ck.meta.seed) +
                        ", config has " + std::to_string(cfg.seed));
    }
    RestoreCheckpoint(ck, *encoder, &opt);
    start_epoch = static_cast<std::size_t>(ck.meta.epoch);
    steps = ck.meta.step;
    TrimLog(result.log_path, start_epoch);
  } else {
    std::ofstream(result.log_path, std::ios::trunc);
  }
  result.first_epoch = start_epoch;

  std::ofstream log(result.log_path, std::ios::app);
  if (!log) throw IoError(IoErrorKind::kWriteFailed, "run: cannot open log " + result.log_path);
  const auto t0 = std::chrono::steady_clock::now();
  auto wall = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  encoder->set_training(true);
  const auto* cpc = dynamic_cast<const CpcEncoder<float>*>(encoder.get());

  for (std::size_t e = start_epoch; e < cfg.epochs; ++e) {
    const auto plan = MakeBatches(lengths, cfg.batch_size, cfg.seed, e);
    EpochSummary summary{e, 0.0, 0};
    double loss_total = 0;
    std::size_t frame_total = 0;
    for (std::size_t i = 0; i < plan.batches.size(); ++i) {
      std::vector<FeatureSequence> items;
      for (auto idx : plan.batches[i]) items.push_back(data[idx]);
      const std::uint64_t step_seed = DeriveSeed(cfg.seed, e + 1, i + 1);
      encoder->set_dropout_seed(step_seed);
      StepResult r;
      if (cpc) {
        std::mt19937_64 rng(step_seed);
        r = CpcPretrainStep(*cpc, MakeCpcBatch(items, cfg.n), opt, rng);
      } else {
        r = ApcPretrainStep(*encoder, MakeApcBatch(items, cfg.n), opt);
      }
      ++steps;
      ++summary.steps;
      loss_total += r.loss_mean * static_cast<double>(r.frames);
      frame_total += r.frames;
      log << nlohmann::json{{"event", "step"},        {"seed", cfg.seed},         {"epoch", e},
                            {"step", steps},          {"loss_sum", r.loss_sum},   {"loss_mean", r.loss_mean},
                            {"frames", r.frames},     {"grad_norm", r.grad_norm}, {"wall_time", wall()}}
                 .dump()
          << '\n';
    }
    summary.mean_loss = loss_total / static_cast<double>(frame_total);
    log << nlohmann::json{{"event", "epoch"}, {"seed", cfg.seed}, {"epoch", e}, {"step", steps},
                          {"mean_loss", summary.mean_loss}, {"wall_time", wall()}}
               .dump()
        << '\n';
    log.flush();
    result.epochs.push_back(summary);
    if ((e + 1) % cfg.checkpoint_every == 0 || e + 1 == cfg.epochs) {
      CheckpointMeta meta;
      meta.step = steps;
      meta.epoch = static_cast<std::int64_t>(e + 1);
      meta.seed = cfg.seed;
      meta.extra = {{"objective", cfg.objective}, {"n", cfg.n}};
      SaveCheckpoint(result.checkpoint_path, *encoder, &opt, meta);
    }
  }
  encoder->set_training(false);
  result.total_steps = steps;
  return result;
}

ExperimentResult RunExperiment(const RunConfig& cfg) {
  cfg.Validate();
  const auto data = LoadTrainingData(cfg);
  return RunExperiment(cfg, data);
}

}  // namespace apc
