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

#ifndef APC_CHECKPOINT_H_
#define APC_CHECKPOINT_H_

#include <cstdint>
#include <map>
#include <memory>
#include <string>

#include "apc/encoders.h"
#include "apc/optim.h"
#include "json.hpp"

namespace apc {

inline constexpr int kCheckpointFormat = 1;

// FNV-1a 64 over the canonical dump of a model config, as 16 hex digits.
std::string ConfigHash(const nlohmann::json& model_config);

struct CheckpointMeta {
  std::int64_t step = 0;   // optimizer steps taken
  std::int64_t epoch = 0;  // completed epochs
  std::uint64_t seed = 0;
  nlohmann::json extra = nlohmann::json::object();
};

// A fully validated checkpoint held in memory.
template <typename T>
struct Checkpoint {
  nlohmann::json model_config;
  std::string config_hash;
  CheckpointMeta meta;
  std::map<std::string, Tensor<T>> params;
  bool has_optimizer = false;
  AdamConfig adam;
  std::int64_t adam_step = 0;
  std::map<std::string, Tensor<T>> adam_m, adam_v;
};

// Container entries: "param/<name>", "adam.m/<name>", "adam.v/<name>",
// "__config__" (model config JSON) and "__meta__" (format, hash, counters).
template <typename T>
void SaveCheckpoint(const std::string& path, const Encoder<T>& encoder, const Adam<T>* opt,
                    const CheckpointMeta& meta);

// Throws IoError: kCorruptFile for truncation or inconsistent contents,
// kUnsupportedVersion for unknown formats, kConfigMismatch for a dtype
// other than T. Nothing is returned unless every entry validates.
template <typename T>
Checkpoint<T> LoadCheckpoint(const std::string& path);

// Copies parameters (and optimizer state when opt is given) into live
// objects. kConfigMismatch when the encoder's config hash differs.
template <typename T>
void RestoreCheckpoint(const Checkpoint<T>& ckpt, const Encoder<T>& encoder, Adam<T>* opt);

// Builds the encoder described by the checkpoint and loads its parameters.
template <typename T>
std::unique_ptr<Encoder<T>> LoadEncoder(const std::string& path);

}  // namespace apc

#endif  // APC_CHECKPOINT_H_
