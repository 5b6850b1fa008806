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

#include "apc/checkpoint.h"

#include <cstdio>
#include <vector>

#include "apc/container.h"
#include "apc/error.h"

namespace apc {
namespace {

constexpr char kConfigEntry[] = "__config__";
constexpr char kMetaEntry[] = "__meta__";

IoError Corrupt(const std::string& path, const std::string& what) {
  return IoError(IoErrorKind::kCorruptFile, "checkpoint " + path + ": " + what);
}

template <typename T>
constexpr DType DTypeOf() {
  return sizeof(T) == 4 ? DType::kFloat32 : DType::kFloat64;
}

}  // namespace

std::string ConfigHash(const nlohmann::json& model_config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : model_config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

template <typename T>
void SaveCheckpoint(const std::string& path, const Encoder<T>& encoder, const Adam<T>* opt,
                    const CheckpointMeta& meta) {
  const auto params = encoder.Params();
  std::vector<ContainerEntry> entries;
  for (const auto& p : params) entries.push_back(TensorEntry("param/" + p.name, p.var.value()));
  if (opt) {
    if (opt->params().size() != params.size()) {
      throw ContractError("checkpoint: optimizer tracks " + std::to_string(opt->params().size()) +
                          " parameters, encoder has " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      entries.push_back(TensorEntry("adam.m/" + params[i].name, opt->first_moments()[i]));
      entries.push_back(TensorEntry("adam.v/" + params[i].name, opt->second_moments()[i]));
    }
  }
  const nlohmann::json config = encoder.Config();
  nlohmann::json m = {{"format", kCheckpointFormat},
                      {"config_hash", ConfigHash(config)},
                      {"dtype", DTypeName(DTypeOf<T>())},
                      {"step", meta.step},
                      {"epoch", meta.epoch},
                      {"seed", meta.seed},
                      {"extra", meta.extra},
                      {"has_optimizer", opt != nullptr}};
  if (opt) {
    m["adam"] = opt->config().ToJson();
    m["adam_step"] = opt->step();
  }
  entries.push_back(TextEntry(kConfigEntry, config.dump()));
  entries.push_back(TextEntry(kMetaEntry, m.dump()));
  WriteContainer(path, entries);
}

template <typename T>
Checkpoint<T> LoadCheckpoint(const std::string& path) {
  ContainerReader reader(path);
  if (!reader.Contains(kConfigEntry) || !reader.Contains(kMetaEntry)) {
    throw Corrupt(path, "missing __config__ or __meta__ entry");
  }
  Checkpoint<T> ck;
  nlohmann::json m;
  try {
    ck.model_config = nlohmann::json::parse(reader.ReadText(kConfigEntry));
    m = nlohmann::json::parse(reader.ReadText(kMetaEntry));
  } catch (const nlohmann::json::exception& e) {
    throw Corrupt(path, std::string("unreadable metadata: ") + e.what());
  }
  if (m.value("format", -1) != kCheckpointFormat) {
    throw IoError(IoErrorKind::kUnsupportedVersion, "checkpoint " + path + ": format " +
                                                        m.value("format", nlohmann::json()).dump() +
                                                        " unsupported (expected " +
                                                        std::to_string(kCheckpointFormat) + ")");
  }
  ck.config_hash = m.value("config_hash", "");
  if (ck.config_hash != ConfigHash(ck.model_config)) {
    throw Corrupt(path, "stored config hash does not match stored config");
  }
  if (m.value("dtype", "") != DTypeName(DTypeOf<T>())) {
    throw IoError(IoErrorKind::kConfigMismatch, "checkpoint " + path + ": stored dtype " +
                                                    m.value("dtype", "?") + ", requested " +
                                                    DTypeName(DTypeOf<T>()));
  }
  ck.meta.step = m.value("step", std::int64_t{0});
  ck.meta.epoch = m.value("epoch", std::int64_t{0});
  ck.meta.seed = m.value("seed", std::uint64_t{0});
  ck.meta.extra = m.value("extra", nlohmann::json::object());
  ck.has_optimizer = m.value("has_optimizer", false);
  if (ck.has_optimizer) {
    ck.adam = AdamConfig::FromJson(m.value("adam", nlohmann::json::object()));
    ck.adam_step = m.value("adam_step", std::int64_t{0});
  }
  for (const auto& e : reader.entries()) {
    auto slash = e.name.find('/');
    if (slash == std::string::npos) continue;
    const std::string group = e.name.substr(0, slash), name = e.name.substr(slash + 1);
    auto* dst = group == "param" ? &ck.params : group == "adam.m" ? &ck.adam_m : group == "adam.v" ? &ck.adam_v : nullptr;
    if (!dst) throw Corrupt(path, "unexpected entry '" + e.name + "'");
    dst->emplace(name, reader.ReadTensor<T>(e.name));
  }
  if (ck.params.empty()) throw Corrupt(path, "no parameters");
  if (ck.has_optimizer) {
    for (const auto& [name, t] : ck.params) {
      auto m_it = ck.adam_m.find(name), v_it = ck.adam_v.find(name);
      if (m_it == ck.adam_m.end() || v_it == ck.adam_v.end() || m_it->second.shape() != t.shape() ||
          v_it->second.shape() != t.shape()) {
        throw Corrupt(path, "optimizer moments for '" + name + "' are missing or misshapen");
      }
    }
  }
  return ck;
}

template <typename T>
void RestoreCheckpoint(const Checkpoint<T>& ckpt, const Encoder<T>& encoder, Adam<T>* opt) {
  const auto config = encoder.Config();
  if (ConfigHash(config) != ckpt.config_hash) {
    throw IoError(IoErrorKind::kConfigMismatch,
                  "checkpoint: config hash " + ckpt.config_hash + " (" + ckpt.model_config.value("kind", "?") +
                      ") does not match encoder config " + ConfigHash(config) + " (" +
                      config.value("kind", "?") + ")");
  }
  auto params = encoder.Params();
  for (const auto& p : params) {
    auto it = ckpt.params.find(p.name);
    if (it == ckpt.params.end() || it->second.shape() != p.var.shape()) {
      throw IoError(IoErrorKind::kConfigMismatch, "checkpoint: parameter '" + p.name + "' is missing or misshapen");
    }
  }
  if (opt && !ckpt.has_optimizer) {
    throw IoError(IoErrorKind::kConfigMismatch, "checkpoint: no optimizer state stored");
  }
  for (auto& p : params) p.var.mutable_value() = ckpt.params.at(p.name);
  if (opt) {
    for (std::size_t i = 0; i < opt->params().size(); ++i) {
      const auto& name = opt->params()[i].name;
      opt->first_moments()[i] = ckpt.adam_m.at(name);
      opt->second_moments()[i] = ckpt.adam_v.at(name);
    }
    opt->set_step(ckpt.adam_step);
  }
}

template <typename T>
std::unique_ptr<Encoder<T>> LoadEncoder(const std::string& path) {
  auto ck = LoadCheckpoint<T>(path);
  auto encoder = MakeEncoder<T>(ck.model_config, 0);
  RestoreCheckpoint<T>(ck, *encoder, nullptr);
  return encoder;
}

#define APC_INSTANTIATE_CHECKPOINT(T)                                                            \
  template void SaveCheckpoint(const std::string&, const Encoder<T>&, const Adam<T>*,            \
                               const CheckpointMeta&);                                           \
  template Checkpoint<T> LoadCheckpoint<T>(const std::string&);                                  \
  template void RestoreCheckpoint(const Checkpoint<T>&, const Encoder<T>&, Adam<T>*);            \
  template std::unique_ptr<Encoder<T>> LoadEncoder<T>(const std::string&);

APC_INSTANTIATE_CHECKPOINT(float)
APC_INSTANTIATE_CHECKPOINT(double)

}  // namespace apc
