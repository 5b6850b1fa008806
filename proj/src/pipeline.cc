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

#include "apc/pipeline.h"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>

#include <spdlog/spdlog.h>

#include "apc/batching.h"
#include "apc/checkpoint.h"
#include "apc/error.h"

namespace apc {
namespace fs = std::filesystem;

namespace {

constexpr char kLogMel[] = "log Mel";

void CheckKeys(const nlohmann::json& j, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError("sweep config: expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError("sweep config: unknown field '" + key + "'");
    }
  }
}

bool IsSeq2SeqProtocol(SweepProtocol p) { return p != SweepProtocol::kUttsPerSpeaker; }

}  // namespace

nlohmann::json TransferSweepConfig::ToJson() const {
  return {{"protocol", SweepProtocolName(protocol)},
          {"metric", metric},
          {"work_dir", work_dir},
          {"pretrain", pretrain.ToJson()},
          {"rnn_model", rnn_model},
          {"transformer_model", transformer_model},
          {"cpc_model", cpc_model},
          {"rnn_n", rnn_n},
          {"transformer_n", transformer_n},
          {"cpc_n", cpc_n},
          {"seq2seq", seq2seq.ToJson()},
          {"speaker", speaker.ToJson()}};
}

TransferSweepConfig TransferSweepConfig::FromJson(const nlohmann::json& j) {
  CheckKeys(j, {"protocol", "metric", "work_dir", "pretrain", "rnn_model", "transformer_model", "cpc_model",
                "rnn_n", "transformer_n", "cpc_n", "seq2seq", "speaker"});
  TransferSweepConfig c;
  try {
    if (j.contains("protocol")) c.protocol = ParseSweepProtocol(j.at("protocol").get<std::string>());
    c.metric = j.value("metric", c.metric);
    c.work_dir = j.value("work_dir", c.work_dir);
    if (j.contains("pretrain")) c.pretrain = RunConfig::FromJson(j.at("pretrain"));
    c.rnn_model = j.value("rnn_model", c.rnn_model);
    c.transformer_model = j.value("transformer_model", c.transformer_model);
    c.cpc_model = j.value("cpc_model", c.cpc_model);
    c.rnn_n = j.value("rnn_n", c.rnn_n);
    c.transformer_n = j.value("transformer_n", c.transformer_n);
    c.cpc_n = j.value("cpc_n", c.cpc_n);
    if (j.contains("seq2seq")) c.seq2seq = Seq2SeqProbeConfig::FromJson(j.at("seq2seq"));
    if (j.contains("speaker")) c.speaker = SpeakerProbeConfig::FromJson(j.at("speaker"));
  } catch (const nlohmann::json::type_error& e) {
    throw ConfigError(std::string("sweep config: ") + e.what());
  }
  c.Validate();
  return c;
}

std::string TransferSweepConfig::ResolvedMetric() const {
  if (!metric.empty()) return metric;
  return IsSeq2SeqProtocol(protocol) ? "wer" : "accuracy";
}

void TransferSweepConfig::Validate() const {
  const std::string m = ResolvedMetric();
  if (IsSeq2SeqProtocol(protocol) ? (m != "wer" && m != "cer") : m != "accuracy") {
    throw ConfigError("sweep config: metric '" + m + "' does not fit protocol " + SweepProtocolName(protocol));
  }
  if (rnn_n == 0 || transformer_n == 0 || cpc_n == 0) throw ConfigError("sweep config: n must be positive");
  if (work_dir.empty()) throw ConfigError("sweep config: work_dir is empty");
  const std::pair<const char*, const nlohmann::json*> models[] = {
      {"rnn", &rnn_model}, {"transformer", &transformer_model}, {"cpc", &cpc_model}};
  for (const auto& [kind, model] : models) {
    if (model->value("kind", std::string(kind)) != kind) {
      throw ConfigError(std::string("sweep config: ") + kind + "_model has kind '" +
                        model->value("kind", std::string()) + "'");
    }
    RunConfig probe = pretrain;
    probe.objective = std::string(kind) == "cpc" ? "cpc" : "apc";
    probe.model = *model;
    probe.model["kind"] = kind;
    probe.Validate();
  }
  pretrain.adam.Validate();
}

std::vector<std::string> TransferSweepRows(SweepProtocol protocol) {
  if (protocol == SweepProtocol::kNSweep) {
    return {kLogMel,       "R-APC Scratch", "R-APC Frozen",   "R-APC Finetuned",
            "T-APC Scratch", "T-APC Frozen", "T-APC Finetuned"};
  }
  return {kLogMel, "CPC", "R-APC", "T-APC"};
}

namespace {

struct RowSpec {
  std::string encoder;  // "", rnn, transformer or cpc
  TransferMode mode;
  bool scratch = false;
};

RowSpec ParseRow(const std::string& row) {
  if (row == kLogMel) return {"", TransferMode::Frozen(), false};
  if (row == "CPC") return {"cpc", TransferMode::Frozen(), false};
  const std::string kind = row.rfind("R-APC", 0) == 0 ? "rnn" : "transformer";
  if (row.ends_with("Scratch")) return {kind, TransferMode::Finetuned(), true};
  if (row.ends_with("Finetuned")) return {kind, TransferMode::Finetuned(), false};
  return {kind, TransferMode::Frozen(), false};
}

const char* EncoderTag(const std::string& kind) {
  if (kind == "rnn") return "rapc";
  if (kind == "transformer") return "tapc";
  return "cpc";
}

class SweepRunner {
 public:
  SweepRunner(const TransferSweepConfig& cfg, const TransferSweepData& data) : cfg_(cfg), data_(data) {
    if (data.train.empty() || data.eval.empty()) throw InputError("sweep: probe splits must be nonempty");
    if (data.pretrain.empty()) throw InputError("sweep: no pre-training utterances");
    dim_ = data.train.front().dim();
  }

  double Cell(const std::string& row, const SweepColumn& col, nlohmann::json& detail) {
    const RowSpec spec = ParseRow(row);
    std::size_t n = 0;
    if (!spec.encoder.empty() && !spec.scratch) {
      n = cfg_.protocol == SweepProtocol::kNSweep ? col.value : DefaultN(spec.encoder);
    }
    // Rows that do not depend on n repeat their first result across the n sweep.
    const bool n_invariant = cfg_.protocol == SweepProtocol::kNSweep && n == 0;
    if (n_invariant) {
      auto it = memo_.find(row);
      if (it != memo_.end()) {
        detail = it->second.second;
        detail["reused"] = true;
        return it->second.first;
      }
    }

    std::unique_ptr<Encoder<float>> encoder;
    if (spec.scratch) {
      RunConfig rc = PretrainConfig(spec.encoder, 1);
      encoder = MakeEncoder<float>(rc.ResolvedModel(dim_), DeriveSeed(cfg_.pretrain.seed, 0x5c7a));
    } else if (!spec.encoder.empty()) {
      encoder = LoadEncoder<float>(Pretrained(spec.encoder, n));
      detail["pretrain_n"] = n;
    }
    detail["mode"] = spec.encoder.empty() ? "features" : spec.mode.name();

    std::span<const FeatureSequence> train = data_.train;
    double value = 0;
    if (IsSeq2SeqProtocol(cfg_.protocol)) {
      Seq2SeqProbeConfig pc = cfg_.seq2seq;
      if (cfg_.protocol == SweepProtocol::kDataFraction) {
        train = train.first(FractionCount(train.size(), col.value));
      }
      if (cfg_.protocol == SweepProtocol::kEncoderDepth) pc.model["encoder_layers"] = col.value;
      auto r = TrainSeq2SeqProbe<float>(encoder.get(), spec.mode, train, data_.eval, pc);
      detail["cer"] = r.cer;
      detail["wer"] = r.wer;
      detail["teacher_forced_cer"] = r.teacher_forced_cer;
      detail["steps"] = r.steps;
      value = cfg_.ResolvedMetric() == "cer" ? r.cer : r.wer;
    } else {
      const auto capped = CapUtterancesPerSpeaker(train, col.value);
      auto r = TrainSpeakerProbe<float>(encoder.get(), spec.mode, capped, data_.eval, cfg_.speaker);
      detail["steps"] = r.steps;
      value = r.accuracy;
    }
    detail["train_utterances"] = IsSeq2SeqProtocol(cfg_.protocol) ? train.size()
                                                                   : CapUtterancesPerSpeaker(train, col.value).size();
    if (n_invariant) memo_[row] = {value, detail};
    return value;
  }

 private:
  std::size_t DefaultN(const std::string& kind) const {
    if (kind == "rnn") return cfg_.rnn_n;
    if (kind == "transformer") return cfg_.transformer_n;
    return cfg_.cpc_n;
  }

  RunConfig PretrainConfig(const std::string& kind, std::size_t n) const {
    RunConfig rc = cfg_.pretrain;
    rc.objective = kind == "cpc" ? "cpc" : "apc";
    rc.n = n;
    rc.model = kind == "rnn" ? cfg_.rnn_model : kind == "transformer" ? cfg_.transformer_model : cfg_.cpc_model;
    rc.model["kind"] = kind;
    rc.train_features.clear();
    rc.manifest.clear();
    rc.output_dir = (fs::path(cfg_.work_dir) / "pretrain" / (std::string(EncoderTag(kind)) + "-n" + std::to_string(n)))
                        .string();
    rc.resume = true;
    return rc;
  }

  std::string Pretrained(const std::string& kind, std::size_t n) {
    const RunConfig rc = PretrainConfig(kind, n);
    auto it = done_.find(rc.output_dir);
    if (it != done_.end()) return it->second;
    spdlog::info("sweep: pre-training {} n={} in {}", kind, n, rc.output_dir);
    auto result = RunExperiment(rc, data_.pretrain);
    done_[rc.output_dir] = result.checkpoint_path;
    return result.checkpoint_path;
  }

  const TransferSweepConfig& cfg_;
  const TransferSweepData& data_;
  std::size_t dim_ = 0;
  std::map<std::string, std::string> done_;
  std::map<std::string, std::pair<double, nlohmann::json>> memo_;
};

}  // namespace

SweepTable RunTransferSweep(const TransferSweepConfig& cfg, const TransferSweepData& data,
                            const SweepProgressFn& progress) {
  cfg.Validate();
  SweepRunner runner(cfg, data);
  fs::create_directories(cfg.work_dir);
  const std::string log_path = (fs::path(cfg.work_dir) / "cells.jsonl").string();
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw IoError(IoErrorKind::kWriteFailed, "sweep: cannot open " + log_path);

  nlohmann::json detail;
  double seconds = 0;
  auto cell = [&](const std::string& row, const SweepColumn& col) {
    detail = nlohmann::json::object();
    const auto t0 = std::chrono::steady_clock::now();
    struct Timer {
      std::chrono::steady_clock::time_point t0;
      double& out;
      ~Timer() { out = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
    } timer{t0, seconds};
    return runner.Cell(row, col, detail);
  };
  auto on_cell = [&](const SweepCell& c) {
    nlohmann::json line = {{"protocol", SweepProtocolName(cfg.protocol)},
                           {"metric", cfg.ResolvedMetric()},
                           {"seed", cfg.pretrain.seed},
                           {"row", c.row},
                           {"column", c.column},
                           {"seconds", seconds}};
    if (c.value) {
      line["value"] = *c.value;
    } else {
      line["value"] = nullptr;
      line["error"] = c.error;
    }
    line.update(detail);
    log << line.dump() << '\n';
    log.flush();
    if (progress) progress(c);
  };
  SweepTable table = RunSweep(cfg.protocol, TransferSweepRows(cfg.protocol), cfg.ResolvedMetric(), cell, on_cell);
  std::ofstream tsv(fs::path(cfg.work_dir) / "results.tsv", std::ios::trunc);
  tsv << table.ToTsv();
  if (!tsv) throw IoError(IoErrorKind::kWriteFailed, "sweep: cannot write results.tsv");
  return table;
}

}  // namespace apc
