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

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "apc/batching.h"
#include "apc/checkpoint.h"
#include "apc/container.h"
#include "apc/error.h"
#include "apc/experiment.h"
#include "apc/synthetic.h"
#include "temp_dir.h"

namespace apc {
namespace {

using testing::ReadFileBytes;
using testing::TempDir;
using testing::WriteFileBytes;

std::vector<std::size_t> VariedLengths(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len(20, 400);
  std::vector<std::size_t> out(count);
  for (auto& l : out) l = len(rng);
  return out;
}

TEST(MakeBatches, EveryItemExactlyOncePerEpoch) {
  const auto lengths = VariedLengths(103, 1);
  for (std::uint64_t epoch = 0; epoch < 3; ++epoch) {
    auto plan = MakeBatches(lengths, 8, 7, epoch);
    std::multiset<std::size_t> seen;
    for (const auto& b : plan.batches) {
      EXPECT_LE(b.size(), 8u);
      seen.insert(b.begin(), b.end());
    }
    ASSERT_EQ(seen.size(), 103u);
    for (std::size_t i = 0; i < 103; ++i) EXPECT_EQ(seen.count(i), 1u);
  }
  EXPECT_NE(MakeBatches(lengths, 8, 7, 0).batches, MakeBatches(lengths, 8, 7, 1).batches);
  EXPECT_EQ(MakeBatches(lengths, 8, 7, 2).batches, MakeBatches(lengths, 8, 7, 2).batches);
}

TEST(MakeBatches, BucketingReducesPadding) {
  const auto lengths = VariedLengths(320, 2);
  auto bucketed = MakeBatches(lengths, 32, 3, 0);
  auto random = RandomBatches(lengths, 32, 3, 0);
  // Oracle: recompute the worst ratio directly from the batches.
  double worst = 0;
  for (const auto& b : bucketed.batches) {
    std::size_t longest = 0, used = 0;
    for (auto i : b) {
      longest = std::max(longest, lengths[i]);
      used += lengths[i];
    }
    worst = std::max(worst, 1.0 - double(used) / double(longest * b.size()));
  }
  EXPECT_DOUBLE_EQ(bucketed.max_padding_ratio, worst);
  EXPECT_LT(bucketed.max_padding_ratio, random.max_padding_ratio);
  EXPECT_LT(bucketed.mean_padding_ratio, 0.5 * random.mean_padding_ratio);
}

TEST(MakeBatches, BatchSizeOneIsDeterministic) {
  const auto lengths = VariedLengths(20, 3);
  auto a = MakeBatches(lengths, 1, 11, 0), b = MakeBatches(lengths, 1, 11, 0);
  EXPECT_EQ(a.batches, b.batches);
  EXPECT_EQ(a.max_padding_ratio, 0.0);
  EXPECT_THROW(MakeBatches(std::vector<std::size_t>{}, 4, 1, 0), InputError);
  EXPECT_THROW(MakeBatches(lengths, 0, 1, 0), ConfigError);
}

template <typename T>
void TrainABit(Encoder<T>& enc, Adam<T>& opt) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int s = 0; s < 3; ++s) {
    for (auto& p : enc.Params())
      for (auto& v : p.var.mutable_grad().values()) v = static_cast<T>(g(rng));
    opt.Step();
  }
}

template <typename T>
void ExpectRoundTrip(const nlohmann::json& model_config) {
  TempDir dir;
  auto enc = MakeEncoder<T>(model_config, 5);
  Adam<T> opt(enc->Params(), AdamConfig{});
  TrainABit(*enc, opt);
  CheckpointMeta meta{3, 1, 42, {{"note", "x"}}};
  const std::string path = dir.File("c.apct");
  SaveCheckpoint(path, *enc, &opt, meta);

  auto ck = LoadCheckpoint<T>(path);
  EXPECT_EQ(ck.meta.step, 3);
  EXPECT_EQ(ck.meta.seed, 42u);
  EXPECT_EQ(ck.meta.extra["note"], "x");
  auto fresh = MakeEncoder<T>(model_config, 99);
  Adam<T> fresh_opt(fresh->Params(), AdamConfig{});
  RestoreCheckpoint(ck, *fresh, &fresh_opt);
  const auto a = enc->Params(), b = fresh->Params();
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(BitwiseEqual(a[i].var.value(), b[i].var.value())) << a[i].name;
    EXPECT_TRUE(BitwiseEqual(opt.first_moments()[i], fresh_opt.first_moments()[i]));
    EXPECT_TRUE(BitwiseEqual(opt.second_moments()[i], fresh_opt.second_moments()[i]));
  }
  EXPECT_EQ(fresh_opt.step(), 3);
  auto loaded = LoadEncoder<T>(path);
  EXPECT_TRUE(BitwiseEqual(loaded->Params()[0].var.value(), a[0].var.value()));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  ExpectRoundTrip<float>({{"kind", "rnn"}, {"input_dim", 6}, {"hidden", 8}, {"layers", 2}});
  ExpectRoundTrip<double>({{"kind", "transformer"}, {"input_dim", 6}, {"d_model", 8}, {"heads", 2},
                           {"ffn_hidden", 16}, {"layers", 2}});
  ExpectRoundTrip<float>({{"kind", "cpc"}, {"input_dim", 6}, {"embed_dim", 5}, {"hidden", 7}, {"layers", 1}});
}

IoErrorKind KindOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const IoError& e) {
    return e.io_kind();
  }
  ADD_FAILURE() << "expected IoError";
  return IoErrorKind::kParse;
}

TEST(Checkpoint, DistinctErrorKinds) {
  TempDir dir;
  const nlohmann::json rnn = {{"kind", "rnn"}, {"input_dim", 6}, {"hidden", 8}, {"layers", 2}};
  auto enc = MakeEncoder<float>(rnn, 5);
  Adam<float> opt(enc->Params(), AdamConfig{});
  const std::string path = dir.File("c.apct");
  SaveCheckpoint(path, *enc, &opt, {});
  const std::string good = ReadFileBytes(path);

  for (std::size_t cut : {10u, 200u, static_cast<unsigned>(good.size() / 2), static_cast<unsigned>(good.size() - 3)}) {
    const std::string p = dir.File("t.apct");
    WriteFileBytes(p, good.substr(0, cut));
    EXPECT_EQ(KindOf([&] { LoadCheckpoint<float>(p); }), IoErrorKind::kCorruptFile) << cut;
  }
  std::string v2 = good;
  v2[4] = 9;
  WriteFileBytes(dir.File("v.apct"), v2);
  EXPECT_EQ(KindOf([&] { LoadCheckpoint<float>(dir.File("v.apct")); }), IoErrorKind::kUnsupportedVersion);

  auto ck = LoadCheckpoint<float>(path);
  TransformerEncoder<float> wrong({.input_dim = 6, .d_model = 8, .heads = 2, .ffn_hidden = 16, .layers = 2}, 1);
  EXPECT_EQ(KindOf([&] { RestoreCheckpoint<float>(ck, wrong, nullptr); }), IoErrorKind::kConfigMismatch);
  RnnEncoder<float> wider({.input_dim = 6, .hidden = 9, .layers = 2}, 1);
  EXPECT_EQ(KindOf([&] { RestoreCheckpoint<float>(ck, wider, nullptr); }), IoErrorKind::kConfigMismatch);
  EXPECT_EQ(KindOf([&] { LoadCheckpoint<double>(path); }), IoErrorKind::kConfigMismatch);

  // A format bump inside the metadata is a version error too.
  auto entries = ReadContainer(path);
  for (auto& e : entries) {
    if (e.name != "__meta__") continue;
    auto m = nlohmann::json::parse(std::string(e.bytes.begin(), e.bytes.end()));
    m["format"] = 2;
    e = TextEntry("__meta__", m.dump());
  }
  WriteContainer(dir.File("f.apct"), entries);
  EXPECT_EQ(KindOf([&] { LoadCheckpoint<float>(dir.File("f.apct")); }), IoErrorKind::kUnsupportedVersion);
}

TEST(ConfigHash, StableAndSensitive) {
  const nlohmann::json a = {{"kind", "rnn"}, {"hidden", 8}};
  EXPECT_EQ(ConfigHash(a), ConfigHash(nlohmann::json::parse(a.dump())));
  EXPECT_NE(ConfigHash(a), ConfigHash({{"kind", "rnn"}, {"hidden", 9}}));
  EXPECT_EQ(ConfigHash(a).size(), 16u);
}

RunConfig SmallRun(const std::string& dir, const std::string& objective) {
  RunConfig cfg;
  cfg.seed = 17;
  cfg.epochs = 4;
  cfg.batch_size = 3;
  cfg.objective = objective;
  cfg.n = 2;
  cfg.output_dir = dir;
  if (objective == "apc") {
    cfg.model = {{"kind", "rnn"}, {"hidden", 8}, {"layers", 2}, {"dropout", 0.1}};
  } else {
    cfg.model = {{"kind", "cpc"}, {"hidden", 8}, {"embed_dim", 8}, {"layers", 1}, {"negatives", 4}};
  }
  return cfg;
}

std::vector<nlohmann::json> StepLines(const std::string& path) {
  std::ifstream in(path);
  std::vector<nlohmann::json> out;
  std::string line;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);  // throws on invalid JSON-lines
    j.erase("wall_time");
    out.push_back(j);
  }
  return out;
}

std::vector<FeatureSequence> RunData() {
  OscillatorCorpusConfig cc;
  cc.utterances = 8;
  cc.frames = 30;
  cc.dim = 5;
  auto data = OscillatorCorpus(cc);
  data[3].frames = Tensor<float>(Shape{12, 5}, std::vector<float>(data[3].frames.data(), data[3].frames.data() + 60));
  return data;
}

TEST(RunExperiment, DeterministicLogsAndEpochCount) {
  for (const std::string objective : {"apc", "cpc"}) {
    TempDir a, b;
    const auto data = RunData();
    auto ra = RunExperiment(SmallRun(a.path().string(), objective), data);
    auto rb = RunExperiment(SmallRun(b.path().string(), objective), data);
    auto la = StepLines(ra.log_path), lb = StepLines(rb.log_path);
    EXPECT_EQ(la, lb) << objective;
    std::set<std::size_t> epochs;
    std::size_t epoch_events = 0;
    for (const auto& j : la) {
      epochs.insert(j["epoch"].get<std::size_t>());
      epoch_events += j["event"] == "epoch";
      EXPECT_EQ(j["seed"], 17);
    }
    EXPECT_EQ(epochs.size(), 4u);
    EXPECT_EQ(epoch_events, 4u);
    EXPECT_EQ(ra.total_steps, 4 * 3);
    EXPECT_TRUE(std::filesystem::exists(ra.checkpoint_path));
  }
}

TEST(RunExperiment, ResumeMatchesUninterruptedRun) {
  for (const std::string objective : {"apc", "cpc"}) {
    TempDir full_dir, split_dir;
    const auto data = RunData();
    auto full = RunExperiment(SmallRun(full_dir.path().string(), objective), data);

    RunConfig first = SmallRun(split_dir.path().string(), objective);
    first.epochs = 2;
    RunExperiment(first, data);
    // Simulate a crash mid-epoch 3: a stray partial log line after the checkpoint.
    std::ofstream(split_dir.File("train.jsonl"), std::ios::app) << "{\"event\":\"step\",\"epoch\":2,\"step\":7}\n{\"torn";
    auto resumed = RunExperiment(SmallRun(split_dir.path().string(), objective), data);
    EXPECT_EQ(resumed.first_epoch, 2u);
    ASSERT_EQ(resumed.epochs.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_NEAR(resumed.epochs[i].mean_loss, full.epochs[2 + i].mean_loss, 1e-6) << objective;
    }
    EXPECT_EQ(StepLines(resumed.log_path), StepLines(full.log_path)) << objective;
    auto a = LoadCheckpoint<float>(full.checkpoint_path), b = LoadCheckpoint<float>(resumed.checkpoint_path);
    for (const auto& [name, t] : a.params) EXPECT_TRUE(BitwiseEqual(t, b.params.at(name))) << name;
  }
}

TEST(RunConfig, ValidationAndFile) {
  TempDir dir;
  EXPECT_THROW(RunConfig::FromJson({{"objective", "mae"}}), ConfigError);
  EXPECT_THROW(RunConfig::FromJson({{"epochs", 0}}), ConfigError);
  EXPECT_THROW(RunConfig::FromJson({{"objective", "cpc"}}), ConfigError);  // rnn model with cpc
  EXPECT_THROW(RunConfig::FromJson({{"model", {{"kind", "transformer"}, {"heads", 7}}}}), ConfigError);
  EXPECT_THROW(RunConfig::FromJson({{"epochz", 3}}), ConfigError);
  EXPECT_THROW(RunConfig::FromJson({{"epochs", "many"}}), ConfigError);
  auto cfg = SmallRun(dir.path().string(), "apc");
  WriteFileBytes(dir.File("run.json"), cfg.ToJson().dump(2));
  EXPECT_EQ(LoadRunConfig(dir.File("run.json")).ToJson(), cfg.ToJson());
  RunConfig bad = cfg;
  bad.model["input_dim"] = 7;
  EXPECT_THROW(RunExperiment(bad, RunData()), ConfigError);
  RunConfig other_seed = cfg;
  RunExperiment(cfg, RunData());
  other_seed.seed = 18;
  EXPECT_THROW(RunExperiment(other_seed, RunData()), ConfigError);
}

}  // namespace
}  // namespace apc
