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

#include "apc/cli.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "apc/checkpoint.h"
#include "apc/error.h"
#include "apc/experiment.h"
#include "apc/io.h"
#include "apc/pipeline.h"
#include "apc/probes.h"
#include "apc/seq2seq.h"
#include "apc/synthetic.h"

namespace apc {
namespace {

std::string OneLine(std::string s) {
  std::replace_if(s.begin(), s.end(), [](char c) { return c == '\n' || c == '\t' || c == '\r'; }, ' ');
  return s;
}

void PrintError(std::ostream& err, const std::string& kind, const std::string& message) {
  err << "error\t" << kind << '\t' << OneLine(message) << '\n';
}

nlohmann::json ReadJsonFile(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw IoError(IoErrorKind::kNotFound, std::string(what) + ": cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(IoErrorKind::kParse, std::string(what) + " " + path + ": " + e.what());
  }
}

nlohmann::json ParseJsonFlag(const std::string& text, const char* flag) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string(flag) + ": " + e.what());
  }
}

void WriteJsonFile(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw IoError(IoErrorKind::kWriteFailed, "cannot write " + path);
}

// Loads a feature cache, or computes features when given a manifest.
std::vector<FeatureSequence> LoadFeatures(const std::string& path) {
  if (path.ends_with(".jsonl")) return ComputeFeatures(ReadManifest(path), SpectrogramConfig{});
  return ReadFeatureCache(path);
}

// ---- shared option groups ----------------------------------------------------

struct ModelFlags {
  std::optional<std::string> json;
  std::optional<std::size_t> hidden, layers, d_model, heads, ffn_hidden, embed_dim, negatives;
  std::optional<double> dropout;

  void Add(CLI::App* app) {
    app->add_option("--model", json, "Model config as a JSON object, merged over the config file");
    app->add_option("--hidden", hidden, "GRU width (rnn, cpc)");
    app->add_option("--layers", layers, "Number of layers or blocks");
    app->add_option("--d-model", d_model, "Transformer width");
    app->add_option("--heads", heads, "Attention heads");
    app->add_option("--ffn-hidden", ffn_hidden, "Transformer MLP width");
    app->add_option("--embed-dim", embed_dim, "CPC frame embedding width");
    app->add_option("--negatives", negatives, "CPC negatives per positive");
    app->add_option("--dropout", dropout, "Dropout rate");
  }

  void Apply(nlohmann::json& model) const {
    if (json) model.update(ParseJsonFlag(*json, "--model"));
    auto set = [&](const char* key, const auto& v) {
      if (v) model[key] = *v;
    };
    set("hidden", hidden);
    set("layers", layers);
    set("d_model", d_model);
    set("heads", heads);
    set("ffn_hidden", ffn_hidden);
    set("embed_dim", embed_dim);
    set("negatives", negatives);
    set("dropout", dropout);
  }
};

struct Seq2SeqModelFlags {
  std::optional<std::string> json;
  std::optional<std::size_t> conv_channels, encoder_hidden, encoder_layers, decoder_hidden, attention_dim, embed_dim;

  void Add(CLI::App* app) {
    app->add_option("--model", json, "Seq2seq config as a JSON object, merged over the config file");
    app->add_option("--conv-channels", conv_channels, "Downsampling convolution channels");
    app->add_option("--encoder-hidden", encoder_hidden, "biGRU width per direction");
    app->add_option("--encoder-layers", encoder_layers, "biGRU layers");
    app->add_option("--decoder-hidden", decoder_hidden, "Decoder GRU width");
    app->add_option("--attention-dim", attention_dim, "Attention width");
    app->add_option("--embed-dim", embed_dim, "Character embedding width");
  }

  void Apply(nlohmann::json& model) const {
    if (json) model.update(ParseJsonFlag(*json, "--model"));
    auto set = [&](const char* key, const auto& v) {
      if (v) model[key] = *v;
    };
    set("conv_channels", conv_channels);
    set("encoder_hidden", encoder_hidden);
    set("encoder_layers", encoder_layers);
    set("decoder_hidden", decoder_hidden);
    set("attention_dim", attention_dim);
    set("embed_dim", embed_dim);
  }
};

struct AdamFlags {
  std::optional<double> lr, beta1, beta2, eps, clip_norm;

  void Add(CLI::App* app) {
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--beta1", beta1, "Adam beta1");
    app->add_option("--beta2", beta2, "Adam beta2");
    app->add_option("--eps", eps, "Adam epsilon");
    app->add_option("--clip-norm", clip_norm, "Global gradient-norm clip, 0 disables");
  }

  void Apply(AdamConfig& a) const {
    if (lr) a.lr = *lr;
    if (beta1) a.beta1 = *beta1;
    if (beta2) a.beta2 = *beta2;
    if (eps) a.eps = *eps;
    if (clip_norm) a.clip_norm = *clip_norm;
  }
};

struct ProbeTrainFlags {
  std::optional<std::size_t> epochs, batch_size, max_steps;
  std::optional<double> target_loss;
  std::optional<std::uint64_t> seed;
  AdamFlags adam;

  void Add(CLI::App* app, const std::string& prefix = "") {
    app->add_option("--" + prefix + "epochs", epochs, "Probe training epochs");
    app->add_option("--" + prefix + "batch-size", batch_size, "Probe batch size");
    app->add_option("--" + prefix + "max-steps", max_steps, "Stop after this many steps, 0 for no limit");
    app->add_option("--" + prefix + "target-loss", target_loss, "Stop once an epoch's mean loss reaches this");
    if (prefix.empty()) {
      app->add_option("--seed", seed, "Probe seed");
      adam.Add(app);
    } else {
      app->add_option("--" + prefix + "lr", adam.lr, "Probe learning rate");
    }
  }

  void Apply(ProbeTrainConfig& t) const {
    if (epochs) t.epochs = *epochs;
    if (batch_size) t.batch_size = *batch_size;
    if (max_steps) t.max_steps = *max_steps;
    if (target_loss) t.target_loss = *target_loss;
    if (seed) t.seed = *seed;
    adam.Apply(t.adam);
  }
};

// ---- features ----------------------------------------------------------------

struct FeaturesArgs {
  std::string manifest, output;
  bool no_cmvn = false;
  SpectrogramConfig spec;
};

void AddFeatures(CLI::App& app, FeaturesArgs& a) {
  auto* c = app.add_subcommand("features", "Compute a log-Mel feature cache from a manifest");
  c->add_option("--manifest", a.manifest, "JSON-lines manifest")->required();
  c->add_option("--output", a.output, "Output feature cache (.apct)")->required();
  c->add_flag("--no-cmvn", a.no_cmvn, "Skip per-speaker mean and variance normalization");
  c->add_option("--n-mels", a.spec.n_mels, "Mel filters")->capture_default_str();
  c->add_option("--window-ms", a.spec.window_ms, "Window length in ms")->capture_default_str();
  c->add_option("--hop-ms", a.spec.hop_ms, "Hop in ms")->capture_default_str();
  c->add_option("--fft-size", a.spec.fft_size, "FFT size")->capture_default_str();
  c->add_option("--fmin", a.spec.fmin, "Lowest filter edge in Hz")->capture_default_str();
  c->add_option("--fmax", a.spec.fmax, "Highest filter edge in Hz, 0 for Nyquist")->capture_default_str();
}

int RunFeatures(const FeaturesArgs& a, std::ostream& out) {
  const auto manifest = ReadManifest(a.manifest);
  const auto features = ComputeFeatures(manifest, a.spec, !a.no_cmvn);
  WriteFeatureCache(a.output, features);
  std::size_t frames = 0;
  for (const auto& f : features) frames += f.num_frames();
  out << nlohmann::json{{"output", a.output},
                        {"utterances", features.size()},
                        {"frames", frames},
                        {"dim", features.empty() ? a.spec.n_mels : features.front().dim()},
                        {"cmvn", !a.no_cmvn}}
             .dump()
      << '\n';
  return kExitOk;
}

// ---- pretrain ----------------------------------------------------------------

struct PretrainArgs {
  std::optional<std::string> config, objective, encoder, train_features, manifest, output_dir;
  std::optional<std::size_t> n, epochs, batch_size, checkpoint_every;
  std::optional<std::uint64_t> seed;
  std::optional<bool> resume;
  ModelFlags model;
  AdamFlags adam;
  bool print_config = false;
};

void AddPretrain(CLI::App& app, PretrainArgs& a) {
  auto* c = app.add_subcommand("pretrain", "Pre-train an encoder with the APC or CPC objective");
  c->add_option("--config", a.config, "RunConfig JSON file; flags override its fields");
  c->add_option("--objective", a.objective, "apc or cpc")->check(CLI::IsMember({"apc", "cpc"}));
  c->add_option("--encoder", a.encoder, "rnn, transformer or cpc")->check(CLI::IsMember({"rnn", "transformer", "cpc"}));
  c->add_option("--n", a.n, "Prediction step");
  c->add_option("--seed", a.seed, "Run seed");
  c->add_option("--epochs", a.epochs, "Training epochs");
  c->add_option("--batch-size", a.batch_size, "Utterances per batch");
  c->add_option("--train-features", a.train_features, "Training feature cache");
  c->add_option("--manifest", a.manifest, "Training manifest, used without --train-features");
  c->add_option("--output-dir", a.output_dir, "Directory for checkpoint.apct and train.jsonl");
  c->add_option("--checkpoint-every", a.checkpoint_every, "Checkpoint period in epochs");
  c->add_flag("--resume,!--no-resume", a.resume, "Continue from an existing checkpoint");
  a.model.Add(c);
  a.adam.Add(c);
  c->add_flag("--print-config", a.print_config, "Print the resolved config and exit");
}

RunConfig ResolvePretrain(const PretrainArgs& a) {
  RunConfig cfg = a.config ? LoadRunConfig(*a.config) : RunConfig{};
  if (a.objective) cfg.objective = *a.objective;
  std::string kind = cfg.model.value("kind", std::string("rnn"));
  if (a.encoder) {
    if (cfg.objective == "cpc" && *a.encoder != "cpc") {
      throw ConfigError("pretrain: the cpc objective trains the cpc encoder, not '" + *a.encoder + "'");
    }
    kind = *a.encoder;
  } else if (cfg.objective == "cpc") {
    kind = "cpc";
  } else if (kind == "cpc") {
    kind = "rnn";
  }
  if (kind != cfg.model.value("kind", std::string())) cfg.model = nlohmann::json::object();
  cfg.model["kind"] = kind;
  a.model.Apply(cfg.model);
  if (a.n) cfg.n = *a.n;
  if (a.seed) cfg.seed = *a.seed;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.train_features) cfg.train_features = *a.train_features;
  if (a.manifest) cfg.manifest = *a.manifest;
  if (a.output_dir) cfg.output_dir = *a.output_dir;
  if (a.checkpoint_every) cfg.checkpoint_every = *a.checkpoint_every;
  if (a.resume) cfg.resume = *a.resume;
  a.adam.Apply(cfg.adam);
  cfg.Validate();
  return cfg;
}

int RunPretrain(const PretrainArgs& a, std::ostream& out) {
  const RunConfig cfg = ResolvePretrain(a);
  if (a.print_config) {
    out << cfg.ToJson().dump() << '\n';
    return kExitOk;
  }
  const auto result = RunExperiment(cfg);
  nlohmann::json summary = {{"checkpoint", result.checkpoint_path},
                            {"log", result.log_path},
                            {"seed", cfg.seed},
                            {"objective", cfg.objective},
                            {"encoder", cfg.model.value("kind", "")},
                            {"n", cfg.n},
                            {"first_epoch", result.first_epoch},
                            {"epochs", cfg.epochs},
                            {"steps", result.total_steps}};
  if (!result.epochs.empty()) summary["final_loss"] = result.epochs.back().mean_loss;
  out << summary.dump() << '\n';
  return kExitOk;
}

// ---- extract -----------------------------------------------------------------

struct ExtractArgs {
  std::string checkpoint, features, output;
};

void AddExtract(CLI::App& app, ExtractArgs& a) {
  auto* c = app.add_subcommand("extract", "Write encoder representations h_L for a feature cache");
  c->add_option("--checkpoint", a.checkpoint, "Encoder checkpoint")->required();
  c->add_option("--features", a.features, "Input feature cache or manifest")->required();
  c->add_option("--output", a.output, "Output representation cache (.apct)")->required();
}

int RunExtract(const ExtractArgs& a, std::ostream& out) {
  const auto encoder = LoadEncoder<float>(a.checkpoint);
  const auto features = LoadFeatures(a.features);
  const auto reps = ExtractAll<float>(*encoder, features);
  WriteFeatureCache(a.output, reps);
  out << nlohmann::json{{"output", a.output},
                        {"checkpoint", a.checkpoint},
                        {"utterances", reps.size()},
                        {"width", encoder->width()}}
             .dump()
      << '\n';
  return kExitOk;
}

// ---- probe -------------------------------------------------------------------

struct ProbeArgs {
  std::string train;
  std::optional<std::string> eval, checkpoint, config, output, save_encoder;
  std::optional<std::size_t> eval_per_speaker;
  std::size_t utts_per_speaker = 0;
  bool frozen = false, finetune = false, print_config = false;
  ProbeTrainFlags train_flags;
  // speaker-id
  std::optional<std::size_t> hidden;
  // seq2seq
  Seq2SeqModelFlags model;
  std::optional<std::size_t> beam, max_decode_len;
};

void AddProbeCommon(CLI::App* c, ProbeArgs& a) {
  c->add_option("--train", a.train, "Training feature cache or manifest")->required();
  c->add_option("--eval", a.eval, "Evaluation feature cache or manifest");
  c->add_option("--checkpoint", a.checkpoint, "Encoder checkpoint; omit to probe the raw features");
  auto* fr = c->add_flag("--frozen", a.frozen, "Keep encoder weights fixed (default)");
  auto* ft = c->add_flag("--finetune", a.finetune, "Update encoder weights with the probe");
  fr->excludes(ft);
  c->add_option("--config", a.config, "Probe config JSON file; flags override its fields");
  c->add_option("--output", a.output, "Also write the result JSON to this file");
  c->add_option("--save-encoder", a.save_encoder, "Write the encoder after probe training (needs --checkpoint)");
  c->add_flag("--print-config", a.print_config, "Print the resolved config and exit");
  a.train_flags.Add(c);
}

void AddProbe(CLI::App& app, ProbeArgs& a, CLI::App*& speaker, CLI::App*& seq2seq) {
  auto* c = app.add_subcommand("probe", "Train and evaluate a downstream probe");
  c->require_subcommand(1);
  speaker = c->add_subcommand("speaker-id", "GRU speaker classifier");
  AddProbeCommon(speaker, a);
  speaker->add_option("--utts-per-speaker", a.utts_per_speaker, "Training utterances per speaker, 0 for all")
      ->capture_default_str();
  speaker->add_option("--eval-per-speaker", a.eval_per_speaker,
                      "Hold out this many utterances per speaker when --eval is absent");
  speaker->add_option("--hidden", a.hidden, "Probe GRU width");
  seq2seq = c->add_subcommand("seq2seq", "Attention sequence-to-sequence transcriber");
  AddProbeCommon(seq2seq, a);
  a.model.Add(seq2seq);
  seq2seq->add_option("--beam", a.beam, "Beam width for decoding");
  seq2seq->add_option("--max-decode-len", a.max_decode_len, "Decoding length limit, 0 for automatic");
}

TransferMode ProbeMode(const ProbeArgs& a) { return a.finetune ? TransferMode::Finetuned() : TransferMode::Frozen(); }

// The encoder under a probe, saved afterwards with the meta it was loaded
// with so a frozen run rewrites an optimizer-free checkpoint byte for byte.
class ProbeEncoder {
 public:
  explicit ProbeEncoder(const ProbeArgs& a) {
    if (a.save_encoder && !a.checkpoint) throw ConfigError("probe: --save-encoder needs --checkpoint");
    if (!a.checkpoint) return;
    meta_ = LoadCheckpoint<float>(*a.checkpoint).meta;
    encoder_ = LoadEncoder<float>(*a.checkpoint);
  }
  Encoder<float>* get() const { return encoder_.get(); }
  void Save(const ProbeArgs& a) const {
    if (a.save_encoder) SaveCheckpoint<float>(*a.save_encoder, *encoder_, nullptr, meta_);
  }

 private:
  std::unique_ptr<Encoder<float>> encoder_;
  CheckpointMeta meta_;
};

nlohmann::json ProbeHeader(const ProbeArgs& a, const char* task, std::uint64_t seed) {
  return {{"task", task},
          {"mode", ProbeMode(a).name()},
          {"features", a.checkpoint ? *a.checkpoint : std::string("log Mel")},
          {"seed", seed}};
}

int RunSpeakerProbe(const ProbeArgs& a, std::ostream& out) {
  SpeakerProbeConfig cfg = a.config ? SpeakerProbeConfig::FromJson(ReadJsonFile(*a.config, "probe config"))
                                    : SpeakerProbeConfig{};
  if (a.hidden) cfg.hidden = *a.hidden;
  a.train_flags.Apply(cfg.train);
  cfg = SpeakerProbeConfig::FromJson(cfg.ToJson());
  cfg.train.Validate();
  if (a.print_config) {
    out << cfg.ToJson().dump() << '\n';
    return kExitOk;
  }
  if (!a.eval && !a.eval_per_speaker) throw ConfigError("probe: pass --eval or --eval-per-speaker");
  auto pool = LoadFeatures(a.train);
  std::vector<FeatureSequence> train, eval;
  if (a.eval) {
    train = std::move(pool);
    eval = LoadFeatures(*a.eval);
  } else {
    auto split = SplitPerSpeaker(pool, *a.eval_per_speaker);
    train = std::move(split.train);
    eval = std::move(split.eval);
  }
  train = CapUtterancesPerSpeaker(train, a.utts_per_speaker);
  ProbeEncoder encoder(a);
  const auto r = TrainSpeakerProbe<float>(encoder.get(), ProbeMode(a), train, eval, cfg);
  encoder.Save(a);
  nlohmann::json result = ProbeHeader(a, "speaker-id", cfg.train.seed);
  result.update({{"accuracy", r.accuracy},
                 {"utts_per_speaker", a.utts_per_speaker},
                 {"speakers", r.probe.speakers.size()},
                 {"train_utterances", train.size()},
                 {"eval_utterances", eval.size()},
                 {"steps", r.steps},
                 {"final_loss", r.epoch_losses.empty() ? 0.0 : r.epoch_losses.back()}});
  if (a.output) WriteJsonFile(*a.output, result);
  out << result.dump() << '\n';
  return kExitOk;
}

int RunSeq2SeqProbe(const ProbeArgs& a, std::ostream& out) {
  Seq2SeqProbeConfig cfg = a.config ? Seq2SeqProbeConfig::FromJson(ReadJsonFile(*a.config, "probe config"))
                                    : Seq2SeqProbeConfig{};
  a.model.Apply(cfg.model);
  if (a.beam) cfg.beam = *a.beam;
  if (a.max_decode_len) cfg.max_decode_len = *a.max_decode_len;
  a.train_flags.Apply(cfg.train);
  cfg = Seq2SeqProbeConfig::FromJson(cfg.ToJson());
  cfg.train.Validate();
  if (a.print_config) {
    out << cfg.ToJson().dump() << '\n';
    return kExitOk;
  }
  if (!a.eval) throw ConfigError("probe: seq2seq needs --eval");
  const auto train = LoadFeatures(a.train);
  const auto eval = LoadFeatures(*a.eval);
  ProbeEncoder encoder(a);
  const auto r = TrainSeq2SeqProbe<float>(encoder.get(), ProbeMode(a), train, eval, cfg);
  encoder.Save(a);
  nlohmann::json result = ProbeHeader(a, "seq2seq", cfg.train.seed);
  result.update({{"wer", r.wer},
                 {"cer", r.cer},
                 {"teacher_forced_cer", r.teacher_forced_cer},
                 {"beam", cfg.beam},
                 {"train_utterances", train.size()},
                 {"eval_utterances", eval.size()},
                 {"steps", r.steps},
                 {"final_loss", r.epoch_losses.empty() ? 0.0 : r.epoch_losses.back()}});
  if (a.output) {
    nlohmann::json full = result;
    full["hypotheses"] = r.hypotheses;
    WriteJsonFile(*a.output, full);
  }
  out << result.dump() << '\n';
  return kExitOk;
}

// ---- sweep -------------------------------------------------------------------

struct SweepArgs {
  std::optional<std::string> config, protocol, metric, work_dir, eval;
  std::string pretrain_features, train;
  std::optional<std::size_t> eval_per_speaker, rnn_n, transformer_n, cpc_n, pretrain_epochs, pretrain_batch_size;
  std::optional<std::uint64_t> seed;
  ProbeTrainFlags probe;
  bool print_config = false;
};

void AddSweep(CLI::App& app, SweepArgs& a) {
  auto* c = app.add_subcommand("sweep", "Run a transfer table: n, fraction, depth or utts-per-speaker");
  c->add_option("--config", a.config, "Sweep config JSON file; flags override its fields");
  c->add_option("--protocol", a.protocol, "n, fraction, depth or utts-per-speaker")
      ->check(CLI::IsMember({"n", "fraction", "depth", "utts-per-speaker"}));
  c->add_option("--metric", a.metric, "wer or cer for transcription tables, accuracy for speakers");
  c->add_option("--work-dir", a.work_dir, "Directory for pre-training runs and results");
  c->add_option("--pretrain-features", a.pretrain_features, "Unlabeled feature cache or manifest")->required();
  c->add_option("--train", a.train, "Probe training feature cache or manifest")->required();
  c->add_option("--eval", a.eval, "Probe evaluation feature cache or manifest");
  c->add_option("--eval-per-speaker", a.eval_per_speaker, "Held-out utterances per speaker when --eval is absent");
  c->add_option("--seed", a.seed, "Seed for pre-training and probes");
  c->add_option("--rnn-n", a.rnn_n, "n of the R-APC rows outside the n sweep");
  c->add_option("--transformer-n", a.transformer_n, "n of the T-APC rows outside the n sweep");
  c->add_option("--cpc-n", a.cpc_n, "n of the CPC row");
  c->add_option("--pretrain-epochs", a.pretrain_epochs, "Pre-training epochs");
  c->add_option("--pretrain-batch-size", a.pretrain_batch_size, "Pre-training batch size");
  a.probe.Add(c, "probe-");
  c->add_flag("--print-config", a.print_config, "Print the resolved config and exit");
}

int RunSweepCommand(const SweepArgs& a, std::ostream& out) {
  TransferSweepConfig cfg = a.config ? TransferSweepConfig::FromJson(ReadJsonFile(*a.config, "sweep config"))
                                     : TransferSweepConfig{};
  if (a.protocol) cfg.protocol = ParseSweepProtocol(*a.protocol);
  if (a.metric) cfg.metric = *a.metric;
  if (a.work_dir) cfg.work_dir = *a.work_dir;
  if (a.seed) {
    cfg.pretrain.seed = *a.seed;
    cfg.seq2seq.train.seed = *a.seed;
    cfg.speaker.train.seed = *a.seed;
  }
  if (a.rnn_n) cfg.rnn_n = *a.rnn_n;
  if (a.transformer_n) cfg.transformer_n = *a.transformer_n;
  if (a.cpc_n) cfg.cpc_n = *a.cpc_n;
  if (a.pretrain_epochs) cfg.pretrain.epochs = *a.pretrain_epochs;
  if (a.pretrain_batch_size) cfg.pretrain.batch_size = *a.pretrain_batch_size;
  a.probe.Apply(cfg.seq2seq.train);
  a.probe.Apply(cfg.speaker.train);
  cfg.Validate();
  if (a.print_config) {
    out << cfg.ToJson().dump() << '\n';
    return kExitOk;
  }
  const auto pretrain = LoadFeatures(a.pretrain_features);
  auto pool = LoadFeatures(a.train);
  std::vector<FeatureSequence> train, eval;
  if (a.eval) {
    train = std::move(pool);
    eval = LoadFeatures(*a.eval);
  } else if (a.eval_per_speaker) {
    auto split = SplitPerSpeaker(pool, *a.eval_per_speaker);
    train = std::move(split.train);
    eval = std::move(split.eval);
  } else {
    throw ConfigError("sweep: pass --eval or --eval-per-speaker");
  }
  const auto table = RunTransferSweep(cfg, {pretrain, train, eval}, [](const SweepCell& c) {
    if (c.value) {
      spdlog::info("sweep: {} / {} = {:.4f}", c.row, c.column, *c.value);
    } else {
      spdlog::warn("sweep: {} / {} failed: {}", c.row, c.column, c.error);
    }
  });
  out << table.ToTsv();
  return kExitOk;
}

std::string UsageOf(const CLI::App& app) {
  const CLI::App* deepest = &app;
  for (;;) {
    const auto subs = deepest->get_subcommands();
    if (subs.empty()) break;
    deepest = subs.front();
  }
  return deepest->help();
}

// Parses args into app and runs action; maps failures to exit codes.
int Dispatch(CLI::App& app, const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
             const std::function<int()>& action) {
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << UsageOf(app);
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (args.empty()) {
      err << app.help();
      return kExitUsage;
    }
    PrintError(err, "usage", e.what());
    err << UsageOf(app);
    return kExitUsage;
  }
  try {
    return action();
  } catch (const Error& e) {
    PrintError(err, e.kind(), e.what());
  } catch (const std::exception& e) {
    PrintError(err, "internal", e.what());
  }
  return kExitFailure;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Autoregressive predictive coding: feature extraction, pre-training and transfer probes", "apc"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}))
      ->capture_default_str();

  FeaturesArgs features;
  PretrainArgs pretrain;
  ExtractArgs extract;
  ProbeArgs probe;
  SweepArgs sweep;
  CLI::App* speaker_cmd = nullptr;
  CLI::App* seq2seq_cmd = nullptr;
  AddFeatures(app, features);
  AddPretrain(app, pretrain);
  AddExtract(app, extract);
  AddProbe(app, probe, speaker_cmd, seq2seq_cmd);
  AddSweep(app, sweep);

  return Dispatch(app, args, out, err, [&]() -> int {
    spdlog::set_level(spdlog::level::from_str(log_level));
    if (app.got_subcommand("features")) return RunFeatures(features, out);
    if (app.got_subcommand("pretrain")) return RunPretrain(pretrain, out);
    if (app.got_subcommand("extract")) return RunExtract(extract, out);
    if (speaker_cmd->parsed()) return RunSpeakerProbe(probe, out);
    if (seq2seq_cmd->parsed()) return RunSeq2SeqProbe(probe, out);
    return RunSweepCommand(sweep, out);
  });
}

int RunDeskCorpusCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Write a synthetic speech corpus: WAV files plus pre-training, probe and evaluation manifests",
               "apc_desk_corpus"};
  std::string dir;
  DeskCorpusConfig cfg;
  std::size_t probe_train = 200, probe_eval = 50;
  std::string encoding = "pcm16";
  app.add_option("--output-dir", dir, "Directory to write")->required();
  app.add_option("--seconds", cfg.total_seconds, "Total audio duration")->capture_default_str();
  app.add_option("--speakers", cfg.speakers, "Number of speakers")->capture_default_str();
  app.add_option("--alphabet", cfg.alphabet, "Characters with a distinct formant pattern each")->capture_default_str();
  app.add_option("--lexicon-size", cfg.lexicon_size, "Distinct words")->capture_default_str();
  app.add_option("--noise", cfg.noise, "Additive noise standard deviation")->capture_default_str();
  app.add_option("--sample-rate", cfg.sample_rate, "Sample rate in Hz")->capture_default_str();
  app.add_option("--seed", cfg.seed, "Generator seed")->capture_default_str();
  app.add_option("--probe-train", probe_train, "Utterances in train.jsonl")->capture_default_str();
  app.add_option("--probe-eval", probe_eval, "Utterances in eval.jsonl, excluded from pretrain.jsonl")
      ->capture_default_str();
  app.add_option("--encoding", encoding, "pcm16 or float32")
      ->check(CLI::IsMember({"pcm16", "float32"}))
      ->capture_default_str();
  return Dispatch(app, args, out, err, [&] {
    const auto files = WriteDeskCorpus(dir, cfg, probe_train, probe_eval,
                                       encoding == "pcm16" ? WavEncoding::kPcm16 : WavEncoding::kFloat32);
    out << nlohmann::json{{"pretrain", files.pretrain_manifest},
                          {"train", files.train_manifest},
                          {"eval", files.eval_manifest},
                          {"utterances", files.utterances},
                          {"seconds", files.seconds},
                          {"seed", cfg.seed}}
               .dump()
        << '\n';
    return kExitOk;
  });
}

}  // namespace apc
