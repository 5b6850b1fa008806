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

#include "apc/seq2seq.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "apc/batching.h"
#include "apc/error.h"
#include "apc/metrics.h"

namespace apc {
namespace {

template <typename T>
std::size_t ArgMax(std::span<const T> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

void RejectUnknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const char* what) {
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError(std::string(what) + ": unknown field '" + key + "'");
    }
  }
}

}  // namespace

// ---- vocabulary -------------------------------------------------------------

CharVocab::CharVocab(std::string_view alphabet) {
  std::set<char> unique(alphabet.begin(), alphabet.end());
  chars_.assign(unique.begin(), unique.end());
}

CharVocab CharVocab::FromTranscripts(std::span<const FeatureSequence> data) {
  std::string all;
  for (const auto& u : data) all += u.transcript;
  return CharVocab(all);
}

std::vector<std::int64_t> CharVocab::Encode(std::string_view text) const {
  std::vector<std::int64_t> out;
  out.reserve(text.size());
  for (char c : text) {
    const auto pos = chars_.find(c);
    if (pos == std::string::npos) {
      throw InputError(std::string("vocabulary: character '") + c + "' is not in the vocabulary");
    }
    out.push_back(static_cast<std::int64_t>(pos) + 2);
  }
  return out;
}

std::string CharVocab::Decode(std::span<const std::int64_t> tokens) const {
  std::string out;
  for (auto t : tokens) {
    if (t >= 2 && static_cast<std::size_t>(t - 2) < chars_.size()) out.push_back(chars_[t - 2]);
  }
  return out;
}

// ---- config -----------------------------------------------------------------

nlohmann::json Seq2SeqConfig::ToJson() const {
  return {{"input_dim", input_dim},         {"conv_channels", conv_channels}, {"encoder_hidden", encoder_hidden},
          {"encoder_layers", encoder_layers}, {"decoder_hidden", decoder_hidden}, {"attention_dim", attention_dim},
          {"embed_dim", embed_dim},         {"vocab_size", vocab_size}};
}

Seq2SeqConfig Seq2SeqConfig::FromJson(const nlohmann::json& j) {
  RejectUnknown(j,
                {"input_dim", "conv_channels", "encoder_hidden", "encoder_layers", "decoder_hidden", "attention_dim",
                 "embed_dim", "vocab_size"},
                "seq2seq");
  Seq2SeqConfig c;
  try {
    c.input_dim = j.value("input_dim", c.input_dim);
    c.conv_channels = j.value("conv_channels", c.conv_channels);
    c.encoder_hidden = j.value("encoder_hidden", c.encoder_hidden);
    c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
    c.decoder_hidden = j.value("decoder_hidden", c.decoder_hidden);
    c.attention_dim = j.value("attention_dim", c.attention_dim);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
  } catch (const nlohmann::json::type_error& e) {
    throw ConfigError(std::string("seq2seq: ") + e.what());
  }
  return c;
}

void Seq2SeqConfig::Validate() const {
  if (input_dim == 0 || conv_channels == 0 || encoder_hidden == 0 || encoder_layers == 0 || decoder_hidden == 0 ||
      attention_dim == 0 || embed_dim == 0) {
    throw ConfigError("seq2seq: every dimension must be positive");
  }
  if (vocab_size < 3) throw ConfigError("seq2seq: vocab_size must cover <sos>, <eos> and one character");
}

// ---- model ------------------------------------------------------------------

template <typename T>
Seq2SeqModel<T>::Seq2SeqModel(const Seq2SeqConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.Validate();
  Initializer init(seed);
  conv_w_[0] = init.Uniform<T>(3 * cfg_.input_dim, cfg_.conv_channels);
  conv_b_[0] = init.Filled<T>(1, cfg_.conv_channels, T(0));
  conv_w_[1] = init.Uniform<T>(3 * cfg_.conv_channels, cfg_.conv_channels);
  conv_b_[1] = init.Filled<T>(1, cfg_.conv_channels, T(0));
  for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
    const std::size_t in = l == 0 ? cfg_.conv_channels : 2 * cfg_.encoder_hidden;
    fwd_.push_back(GruLayer<T>::Create(in, cfg_.encoder_hidden, init));
    bwd_.push_back(GruLayer<T>::Create(in, cfg_.encoder_hidden, init));
  }
  const std::size_t mem = 2 * cfg_.encoder_hidden;
  w_a_ = init.Uniform<T>(cfg_.decoder_hidden, cfg_.attention_dim);
  u_a_ = init.Uniform<T>(mem, cfg_.attention_dim);
  v_a_ = init.Uniform<T>(cfg_.attention_dim, 1);
  embed_ = init.Uniform<T>(cfg_.vocab_size, cfg_.embed_dim, std::sqrt(double(cfg_.vocab_size)));
  decoder_ = GruLayer<T>::Create(cfg_.embed_dim + mem, cfg_.decoder_hidden, init);
  w_o_ = init.Uniform<T>(cfg_.decoder_hidden + mem, cfg_.vocab_size);
  b_o_ = init.Filled<T>(1, cfg_.vocab_size, T(0));
}

template <typename T>
ParamList<T> Seq2SeqModel<T>::Params() const {
  ParamList<T> out;
  for (std::size_t i = 0; i < 2; ++i) {
    out.push_back({"s2s.conv" + std::to_string(i) + ".w", conv_w_[i]});
    out.push_back({"s2s.conv" + std::to_string(i) + ".b", conv_b_[i]});
  }
  for (std::size_t l = 0; l < fwd_.size(); ++l) {
    fwd_[l].AppendParams("s2s.enc" + std::to_string(l) + ".fwd", out);
    bwd_[l].AppendParams("s2s.enc" + std::to_string(l) + ".bwd", out);
  }
  out.push_back({"s2s.att.w", w_a_});
  out.push_back({"s2s.att.u", u_a_});
  out.push_back({"s2s.att.v", v_a_});
  out.push_back({"s2s.embed", embed_});
  decoder_.AppendParams("s2s.dec", out);
  out.push_back({"s2s.out.w", w_o_});
  out.push_back({"s2s.out.b", b_o_});
  return out;
}

template <typename T>
Var<T> Seq2SeqModel<T>::Downsample(const Var<T>& x, std::size_t layer) const {
  const std::size_t N = x.rows(), M = (N + 1) / 2;
  std::vector<std::int64_t> idx;
  idx.reserve(3 * M);
  for (std::size_t i = 0; i < M; ++i) {
    for (std::int64_t k = -1; k <= 1; ++k) {
      const std::int64_t src = 2 * static_cast<std::int64_t>(i) + k;
      idx.push_back(src < 0 || src >= static_cast<std::int64_t>(N) ? kZeroRow : src);
    }
  }
  auto windows = Reshape(GatherRows(x, std::span<const std::int64_t>(idx)), Shape{M, 3 * x.cols()});
  return Gelu(Add(Matmul(windows, conv_w_[layer]), conv_b_[layer]));
}

template <typename T>
Seq2SeqMemory<T> Seq2SeqModel<T>::Encode(const Var<T>& src) const {
  if (src.shape().size() != 2 || src.cols() != cfg_.input_dim || src.rows() == 0) {
    throw DimensionError("seq2seq: expected [N x " + std::to_string(cfg_.input_dim) + "] input, got " +
                         ShapeString(src.shape()));
  }
  Var<T> h = Downsample(Downsample(src, 0), 1);
  for (std::size_t l = 0; l < fwd_.size(); ++l) {
    const Var<T> dirs[] = {GruSequence(h, 1, fwd_[l]), GruSequence(h, 1, bwd_[l], true)};
    h = ConcatCols(std::span<const Var<T>>(dirs));
  }
  return {h, Matmul(h, u_a_)};
}

template <typename T>
Var<T> Seq2SeqModel<T>::InitialState() const {
  return Var<T>::Constant(Tensor<T>(1, cfg_.decoder_hidden));
}

template <typename T>
DecoderStep<T> Seq2SeqModel<T>::Step(const Seq2SeqMemory<T>& memory, const Var<T>& state,
                                     std::int64_t prev_token) const {
  if (prev_token < 0 || static_cast<std::size_t>(prev_token) >= cfg_.vocab_size) {
    throw InputError("seq2seq: token " + std::to_string(prev_token) + " outside the vocabulary");
  }
  auto energy = Matmul(Tanh(Add(memory.keys, Matmul(state, w_a_))), v_a_);  // [M x 1]
  auto alpha = Transpose(Softmax(energy, 0));                                 // [1 x M]
  auto context = Matmul(alpha, memory.states);
  const std::int64_t tok[] = {prev_token};
  const Var<T> in_parts[] = {GatherRows(embed_, std::span<const std::int64_t>(tok)), context};
  auto next = GruCell(ConcatCols(std::span<const Var<T>>(in_parts)), state, decoder_);
  const Var<T> out_parts[] = {next, context};
  auto logits = Add(Matmul(ConcatCols(std::span<const Var<T>>(out_parts)), w_o_), b_o_);
  return {LogSoftmax(logits, 1), alpha, next};
}

template <typename T>
Seq2SeqOutput<T> Seq2SeqModel<T>::Forward(const Var<T>& src, std::span<const std::int64_t> target) const {
  if (target.empty()) throw InputError("seq2seq: empty target sequence");
  auto memory = Encode(src);
  Seq2SeqOutput<T> out;
  out.targets.assign(target.begin(), target.end());
  out.targets.push_back(CharVocab::kEos);
  std::vector<Var<T>> rows, attention;
  Var<T> state = InitialState();
  std::int64_t prev = CharVocab::kSos;
  for (auto tok : out.targets) {
    auto step = Step(memory, state, prev);
    rows.push_back(step.log_probs);
    attention.push_back(step.attention);
    state = step.state;
    prev = tok;
  }
  out.log_probs = ConcatRows(std::span<const Var<T>>(rows));
  out.attention = ConcatRows(std::span<const Var<T>>(attention));
  return out;
}

template <typename T>
Var<T> Seq2SeqModel<T>::Loss(const Seq2SeqOutput<T>& out) {
  return Scale(Mean(PickColumns(out.log_probs, std::span<const std::int64_t>(out.targets))), T(-1));
}

// ---- decoding ---------------------------------------------------------------

template <typename T>
Hypothesis GreedyDecode(const Seq2SeqModel<T>& model, const Var<T>& src, std::size_t max_len) {
  NoGradGuard guard;
  auto memory = model.Encode(src);
  Hypothesis hyp;
  Var<T> state = model.InitialState();
  std::int64_t prev = CharVocab::kSos;
  while (hyp.tokens.size() < max_len) {
    auto step = model.Step(memory, state, prev);
    const auto row = step.log_probs.value().row(0);
    const auto best = static_cast<std::int64_t>(ArgMax<T>(row));
    hyp.log_prob += static_cast<double>(row[best]);
    if (best == CharVocab::kEos) {
      hyp.complete = true;
      break;
    }
    hyp.tokens.push_back(best);
    state = step.state;
    prev = best;
  }
  return hyp;
}

template <typename T>
Hypothesis BeamDecode(const Seq2SeqModel<T>& model, const Var<T>& src, std::size_t beam, std::size_t max_len) {
  if (beam == 0) throw ConfigError("beam search: beam size must be positive");
  NoGradGuard guard;
  auto memory = model.Encode(src);
  struct Active {
    Hypothesis hyp;
    Var<T> state;
  };
  struct Candidate {
    double score;
    std::size_t parent;
    std::int64_t token;
  };
  std::vector<Active> active{{Hypothesis{}, model.InitialState()}};
  std::vector<Hypothesis> finished;
  while (!active.empty()) {
    if (active.front().hyp.tokens.size() >= max_len) {
      for (auto& a : active) finished.push_back(std::move(a.hyp));
      break;
    }
    std::vector<DecoderStep<T>> steps;
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < active.size(); ++i) {
      const auto& a = active[i];
      const std::int64_t prev = a.hyp.tokens.empty() ? CharVocab::kSos : a.hyp.tokens.back();
      steps.push_back(model.Step(memory, a.state, prev));
      const auto row = steps.back().log_probs.value().row(0);
      for (std::size_t v = 0; v < row.size(); ++v) {
        cands.push_back({a.hyp.log_prob + static_cast<double>(row[v]), i, static_cast<std::int64_t>(v)});
      }
    }
    const std::size_t keep = std::min(beam, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + keep, cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.parent != b.parent) return a.parent < b.parent;
      return a.token < b.token;
    });
    std::vector<Active> next;
    for (std::size_t c = 0; c < keep; ++c) {
      const auto& cand = cands[c];
      Hypothesis h = active[cand.parent].hyp;
      h.log_prob = cand.score;
      if (cand.token == CharVocab::kEos) {
        h.complete = true;
        finished.push_back(std::move(h));
      } else {
        h.tokens.push_back(cand.token);
        next.push_back({std::move(h), steps[cand.parent].state});
      }
    }
    active = std::move(next);
    // Extensions only lower the score, so a finished hypothesis at least as
    // good as every active one is final.
    if (!finished.empty() && !active.empty()) {
      double best_finished = finished.front().log_prob;
      for (const auto& f : finished) best_finished = std::max(best_finished, f.log_prob);
      if (best_finished >= active.front().hyp.log_prob) break;
    }
  }
  Hypothesis best = GreedyDecode(model, src, max_len);
  for (auto& f : finished) {
    if (f.log_prob > best.log_prob) best = std::move(f);
  }
  return best;
}

// ---- probe training -----------------------------------------------------------

nlohmann::json Seq2SeqProbeConfig::ToJson() const {
  return {{"model", model}, {"train", train.ToJson()}, {"beam", beam}, {"max_decode_len", max_decode_len}};
}

Seq2SeqProbeConfig Seq2SeqProbeConfig::FromJson(const nlohmann::json& j) {
  RejectUnknown(j, {"model", "train", "beam", "max_decode_len"}, "seq2seq probe");
  Seq2SeqProbeConfig c;
  try {
    if (j.contains("model")) c.model = j.at("model");
    if (j.contains("train")) c.train = ProbeTrainConfig::FromJson(j.at("train"));
    c.beam = j.value("beam", c.beam);
    c.max_decode_len = j.value("max_decode_len", c.max_decode_len);
  } catch (const nlohmann::json::type_error& e) {
    throw ConfigError(std::string("seq2seq probe: ") + e.what());
  }
  Seq2SeqConfig::FromJson(c.model);
  if (c.beam == 0) throw ConfigError("seq2seq probe: beam must be positive");
  return c;
}

template <typename T>
Seq2SeqScores EvaluateSeq2SeqProbe(Encoder<T>* encoder, const Seq2SeqModel<T>& model, const CharVocab& vocab,
                                   std::span<const FeatureSequence> eval, std::size_t beam,
                                   std::size_t max_decode_len) {
  if (eval.empty()) throw InputError("seq2seq probe: empty evaluation set");
  NoGradGuard guard;
  ProbeFrontend<T> front(encoder, TransferMode::Frozen(), eval);
  std::size_t max_len = max_decode_len;
  if (max_len == 0) {
    for (const auto& u : eval) max_len = std::max(max_len, 2 * u.transcript.size() + 10);
  }
  Seq2SeqScores scores;
  std::vector<std::string> refs;
  std::size_t mismatches = 0, positions = 0;
  for (std::size_t i = 0; i < eval.size(); ++i) {
    const auto& ref = eval[i].transcript;
    const auto target = vocab.Encode(ref);
    auto src = front.Utterance(i);
    auto tf = model.Forward(src, target);
    for (std::size_t t = 0; t < target.size(); ++t) {
      mismatches += static_cast<std::int64_t>(ArgMax<T>(tf.log_probs.value().row(t))) != target[t];
    }
    positions += target.size();
    scores.hypotheses.push_back(vocab.Decode(BeamDecode(model, src, beam, max_len).tokens));
    refs.push_back(ref);
  }
  scores.teacher_forced_cer = static_cast<double>(mismatches) / static_cast<double>(positions);
  scores.cer = CorpusErrorRate(scores.hypotheses, refs, ErrorUnit::kChar);
  scores.wer = CorpusErrorRate(scores.hypotheses, refs, ErrorUnit::kWord);
  return scores;
}

template <typename T>
Seq2SeqProbeResult<T> TrainSeq2SeqProbe(Encoder<T>* encoder, TransferMode mode,
                                       std::span<const FeatureSequence> train,
                                       std::span<const FeatureSequence> eval, const Seq2SeqProbeConfig& cfg) {
  cfg.train.Validate();
  if (train.empty()) throw InputError("seq2seq probe: empty training set");
  std::string alphabet;
  for (const auto& u : train) alphabet += u.transcript;
  for (const auto& u : eval) alphabet += u.transcript;
  CharVocab vocab(alphabet);
  std::vector<std::vector<std::int64_t>> targets;
  for (const auto& u : train) {
    if (u.transcript.empty()) {
      throw InputError("seq2seq probe: utterance '" + u.utterance_id + "' has an empty transcript");
    }
    targets.push_back(vocab.Encode(u.transcript));
  }
  for (const auto& u : eval) vocab.Encode(u.transcript);

  ProbeFrontend<T> front(encoder, mode, train);
  nlohmann::json model_json = cfg.model;
  model_json["input_dim"] = front.width();
  model_json["vocab_size"] = vocab.size();
  Seq2SeqProbeResult<T> result{Seq2SeqModel<T>(Seq2SeqConfig::FromJson(model_json), DeriveSeed(cfg.train.seed, 0x5e9)),
                               vocab, {}, 0, 0.0, 0.0, 0.0, {}};
  ParamList<T> params = result.model.Params();
  for (auto& p : front.TrainableParams()) params.push_back(p);
  Adam<T> opt(params, cfg.train.adam);

  std::vector<std::size_t> lengths(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) lengths[i] = front.length(i);
  bool done = false;
  for (std::size_t epoch = 0; epoch < cfg.train.epochs && !done; ++epoch) {
    const auto plan = MakeBatches(lengths, cfg.train.batch_size, cfg.train.seed, epoch);
    double loss_sum = 0;
    for (std::size_t b = 0; b < plan.batches.size(); ++b) {
      const auto& batch = plan.batches[b];
      front.BeginStep(DeriveSeed(cfg.train.seed, epoch + 1, b + 1));
      ZeroGrads(params);
      for (auto j : batch) {
        auto loss = Seq2SeqModel<T>::Loss(result.model.Forward(front.Utterance(j), targets[j]));
        const double value = static_cast<double>(loss.item());
        if (!std::isfinite(value)) throw DivergenceError("seq2seq probe: non-finite loss");
        loss_sum += value;
        Backward(Scale(loss, T(1) / static_cast<T>(batch.size())));
      }
      opt.Step();
      ++result.steps;
      if (cfg.train.max_steps > 0 && result.steps >= cfg.train.max_steps) {
        done = true;
        break;
      }
    }
    result.epoch_losses.push_back(loss_sum / static_cast<double>(train.size()));
    if (result.epoch_losses.back() <= cfg.train.target_loss) done = true;
  }
  front.EndTraining();
  if (!eval.empty()) {
    auto scores = EvaluateSeq2SeqProbe(encoder, result.model, vocab, eval, cfg.beam, cfg.max_decode_len);
    result.teacher_forced_cer = scores.teacher_forced_cer;
    result.cer = scores.cer;
    result.wer = scores.wer;
    result.hypotheses = std::move(scores.hypotheses);
  }
  return result;
}

#define APC_INSTANTIATE_SEQ2SEQ(T)                                                                            \
  template class Seq2SeqModel<T>;                                                                            \
  template Hypothesis GreedyDecode(const Seq2SeqModel<T>&, const Var<T>&, std::size_t);                      \
  template Hypothesis BeamDecode(const Seq2SeqModel<T>&, const Var<T>&, std::size_t, std::size_t);           \
  template Seq2SeqScores EvaluateSeq2SeqProbe(Encoder<T>*, const Seq2SeqModel<T>&, const CharVocab&,         \
                                              std::span<const FeatureSequence>, std::size_t, std::size_t);   \
  template Seq2SeqProbeResult<T> TrainSeq2SeqProbe(Encoder<T>*, TransferMode,                                \
                                                   std::span<const FeatureSequence>,                         \
                                                   std::span<const FeatureSequence>, const Seq2SeqProbeConfig&);

APC_INSTANTIATE_SEQ2SEQ(float)
APC_INSTANTIATE_SEQ2SEQ(double)

}  // namespace apc
