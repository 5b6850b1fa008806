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

#include "apc/synthetic.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "apc/error.h"

namespace apc {
namespace {

std::vector<std::vector<double>> GaussianRows(std::size_t rows, std::size_t cols, double scale,
                                              std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<std::vector<double>> out(rows, std::vector<double>(cols));
  for (auto& r : out)
    for (auto& v : r) v = g(rng);
  return out;
}

std::string Id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%04zu", prefix, i);
  return buf;
}

}  // namespace

std::vector<FeatureSequence> OscillatorCorpus(const OscillatorCorpusConfig& cfg) {
  if (cfg.utterances == 0 || cfg.frames == 0 || cfg.dim == 0 || cfg.frequencies.empty()) {
    throw ConfigError("oscillator corpus: sizes must be positive");
  }
  std::mt19937_64 rng(cfg.seed);
  const std::size_t k = cfg.frequencies.size();
  auto mix = GaussianRows(2 * k, cfg.dim, 1.0 / std::sqrt(static_cast<double>(k)), rng);
  std::uniform_real_distribution<double> phase(0.0, 2 * M_PI), amp(0.5, 1.5);
  std::normal_distribution<double> noise(0.0, cfg.noise);
  std::vector<FeatureSequence> out;
  for (std::size_t u = 0; u < cfg.utterances; ++u) {
    std::vector<double> ph(k), a(k);
    for (std::size_t i = 0; i < k; ++i) {
      ph[i] = phase(rng);
      a[i] = amp(rng);
    }
    FeatureSequence seq{Tensor<float>(cfg.frames, cfg.dim), Id("osc", u), "spk0", ""};
    for (std::size_t t = 0; t < cfg.frames; ++t) {
      for (std::size_t j = 0; j < cfg.dim; ++j) {
        double v = noise(rng);
        for (std::size_t i = 0; i < k; ++i) {
          const double arg = cfg.frequencies[i] * static_cast<double>(t) + ph[i];
          v += a[i] * (mix[2 * i][j] * std::cos(arg) + mix[2 * i + 1][j] * std::sin(arg));
        }
        seq.frames(t, j) = static_cast<float>(v);
      }
    }
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<FeatureSequence> PrototypeCorpus(const PrototypeCorpusConfig& cfg) {
  if (cfg.utterances == 0 || cfg.frames == 0 || cfg.dim == 0 || cfg.prototypes < 2) {
    throw ConfigError("prototype corpus: sizes must be positive and prototypes >= 2");
  }
  std::mt19937_64 rng(cfg.seed);
  auto protos = GaussianRows(cfg.prototypes, cfg.dim, 1.0, rng);
  std::uniform_int_distribution<std::size_t> start(0, cfg.prototypes - 1);
  std::normal_distribution<double> noise(0.0, cfg.noise);
  std::vector<FeatureSequence> out;
  for (std::size_t u = 0; u < cfg.utterances; ++u) {
    const std::size_t offset = start(rng);
    FeatureSequence seq{Tensor<float>(cfg.frames, cfg.dim), Id("proto", u), Id("spk", u % 2), ""};
    for (std::size_t t = 0; t < cfg.frames; ++t) {
      const auto& p = protos[(offset + t) % cfg.prototypes];
      for (std::size_t j = 0; j < cfg.dim; ++j) seq.frames(t, j) = static_cast<float>(p[j] + noise(rng));
    }
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<FeatureSequence> SpeakerCorpus(const SpeakerCorpusConfig& cfg) {
  if (cfg.speakers == 0 || cfg.utterances_per_speaker == 0 || cfg.min_frames == 0 ||
      cfg.max_frames < cfg.min_frames) {
    throw ConfigError("speaker corpus: invalid sizes");
  }
  if (cfg.speakers * cfg.band > cfg.dim) {
    throw ConfigError("speaker corpus: speaker bands do not fit in " + std::to_string(cfg.dim) +
                      " dimensions");
  }
  std::mt19937_64 rng(cfg.seed);
  const std::size_t k = 3;
  const std::vector<double> freq = {0.13, 0.29, 0.47};
  const std::size_t content_dims = cfg.dim - cfg.speakers * cfg.band;
  auto mix = GaussianRows(2 * k, cfg.dim, 1.0, rng);
  std::uniform_real_distribution<double> phase(0.0, 2 * M_PI);
  std::uniform_int_distribution<std::size_t> len(cfg.min_frames, cfg.max_frames);
  std::normal_distribution<double> noise(0.0, cfg.noise);
  std::vector<FeatureSequence> out;
  for (std::size_t i = 0; i < cfg.utterances_per_speaker; ++i) {
    for (std::size_t s = 0; s < cfg.speakers; ++s) {
      const std::size_t n = len(rng);
      std::vector<double> ph(k);
      for (auto& p : ph) p = phase(rng);
      FeatureSequence seq{Tensor<float>(n, cfg.dim), Id("utt", out.size()), Id("spk", s), ""};
      const std::size_t band_lo = content_dims + s * cfg.band;
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t j = 0; j < cfg.dim; ++j) {
          double v = noise(rng);
          if (j < content_dims) {
            for (std::size_t q = 0; q < k; ++q) {
              const double arg = freq[q] * static_cast<double>(t) + ph[q];
              v += cfg.content_scale * (mix[2 * q][j] * std::cos(arg) + mix[2 * q + 1][j] * std::sin(arg));
            }
          }
          if (j >= band_lo && j < band_lo + cfg.band) v += cfg.signature;
          seq.frames(t, j) = static_cast<float>(v);
        }
      }
      out.push_back(std::move(seq));
    }
  }
  return out;
}

std::vector<FeatureSequence> TranscriptionCorpus(const TranscriptionCorpusConfig& cfg) {
  if (cfg.utterances == 0 || cfg.tokens == 0 || cfg.alphabet.empty() || cfg.min_hold == 0 ||
      cfg.max_hold < cfg.min_hold || cfg.dim == 0) {
    throw ConfigError("transcription corpus: invalid sizes");
  }
  std::mt19937_64 rng(cfg.seed);
  auto protos = GaussianRows(cfg.alphabet.size(), cfg.dim, 1.0, rng);
  std::uniform_int_distribution<std::size_t> pick(0, cfg.alphabet.size() - 1);
  std::uniform_int_distribution<std::size_t> hold(cfg.min_hold, cfg.max_hold);
  std::normal_distribution<double> noise(0.0, cfg.noise);
  std::vector<FeatureSequence> out;
  for (std::size_t u = 0; u < cfg.utterances; ++u) {
    std::string text;
    std::vector<std::size_t> holds;
    std::size_t n = 0;
    for (std::size_t i = 0; i < cfg.tokens; ++i) {
      text.push_back(cfg.alphabet[pick(rng)]);
      holds.push_back(hold(rng));
      n += holds.back();
    }
    FeatureSequence item{Tensor<float>(n, cfg.dim), Id("tr", u), "spk0", text};
    std::size_t t = 0;
    for (std::size_t i = 0; i < cfg.tokens; ++i) {
      const auto& p = protos[cfg.alphabet.find(text[i])];
      for (std::size_t h = 0; h < holds[i]; ++h, ++t)
        for (std::size_t j = 0; j < cfg.dim; ++j)
          item.frames(t, j) = static_cast<float>(p[j] + noise(rng));
    }
    out.push_back(std::move(item));
  }
  return out;
}

std::vector<DeskUtterance> DeskCorpus(const DeskCorpusConfig& cfg) {
  if (!(cfg.total_seconds > 0) || cfg.speakers == 0 || cfg.alphabet.empty() || cfg.lexicon_size == 0 ||
      cfg.min_word_chars == 0 || cfg.max_word_chars < cfg.min_word_chars || cfg.min_words == 0 ||
      cfg.max_words < cfg.min_words || cfg.sample_rate < 8000) {
    throw ConfigError("desk corpus: invalid sizes");
  }
  std::mt19937_64 rng(cfg.seed);
  const double sr = cfg.sample_rate;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  struct Formants {
    double f[3];
  };
  std::vector<Formants> phones;
  for (std::size_t i = 0; i < cfg.alphabet.size(); ++i) {
    phones.push_back({{uniform(300, 900), uniform(900, 2300), uniform(2400, 3400)}});
  }
  struct Speaker {
    double f0, scale, tilt;
  };
  std::vector<Speaker> speakers;
  for (std::size_t s = 0; s < cfg.speakers; ++s) {
    speakers.push_back({uniform(90, 240), uniform(0.85, 1.15), uniform(0.6, 1.4)});
  }
  std::uniform_int_distribution<std::size_t> pick_char(0, cfg.alphabet.size() - 1);
  std::uniform_int_distribution<std::size_t> word_len(cfg.min_word_chars, cfg.max_word_chars);
  std::vector<std::string> lexicon;
  while (lexicon.size() < cfg.lexicon_size) {
    std::string w;
    for (std::size_t i = word_len(rng); i > 0; --i) w.push_back(cfg.alphabet[pick_char(rng)]);
    lexicon.push_back(w);
  }
  std::uniform_int_distribution<std::size_t> pick_word(0, lexicon.size() - 1);
  std::uniform_int_distribution<std::size_t> words(cfg.min_words, cfg.max_words);
  std::normal_distribution<double> noise(0.0, cfg.noise);

  std::vector<DeskUtterance> out;
  double total = 0;
  while (total < cfg.total_seconds) {
    const std::size_t s = out.size() % cfg.speakers;
    const Speaker& spk = speakers[s];
    std::string text;
    for (std::size_t w = words(rng); w > 0; --w) {
      if (!text.empty()) text.push_back(' ');
      text += lexicon[pick_word(rng)];
    }
    const double f0 = spk.f0 * uniform(0.95, 1.05);
    const std::size_t harmonics = static_cast<std::size_t>(std::min(4000.0, 0.45 * sr) / f0);
    std::vector<std::complex<double>> osc(harmonics), step(harmonics);
    for (std::size_t k = 0; k < harmonics; ++k) {
      osc[k] = std::polar(1.0, uniform(0, 2 * M_PI));
      step[k] = std::polar(1.0, 2 * M_PI * f0 * double(k + 1) / sr);
    }
    // Segment list: harmonic amplitudes (empty for silence) and length.
    std::vector<std::pair<std::vector<double>, std::size_t>> segments;
    auto silence = [&](double lo, double hi) { segments.push_back({{}, std::size_t(uniform(lo, hi) * sr)}); };
    silence(0.08, 0.15);
    for (char c : text) {
      if (c == ' ') {
        silence(0.06, 0.12);
        continue;
      }
      const auto& ph = phones[cfg.alphabet.find(c)];
      std::vector<double> amp(harmonics);
      for (std::size_t k = 0; k < harmonics; ++k) {
        const double hz = f0 * double(k + 1);
        double a = 0;
        for (int f = 0; f < 3; ++f) {
          const double d = (hz - spk.scale * ph.f[f]) / 110.0;
          a += std::exp(-0.5 * d * d) / (f + 1);
        }
        amp[k] = a * std::pow(double(k + 1), -spk.tilt * 0.5);
      }
      segments.push_back({amp, std::size_t(uniform(0.06, 0.12) * sr)});
    }
    silence(0.08, 0.15);

    std::size_t n = 0;
    for (const auto& seg : segments) n += seg.second;
    std::vector<double> wave(n);
    std::vector<double> level(harmonics, 0.0);
    const double smooth = std::exp(-1.0 / (0.008 * sr));  // 8 ms glide between segments
    std::size_t t = 0;
    for (const auto& [amp, len] : segments) {
      for (std::size_t i = 0; i < len; ++i, ++t) {
        double v = 0;
        for (std::size_t k = 0; k < harmonics; ++k) {
          const double target = amp.empty() ? 0.0 : amp[k];
          level[k] = smooth * level[k] + (1 - smooth) * target;
          osc[k] *= step[k];
          v += level[k] * osc[k].imag();
        }
        wave[t] = v;
      }
      for (auto& z : osc) z /= std::abs(z);
    }
    double peak = 1e-9;
    for (double v : wave) peak = std::max(peak, std::abs(v));
    DeskUtterance utt;
    utt.wave.sample_rate = cfg.sample_rate;
    utt.wave.utterance_id = Id("desk", out.size());
    utt.wave.speaker_id = Id("spk", s);
    utt.wave.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      utt.wave.samples[i] = static_cast<float>(std::clamp(0.5 * wave[i] / peak + noise(rng), -1.0, 1.0));
    }
    utt.transcript = text;
    total += double(n) / sr;
    out.push_back(std::move(utt));
  }
  return out;
}

DeskCorpusFiles WriteDeskCorpus(const std::string& dir, const DeskCorpusConfig& cfg, std::size_t probe_train,
                                std::size_t probe_eval, WavEncoding encoding) {
  namespace fs = std::filesystem;
  const auto utts = DeskCorpus(cfg);
  if (probe_eval >= utts.size() || probe_train > utts.size() - probe_eval) {
    throw ConfigError("desk corpus: " + std::to_string(utts.size()) + " utterances cannot hold " +
                      std::to_string(probe_train) + " probe training and " + std::to_string(probe_eval) +
                      " evaluation utterances");
  }
  fs::create_directories(fs::path(dir) / "wav");
  std::vector<ManifestEntry> all;
  DeskCorpusFiles files;
  for (const auto& u : utts) {
    const std::string rel = "wav/" + u.wave.utterance_id + ".wav";
    WriteWav((fs::path(dir) / rel).string(), u.wave, encoding);
    const double sec = double(u.wave.samples.size()) / u.wave.sample_rate;
    all.push_back({u.wave.utterance_id, rel, u.wave.speaker_id, u.transcript, sec});
    files.seconds += sec;
  }
  files.utterances = all.size();
  const std::size_t eval_begin = all.size() - probe_eval;
  files.pretrain_manifest = (fs::path(dir) / "pretrain.jsonl").string();
  files.train_manifest = (fs::path(dir) / "train.jsonl").string();
  files.eval_manifest = (fs::path(dir) / "eval.jsonl").string();
  WriteManifest(files.pretrain_manifest, {all.begin(), all.begin() + eval_begin});
  WriteManifest(files.train_manifest, {all.begin(), all.begin() + probe_train});
  WriteManifest(files.eval_manifest, {all.begin() + eval_begin, all.end()});
  return files;
}

}  // namespace apc
