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

#ifndef APC_SYNTHETIC_H_
#define APC_SYNTHETIC_H_

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "apc/dsp.h"
#include "apc/io.h"

namespace apc {

// Frames are a fixed random linear image of a few sinusoidal oscillators with
// per-utterance phase and amplitude, plus white noise.
struct OscillatorCorpusConfig {
  std::size_t utterances = 8;
  std::size_t frames = 100;
  std::size_t dim = 20;
  std::vector<double> frequencies = {0.15, 0.27, 0.41};  // radians per frame
  double noise = 0.05;
  std::uint64_t seed = 1;
};

std::vector<FeatureSequence> OscillatorCorpus(const OscillatorCorpusConfig& cfg);

// Each utterance cycles through a fixed set of prototype frames in a fixed
// order, starting at a random offset, with small noise.
struct PrototypeCorpusConfig {
  std::size_t utterances = 8;
  std::size_t frames = 40;
  std::size_t dim = 12;
  std::size_t prototypes = 6;
  double noise = 0.05;
  std::uint64_t seed = 1;
};

std::vector<FeatureSequence> PrototypeCorpus(const PrototypeCorpusConfig& cfg);

// Utterances built from a content stream in the lower dimensions, shared by
// all speakers, plus a weak constant signature in a band of upper dimensions
// owned by each speaker.
struct SpeakerCorpusConfig {
  std::size_t speakers = 2;
  std::size_t utterances_per_speaker = 40;
  std::size_t min_frames = 40;
  std::size_t max_frames = 60;
  std::size_t dim = 20;
  std::size_t band = 4;  // signature dimensions per speaker, at the top of the range
  double signature = 0.4;
  double content_scale = 1.0;
  double noise = 0.5;
  std::uint64_t seed = 1;
};

std::vector<FeatureSequence> SpeakerCorpus(const SpeakerCorpusConfig& cfg);

// Transcribed utterances: each character maps to a prototype frame pattern
// held for a few frames.

struct TranscriptionCorpusConfig {
  std::size_t utterances = 20;
  std::size_t tokens = 5;
  std::string alphabet = "abcdef";
  std::size_t min_hold = 4;
  std::size_t max_hold = 6;
  std::size_t dim = 12;
  double noise = 0.05;
  std::uint64_t seed = 1;
};

std::vector<FeatureSequence> TranscriptionCorpus(const TranscriptionCorpusConfig& cfg);

// Speech-like audio: each character is a vowel-like segment whose harmonics
// follow three formants, words are separated by short pauses, and speakers
// differ in pitch, formant scale and spectral tilt.
struct DeskCorpusConfig {
  double total_seconds = 3600;  // generation stops once this much audio exists
  std::size_t speakers = 8;
  std::string alphabet = "abcdefgh";
  std::size_t lexicon_size = 24;
  std::size_t min_word_chars = 2;
  std::size_t max_word_chars = 4;
  std::size_t min_words = 2;
  std::size_t max_words = 5;
  int sample_rate = 16000;
  double noise = 0.01;
  std::uint64_t seed = 1;
};

struct DeskUtterance {
  Waveform wave;  // carries utterance and speaker ids
  std::string transcript;
};

std::vector<DeskUtterance> DeskCorpus(const DeskCorpusConfig& cfg);

struct DeskCorpusFiles {
  std::string pretrain_manifest;  // every utterance outside the evaluation split
  std::string train_manifest;     // the first probe_train utterances
  std::string eval_manifest;      // the last probe_eval utterances
  std::size_t utterances = 0;
  double seconds = 0;
};

// Writes wav/<id>.wav plus the three manifests into dir.
DeskCorpusFiles WriteDeskCorpus(const std::string& dir, const DeskCorpusConfig& cfg, std::size_t probe_train,
                                std::size_t probe_eval, WavEncoding encoding);

}  // namespace apc

#endif  // APC_SYNTHETIC_H_
