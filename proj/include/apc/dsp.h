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

#ifndef APC_DSP_H_
#define APC_DSP_H_

#include <complex>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "apc/tensor.h"

namespace apc {

struct Waveform {
  std::vector<float> samples;  // in [-1, 1]
  int sample_rate = 16000;
  std::string utterance_id;
  std::string speaker_id;
};

struct SpectrogramConfig {
  double window_ms = 25.0;
  double hop_ms = 10.0;
  std::size_t fft_size = 512;
  std::size_t n_mels = 80;
  double fmin = 0.0;
  double fmax = 0.0;  // <= 0 means sample_rate / 2

  std::size_t WindowLength(int sample_rate) const;
  std::size_t HopLength(int sample_rate) const;
  double UpperFrequency(int sample_rate) const;
  // Throws ConfigError when the invariants do not hold for this rate.
  void Validate(int sample_rate) const;
};

// One utterance as an N x d matrix of frames.
struct FeatureSequence {
  Tensor<float> frames;
  std::string utterance_id;
  std::string speaker_id;
  std::string transcript;  // empty when the utterance has none

  std::size_t num_frames() const { return frames.rows(); }
  std::size_t dim() const { return frames.cols(); }
};

struct ComplexSpectrogram {
  std::size_t num_frames = 0;
  std::size_t num_bins = 0;  // fft_size / 2 + 1
  std::vector<std::complex<double>> bins;  // row-major [frame][bin]

  const std::complex<double>& at(std::size_t frame, std::size_t bin) const {
    return bins[frame * num_bins + bin];
  }
};

// In-place forward DFT. Radix-2 for power-of-two sizes, direct O(n^2)
// evaluation otherwise.
void Fft(std::vector<std::complex<double>>& x);

double HzToMel(double hz);
double MelToHz(double mel);

ComplexSpectrogram Stft(const Waveform& wave, const SpectrogramConfig& cfg);

// n_mels x (fft_size/2 + 1) triangular filters on the mel scale, each row
// scaled so its largest weight is exactly 1.
Tensor<double> MelFilterbank(const SpectrogramConfig& cfg, int sample_rate);
// Center frequency in Hz of every filter, ascending.
std::vector<double> MelCenterFrequencies(const SpectrogramConfig& cfg, int sample_rate);

inline constexpr double kLogMelFloor = 1e-10;

// log(filterbank * |stft|^2 + floor); N x n_mels.
FeatureSequence LogMel(const Waveform& wave, const SpectrogramConfig& cfg);

// Per-speaker, per-coefficient mean and standard deviation.
struct CmvnStats {
  struct Entry {
    std::vector<double> mean;
    std::vector<double> stddev;  // 0 marks a degenerate coefficient
  };
  std::map<std::string, Entry> speakers;
};

CmvnStats ComputeSpeakerStats(const std::vector<FeatureSequence>& features);
// Speakers missing from `stats` are normalized with their own statistics.
std::vector<FeatureSequence> ApplySpeakerStats(const std::vector<FeatureSequence>& features,
                                               const CmvnStats& stats);
// Zero mean / unit variance per speaker over all of that speaker's frames.
// Zero-variance coefficients map to 0.
std::vector<FeatureSequence> SpeakerCmvn(const std::vector<FeatureSequence>& features);

}  // namespace apc

#endif  // APC_DSP_H_
