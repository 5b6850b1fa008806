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

#include "apc/dsp.h"

#include <algorithm>
#include <cmath>

#include "apc/error.h"

namespace apc {

std::size_t SpectrogramConfig::WindowLength(int sample_rate) const {
  return static_cast<std::size_t>(std::lround(sample_rate * window_ms / 1000.0));
}

std::size_t SpectrogramConfig::HopLength(int sample_rate) const {
  return static_cast<std::size_t>(std::lround(sample_rate * hop_ms / 1000.0));
}

double SpectrogramConfig::UpperFrequency(int sample_rate) const {
  return fmax > 0.0 ? fmax : sample_rate / 2.0;
}

void SpectrogramConfig::Validate(int sample_rate) const {
  if (sample_rate <= 0) throw ConfigError("sample rate must be positive");
  const std::size_t win = WindowLength(sample_rate);
  if (win == 0 || HopLength(sample_rate) == 0) {
    throw ConfigError("window and hop must span at least one sample");
  }
  if (fft_size < win) {
    throw ConfigError("fft_size " + std::to_string(fft_size) + " is shorter than the window (" +
                      std::to_string(win) + " samples)");
  }
  if (n_mels < 1) throw ConfigError("n_mels must be at least 1");
  const double hi = UpperFrequency(sample_rate);
  if (fmin < 0.0 || fmin >= hi) throw ConfigError("fmin must satisfy 0 <= fmin < fmax");
  if (hi > sample_rate / 2.0) throw ConfigError("fmax exceeds the Nyquist frequency");
}

void Fft(std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  if (n <= 1) return;
  if ((n & (n - 1)) != 0) {
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
      std::complex<double> acc = 0;
      for (std::size_t t = 0; t < n; ++t) {
        acc += x[t] * std::polar(1.0, -2.0 * M_PI * double(k * t % n) / double(n));
      }
      out[k] = acc;
    }
    x = std::move(out);
    return;
  }
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / double(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const auto u = x[i + j];
        const auto v = x[i + j + len / 2] * w;
        x[i + j] = u + v;
        x[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

ComplexSpectrogram Stft(const Waveform& wave, const SpectrogramConfig& cfg) {
  cfg.Validate(wave.sample_rate);
  const std::size_t win = cfg.WindowLength(wave.sample_rate);
  const std::size_t hop = cfg.HopLength(wave.sample_rate);
  const std::size_t len = wave.samples.size();
  if (len < win) {
    throw InputError("waveform '" + wave.utterance_id + "' has " + std::to_string(len) +
                     " samples, shorter than one " + std::to_string(win) + "-sample window");
  }
  // Periodic Hann window.
  std::vector<double> window(win);
  for (std::size_t i = 0; i < win; ++i) window[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / win);

  ComplexSpectrogram spec;
  spec.num_frames = 1 + (len - win) / hop;
  spec.num_bins = cfg.fft_size / 2 + 1;
  spec.bins.resize(spec.num_frames * spec.num_bins);
  std::vector<std::complex<double>> buf(cfg.fft_size);
  for (std::size_t t = 0; t < spec.num_frames; ++t) {
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    const float* frame = wave.samples.data() + t * hop;
    for (std::size_t i = 0; i < win; ++i) buf[i] = frame[i] * window[i];
    Fft(buf);
    std::copy(buf.begin(), buf.begin() + spec.num_bins, spec.bins.begin() + t * spec.num_bins);
  }
  return spec;
}

std::vector<double> MelCenterFrequencies(const SpectrogramConfig& cfg, int sample_rate) {
  cfg.Validate(sample_rate);
  const double lo = HzToMel(cfg.fmin);
  const double hi = HzToMel(cfg.UpperFrequency(sample_rate));
  const double step = (hi - lo) / double(cfg.n_mels + 1);
  std::vector<double> centers(cfg.n_mels);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) centers[m] = MelToHz(lo + step * double(m + 1));
  return centers;
}

Tensor<double> MelFilterbank(const SpectrogramConfig& cfg, int sample_rate) {
  cfg.Validate(sample_rate);
  const std::size_t bins = cfg.fft_size / 2 + 1;
  const double lo = HzToMel(cfg.fmin);
  const double hi = HzToMel(cfg.UpperFrequency(sample_rate));
  const double step = (hi - lo) / double(cfg.n_mels + 1);
  Tensor<double> fb(cfg.n_mels, bins);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double left = lo + step * double(m);
    const double center = left + step;
    const double right = center + step;
    double peak = 0.0;
    std::size_t peak_bin = 0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double mel = HzToMel(double(k) * sample_rate / double(cfg.fft_size));
      double w = 0.0;
      if (mel > left && mel < right) {
        w = mel <= center ? (mel - left) / (center - left) : (right - mel) / (right - center);
      }
      fb(m, k) = w;
      if (w > peak) {
        peak = w;
        peak_bin = k;
      }
    }
    if (peak <= 0.0) {
      throw ConfigError("n_mels=" + std::to_string(cfg.n_mels) + " is too large for fft_size=" +
                        std::to_string(cfg.fft_size) + ": filter " + std::to_string(m) +
                        " covers no FFT bin");
    }
    for (std::size_t k = 0; k < bins; ++k) fb(m, k) /= peak;
    fb(m, peak_bin) = 1.0;
  }
  return fb;
}

FeatureSequence LogMel(const Waveform& wave, const SpectrogramConfig& cfg) {
  const ComplexSpectrogram spec = Stft(wave, cfg);
  const Tensor<double> fb = MelFilterbank(cfg, wave.sample_rate);
  FeatureSequence out;
  out.utterance_id = wave.utterance_id;
  out.speaker_id = wave.speaker_id;
  out.frames = Tensor<float>(spec.num_frames, cfg.n_mels);
  std::vector<double> power(spec.num_bins);
  for (std::size_t t = 0; t < spec.num_frames; ++t) {
    for (std::size_t k = 0; k < spec.num_bins; ++k) power[k] = std::norm(spec.at(t, k));
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      double e = 0.0;
      const auto row = fb.row(m);
      for (std::size_t k = 0; k < spec.num_bins; ++k) e += row[k] * power[k];
      out.frames(t, m) = static_cast<float>(std::log(e + kLogMelFloor));
    }
  }
  return out;
}

namespace {

// Coefficients whose variance falls below this are treated as constant.
constexpr double kDegenerateVariance = 1e-10;

CmvnStats::Entry StatsFor(const std::vector<const FeatureSequence*>& group) {
  const std::size_t d = group.front()->dim();
  std::vector<double> sum(d, 0.0), sq(d, 0.0);
  std::size_t count = 0;
  for (const auto* f : group) {
    if (f->dim() != d) {
      throw InputError("utterance '" + f->utterance_id + "' has dim " + std::to_string(f->dim()) +
                       ", expected " + std::to_string(d));
    }
    for (std::size_t t = 0; t < f->num_frames(); ++t) {
      for (std::size_t j = 0; j < d; ++j) sum[j] += f->frames(t, j);
    }
    count += f->num_frames();
  }
  CmvnStats::Entry e;
  e.mean.resize(d);
  e.stddev.resize(d);
  for (std::size_t j = 0; j < d; ++j) e.mean[j] = sum[j] / double(count);
  for (const auto* f : group) {
    for (std::size_t t = 0; t < f->num_frames(); ++t) {
      for (std::size_t j = 0; j < d; ++j) {
        const double c = f->frames(t, j) - e.mean[j];
        sq[j] += c * c;
      }
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    const double var = sq[j] / double(count);
    e.stddev[j] = var < kDegenerateVariance ? 0.0 : std::sqrt(var);
  }
  return e;
}

std::map<std::string, std::vector<const FeatureSequence*>> GroupBySpeaker(
    const std::vector<FeatureSequence>& features) {
  if (features.empty()) throw InputError("speaker CMVN needs at least one utterance");
  std::map<std::string, std::vector<const FeatureSequence*>> groups;
  for (const auto& f : features) {
    if (f.frames.empty()) throw InputError("utterance '" + f.utterance_id + "' has no frames");
    groups[f.speaker_id].push_back(&f);
  }
  return groups;
}

}  // namespace

CmvnStats ComputeSpeakerStats(const std::vector<FeatureSequence>& features) {
  CmvnStats stats;
  for (const auto& [speaker, group] : GroupBySpeaker(features)) {
    stats.speakers[speaker] = StatsFor(group);
  }
  return stats;
}

std::vector<FeatureSequence> ApplySpeakerStats(const std::vector<FeatureSequence>& features,
                                               const CmvnStats& stats) {
  auto groups = GroupBySpeaker(features);
  std::map<std::string, CmvnStats::Entry> own;
  std::vector<FeatureSequence> out;
  out.reserve(features.size());
  for (const auto& f : features) {
    const CmvnStats::Entry* e = nullptr;
    if (auto it = stats.speakers.find(f.speaker_id); it != stats.speakers.end()) {
      e = &it->second;
    } else {
      auto [pos, inserted] = own.try_emplace(f.speaker_id);
      if (inserted) pos->second = StatsFor(groups.at(f.speaker_id));
      e = &pos->second;
    }
    if (e->mean.size() != f.dim()) {
      throw InputError("CMVN stats for speaker '" + f.speaker_id + "' have dim " +
                       std::to_string(e->mean.size()) + ", features have " +
                       std::to_string(f.dim()));
    }
    FeatureSequence g = f;
    for (std::size_t t = 0; t < g.num_frames(); ++t) {
      for (std::size_t j = 0; j < g.dim(); ++j) {
        const double sd = e->stddev[j];
        g.frames(t, j) = sd == 0.0 ? 0.0f : static_cast<float>((f.frames(t, j) - e->mean[j]) / sd);
      }
    }
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<FeatureSequence> SpeakerCmvn(const std::vector<FeatureSequence>& features) {
  return ApplySpeakerStats(features, ComputeSpeakerStats(features));
}

}  // namespace apc
