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

#ifndef APC_IO_H_
#define APC_IO_H_

#include <optional>
#include <string>
#include <vector>

#include "apc/dsp.h"

namespace apc {

struct ManifestEntry {
  std::string utterance_id;
  std::string path;  // resolved against the manifest's directory
  std::string speaker_id;
  std::optional<std::string> transcript;
  std::optional<double> duration;  // seconds
};

// JSON-lines, one object per non-blank line with keys utterance_id, path,
// speaker_id and optionally transcript and duration.
std::vector<ManifestEntry> ReadManifest(const std::string& path);
// Paths are written as given.
void WriteManifest(const std::string& path, const std::vector<ManifestEntry>& entries);

enum class WavEncoding { kPcm16, kFloat32 };

// Mono PCM16 or IEEE float32 RIFF/WAVE. PCM16 samples are divided by 32768.
Waveform ReadWav(const std::string& path);
void WriteWav(const std::string& path, const Waveform& wave, WavEncoding encoding);

// Feature caches hold one f32 [N x d] entry per utterance plus an index entry
// that records speaker ids and transcripts in utterance order.
inline constexpr char kFeatureIndexEntry[] = "__index__";

void WriteFeatureCache(const std::string& path, const std::vector<FeatureSequence>& features);
std::vector<FeatureSequence> ReadFeatureCache(const std::string& path);

// Manifest -> log-Mel features with per-speaker CMVN.
std::vector<FeatureSequence> ComputeFeatures(const std::vector<ManifestEntry>& manifest,
                                             const SpectrogramConfig& cfg, bool cmvn = true);

}  // namespace apc

#endif  // APC_IO_H_
