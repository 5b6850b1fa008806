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

#include "apc/io.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "apc/container.h"
#include "apc/error.h"
#include "json.hpp"

namespace apc {
namespace fs = std::filesystem;

namespace {

IoError ManifestError(const std::string& path, std::size_t line, const std::string& what) {
  return IoError(IoErrorKind::kParse, "manifest " + path + ":" + std::to_string(line) + ": " + what);
}

std::string RequiredString(const nlohmann::json& j, const char* key, const std::string& path,
                           std::size_t line) {
  if (!j.contains(key)) throw ManifestError(path, line, std::string("missing field ") + key);
  if (!j.at(key).is_string() || j.at(key).get<std::string>().empty()) {
    throw ManifestError(path, line, std::string("field ") + key + " must be a non-empty string");
  }
  return j.at(key).get<std::string>();
}

std::uint16_t U16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t U32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}
void Put16(std::string& s, std::uint16_t v) {
  s.push_back(char(v & 0xff));
  s.push_back(char(v >> 8));
}
void Put32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(char((v >> (8 * i)) & 0xff));
}

}  // namespace

std::vector<ManifestEntry> ReadManifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(IoErrorKind::kNotFound, "manifest: cannot open " + path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<ManifestEntry> out;
  std::set<std::string> ids;
  std::string text;
  for (std::size_t line = 1; std::getline(in, text); ++line) {
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ManifestError(path, line, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ManifestError(path, line, "expected a JSON object");
    ManifestEntry e;
    e.utterance_id = RequiredString(j, "utterance_id", path, line);
    e.path = RequiredString(j, "path", path, line);
    e.speaker_id = RequiredString(j, "speaker_id", path, line);
    if (j.contains("transcript")) {
      if (!j["transcript"].is_string()) throw ManifestError(path, line, "transcript must be a string");
      e.transcript = j["transcript"].get<std::string>();
    }
    if (j.contains("duration")) {
      if (!j["duration"].is_number() || j["duration"].get<double>() < 0) {
        throw ManifestError(path, line, "duration must be a non-negative number");
      }
      e.duration = j["duration"].get<double>();
    }
    if (!ids.insert(e.utterance_id).second) {
      throw IoError(IoErrorKind::kDuplicateId, "manifest " + path + ":" + std::to_string(line) +
                                                   ": duplicate utterance_id '" + e.utterance_id + "'");
    }
    fs::path audio(e.path);
    if (audio.is_relative()) audio = base / audio;
    if (!fs::exists(audio)) {
      throw IoError(IoErrorKind::kNotFound, "manifest " + path + ":" + std::to_string(line) +
                                                ": audio file " + audio.string() + " does not exist");
    }
    e.path = audio.string();
    out.push_back(std::move(e));
  }
  return out;
}

void WriteManifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(IoErrorKind::kWriteFailed, "manifest: cannot open " + path);
  for (const auto& e : entries) {
    nlohmann::json j = {{"utterance_id", e.utterance_id}, {"path", e.path}, {"speaker_id", e.speaker_id}};
    if (e.transcript) j["transcript"] = *e.transcript;
    if (e.duration) j["duration"] = *e.duration;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError(IoErrorKind::kWriteFailed, "manifest: write failed for " + path);
}

Waveform ReadWav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrorKind::kNotFound, "wav: cannot open " + path);
  std::vector<std::uint8_t> b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto fail = [&](IoErrorKind k, const std::string& what) { return IoError(k, "wav " + path + ": " + what); };
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
    throw fail(IoErrorKind::kParse, "not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= b.size()) {
    const std::uint32_t size = U32(b.data() + pos + 4);
    const std::uint8_t* body = b.data() + pos + 8;
    const std::size_t avail = b.size() - pos - 8;
    if (std::memcmp(b.data() + pos, "fmt ", 4) == 0) {
      if (size < 16 || avail < 16) throw fail(IoErrorKind::kTruncated, "fmt chunk is truncated");
      format = U16(body);
      channels = U16(body + 2);
      rate = U32(body + 4);
      bits = U16(body + 14);
      if (format == 0xFFFE) {
        if (size < 40 || avail < 40) throw fail(IoErrorKind::kTruncated, "extensible fmt chunk is truncated");
        format = U16(body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(b.data() + pos, "data", 4) == 0) {
      if (!have_fmt) throw fail(IoErrorKind::kParse, "data chunk precedes fmt chunk");
      if (channels != 1) {
        throw fail(IoErrorKind::kStereo, std::to_string(channels) + " channels; only mono is supported");
      }
      const bool pcm16 = format == 1 && bits == 16;
      const bool f32 = format == 3 && bits == 32;
      if (!pcm16 && !f32) {
        throw fail(IoErrorKind::kUnsupportedCodec, "format " + std::to_string(format) + " with " +
                                                       std::to_string(bits) + " bits is not PCM16 or float32");
      }
      const std::size_t width = bits / 8;
      if (size > avail || size % width != 0) {
        throw fail(IoErrorKind::kTruncated, "data chunk declares " + std::to_string(size) + " bytes, " +
                                                std::to_string(avail) + " present");
      }
      if (rate == 0) throw fail(IoErrorKind::kParse, "sample rate is zero");
      Waveform w;
      w.sample_rate = static_cast<int>(rate);
      w.samples.resize(size / width);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        if (pcm16) {
          w.samples[i] = static_cast<float>(static_cast<std::int16_t>(U16(body + 2 * i))) / 32768.0f;
        } else {
          std::memcpy(&w.samples[i], body + 4 * i, 4);
        }
      }
      w.utterance_id = fs::path(path).stem().string();
      return w;
    }
    pos += 8 + static_cast<std::size_t>(size) + (size & 1);
  }
  throw fail(have_fmt ? IoErrorKind::kTruncated : IoErrorKind::kParse,
             have_fmt ? "no data chunk (truncated?)" : "no fmt chunk");
}

void WriteWav(const std::string& path, const Waveform& wave, WavEncoding encoding) {
  if (wave.sample_rate <= 0) throw InputError("wav: sample rate must be positive");
  const bool pcm16 = encoding == WavEncoding::kPcm16;
  const std::uint16_t bits = pcm16 ? 16 : 32;
  const std::uint32_t data_size = static_cast<std::uint32_t>(wave.samples.size() * bits / 8);
  std::string s = "RIFF";
  Put32(s, 36 + data_size);
  s += "WAVEfmt ";
  Put32(s, 16);
  Put16(s, pcm16 ? 1 : 3);
  Put16(s, 1);
  Put32(s, static_cast<std::uint32_t>(wave.sample_rate));
  Put32(s, static_cast<std::uint32_t>(wave.sample_rate) * bits / 8);
  Put16(s, bits / 8);
  Put16(s, bits);
  s += "data";
  Put32(s, data_size);
  for (float x : wave.samples) {
    if (pcm16) {
      const double q = std::clamp(std::round(static_cast<double>(x) * 32768.0), -32768.0, 32767.0);
      Put16(s, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    } else {
      std::uint32_t u;
      std::memcpy(&u, &x, 4);
      Put32(s, u);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoErrorKind::kWriteFailed, "wav: cannot open " + path);
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!out) throw IoError(IoErrorKind::kWriteFailed, "wav: write failed for " + path);
}

void WriteFeatureCache(const std::string& path, const std::vector<FeatureSequence>& features) {
  std::vector<ContainerEntry> entries;
  nlohmann::json index = nlohmann::json::array();
  for (const auto& f : features) {
    if (f.utterance_id.rfind("__", 0) == 0) {
      throw InputError("feature cache: utterance id '" + f.utterance_id + "' uses the reserved prefix __");
    }
    entries.push_back(TensorEntry(f.utterance_id, f.frames));
    index.push_back({{"utterance_id", f.utterance_id}, {"speaker_id", f.speaker_id}, {"transcript", f.transcript}});
  }
  entries.push_back(TextEntry(kFeatureIndexEntry, index.dump()));
  WriteContainer(path, entries);
}

std::vector<FeatureSequence> ReadFeatureCache(const std::string& path) {
  ContainerReader reader(path);
  if (!reader.Contains(kFeatureIndexEntry)) {
    throw IoError(IoErrorKind::kCorruptFile, "feature cache " + path + ": missing index entry");
  }
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(reader.ReadText(kFeatureIndexEntry));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoErrorKind::kCorruptFile, "feature cache " + path + ": bad index: " + e.what());
  }
  std::vector<FeatureSequence> out;
  for (const auto& item : index) {
    FeatureSequence f;
    f.utterance_id = item.at("utterance_id").get<std::string>();
    f.speaker_id = item.at("speaker_id").get<std::string>();
    f.transcript = item.value("transcript", "");
    f.frames = reader.ReadTensor<float>(f.utterance_id);
    if (f.frames.ndim() != 2) {
      throw IoError(IoErrorKind::kCorruptFile, "feature cache " + path + ": entry '" + f.utterance_id +
                                                   "' is not a matrix");
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<FeatureSequence> ComputeFeatures(const std::vector<ManifestEntry>& manifest,
                                             const SpectrogramConfig& cfg, bool cmvn) {
  std::vector<FeatureSequence> out;
  out.reserve(manifest.size());
  for (const auto& e : manifest) {
    Waveform w = ReadWav(e.path);
    w.utterance_id = e.utterance_id;
    w.speaker_id = e.speaker_id;
    FeatureSequence f = LogMel(w, cfg);
    f.transcript = e.transcript.value_or("");
    out.push_back(std::move(f));
  }
  return cmvn && !out.empty() ? SpeakerCmvn(out) : out;
}

}  // namespace apc
