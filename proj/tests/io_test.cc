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

#include <cmath>
#include <cstring>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "apc/container.h"
#include "apc/error.h"
#include "apc/io.h"
#include "grad_check.h"
#include "temp_dir.h"

namespace apc {
namespace {

using testing::ReadFileBytes;
using testing::TempDir;
using testing::WriteFileBytes;

IoErrorKind KindOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const IoError& e) {
    return e.io_kind();
  }
  ADD_FAILURE() << "expected IoError";
  return IoErrorKind::kParse;
}

TEST(Container, SmallTensorRoundTripIsBitExact) {
  TempDir dir;
  auto t = Tensor<float>::FromRows({{1.5f, -0.0f, 3e-39f}, {INFINITY, 7.0f, -2.25f}});
  std::vector<ContainerEntry> entries = {TensorEntry("x", t)};
  WriteContainer(dir.File("a.apct"), entries);
  ContainerReader r(dir.File("a.apct"));
  auto back = r.ReadTensor<float>("x");
  EXPECT_EQ(back.shape(), (Shape{2, 3}));
  EXPECT_TRUE(BitwiseEqual(t, back));
}

TEST(Container, MixedDtypesRoundTrip) {
  TempDir dir;
  std::mt19937_64 rng(1);
  auto d = testing::RandomTensor({3, 4, 2}, rng);
  std::vector<std::int64_t> ints = {-1, 0, 1LL << 62};
  std::vector<ContainerEntry> entries = {TensorEntry("double", d), TextEntry("text", "{\"a\": 1}"),
                                         TextEntry("empty", ""), Int64Entry("ints", ints)};
  WriteContainer(dir.File("m.apct"), entries);
  ContainerReader r(dir.File("m.apct"));
  EXPECT_TRUE(BitwiseEqual(d, r.ReadTensor<double>("double")));
  EXPECT_EQ(r.ReadText("text"), "{\"a\": 1}");
  EXPECT_EQ(r.ReadText("empty"), "");
  EXPECT_EQ(r.ReadInt64("ints"), ints);
  EXPECT_THROW(r.ReadTensor<float>("double"), DimensionError);
  EXPECT_EQ(KindOf([&] { r.ReadBytes("missing"); }), IoErrorKind::kNotFound);
  auto all = ReadContainer(dir.File("m.apct"));
  ASSERT_EQ(all.size(), 4u);
  EXPECT_EQ(all[0].bytes, entries[0].bytes);
}

TEST(Container, ByteLayoutOfHeader) {
  TempDir dir;
  std::vector<ContainerEntry> entries = {TensorEntry("ab", Tensor<float>(Shape{1, 2}, {1.0f, 2.0f}))};
  WriteContainer(dir.File("h.apct"), entries);
  const std::string b = ReadFileBytes(dir.File("h.apct"));
  // 13 header + (4 + 2 + 2 + 16 + 8) table + 8 payload
  ASSERT_EQ(b.size(), 13u + 32u + 8u);
  EXPECT_EQ(b.substr(0, 4), "APCT");
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[5], 1);  // entry count, little-endian
  EXPECT_EQ(b[13], 2);  // name length
  EXPECT_EQ(b.substr(17, 2), "ab");
  EXPECT_EQ(b[19], 1);  // f32
  EXPECT_EQ(b[20], 2);  // ndim
  EXPECT_EQ(static_cast<unsigned char>(b[37]), 45u);  // payload offset
  float first;
  std::memcpy(&first, b.data() + 45, 4);
  EXPECT_EQ(first, 1.0f);
}

TEST(Container, RejectsBadMagicVersionAndTruncation) {
  TempDir dir;
  std::vector<ContainerEntry> entries = {TensorEntry("x", Tensor<float>(2, 3, 1.0f)),
                                         TensorEntry("y", Tensor<float>(2, 2, 2.0f))};
  const std::string path = dir.File("c.apct");
  WriteContainer(path, entries);
  const std::string good = ReadFileBytes(path);

  std::string bad = good;
  bad[0] = 'X';
  bad.replace(5, 8, std::string(8, '\xff'));  // garbage table too: magic is checked first
  WriteFileBytes(path, bad);
  EXPECT_EQ(KindOf([&] { ContainerReader r(path); }), IoErrorKind::kBadMagic);

  bad = good;
  bad[4] = 2;
  WriteFileBytes(path, bad);
  EXPECT_EQ(KindOf([&] { ContainerReader r(path); }), IoErrorKind::kUnsupportedVersion);

  for (std::size_t cut : {2u, 9u, 20u, static_cast<unsigned>(good.size() - 1)}) {
    WriteFileBytes(path, good.substr(0, cut));
    const auto kind = KindOf([&] { ContainerReader r(path); });
    EXPECT_TRUE(kind == IoErrorKind::kCorruptFile || (cut < 4 && kind == IoErrorKind::kBadMagic))
        << "cut " << cut;
  }
  EXPECT_EQ(KindOf([&] { ContainerReader r(dir.File("none.apct")); }), IoErrorKind::kNotFound);
}

TEST(Container, RejectsOverlappingOffsets) {
  TempDir dir;
  std::vector<ContainerEntry> entries = {TensorEntry("x", Tensor<float>(1, 4, 1.0f)),
                                         TensorEntry("y", Tensor<float>(1, 4, 2.0f))};
  const std::string path = dir.File("o.apct");
  WriteContainer(path, entries);
  std::string b = ReadFileBytes(path);
  // Table: 13 + [4+1+2+16+8 = 31] per entry; the second offset sits at 13+31+23.
  const std::size_t second_offset = 13 + 31 + 4 + 1 + 2 + 16;
  std::uint64_t first_offset;
  std::memcpy(&first_offset, b.data() + 13 + 4 + 1 + 2 + 16, 8);
  std::memcpy(b.data() + second_offset, &first_offset, 8);
  WriteFileBytes(path, b);
  EXPECT_EQ(KindOf([&] { ContainerReader r(path); }), IoErrorKind::kOffsetOverlap);
}

TEST(Container, WriterRejectsDuplicateNamesAndBadPayloads) {
  TempDir dir;
  std::vector<ContainerEntry> dup = {TensorEntry("x", Tensor<float>(1, 1)), TensorEntry("x", Tensor<float>(1, 1))};
  EXPECT_EQ(KindOf([&] { WriteContainer(dir.File("d.apct"), dup); }), IoErrorKind::kDuplicateId);
  ContainerEntry bad{"b", DType::kFloat32, Shape{2}, std::vector<std::uint8_t>(7)};
  EXPECT_THROW(WriteContainer(dir.File("b.apct"), std::span(&bad, 1)), DimensionError);
}

TEST(Container, RandomAccessReadTouchesOnlyItsRange) {
  TempDir dir;
  std::vector<ContainerEntry> entries;
  for (int i = 0; i < 100; ++i) {
    entries.push_back(TensorEntry("t" + std::to_string(i), Tensor<float>(3 + i % 5, 7, float(i))));
  }
  const std::string path = dir.File("big.apct");
  WriteContainer(path, entries);
  ContainerReader r(path);
  const auto& info = r.Info("t57");
  std::uint64_t table_end = 13;
  for (const auto& e : entries) table_end += 4 + e.name.size() + 2 + 8 * e.dims.size() + 8;
  EXPECT_EQ(r.bytes_read(), table_end);
  for (const auto& [off, len] : r.read_ranges()) EXPECT_LE(off + len, table_end);
  const auto before = r.read_ranges().size();
  auto t = r.ReadTensor<float>("t57");
  EXPECT_EQ(t(0, 0), 57.0f);
  EXPECT_EQ(r.bytes_read(), table_end + info.byte_size);
  ASSERT_EQ(r.read_ranges().size(), before + 1);
  EXPECT_EQ(r.read_ranges().back(), std::make_pair(info.offset, info.byte_size));
  EXPECT_EQ(info.byte_size, 5u * 7u * 4u);
}

TEST(Wav, Pcm16ScaleHeaderAndRoundTrip) {
  TempDir dir;
  Waveform w;
  w.sample_rate = 16000;
  w.samples = {-1.0f, -0.5f, 0.0f, 0.25f, 0.999f, 0.123456f};
  WriteWav(dir.File("a.wav"), w, WavEncoding::kPcm16);
  auto back = ReadWav(dir.File("a.wav"));
  EXPECT_EQ(back.sample_rate, 16000);
  ASSERT_EQ(back.samples.size(), w.samples.size());
  EXPECT_EQ(back.samples[0], -1.0f);
  for (std::size_t i = 0; i < w.samples.size(); ++i) EXPECT_LE(std::abs(back.samples[i] - w.samples[i]), 1.0f / 32768);
  EXPECT_EQ(back.utterance_id, "a");
}

TEST(Wav, Float32RoundTripIsExact) {
  TempDir dir;
  Waveform w;
  w.sample_rate = 8000;
  std::mt19937 rng(2);
  std::uniform_real_distribution<float> u(-1, 1);
  for (int i = 0; i < 1000; ++i) w.samples.push_back(u(rng));
  WriteWav(dir.File("f.wav"), w, WavEncoding::kFloat32);
  auto back = ReadWav(dir.File("f.wav"));
  EXPECT_EQ(back.sample_rate, 8000);
  EXPECT_EQ(back.samples, w.samples);
}

std::string HeaderWith(std::uint16_t format, std::uint16_t channels, std::uint16_t bits, std::uint32_t data_bytes) {
  auto put16 = [](std::string& s, std::uint16_t v) { s.push_back(char(v & 0xff)); s.push_back(char(v >> 8)); };
  auto put32 = [](std::string& s, std::uint32_t v) { for (int i = 0; i < 4; ++i) s.push_back(char((v >> (8 * i)) & 0xff)); };
  std::string s = "RIFF";
  put32(s, 36 + data_bytes);
  s += "WAVEfmt ";
  put32(s, 16);
  put16(s, format);
  put16(s, channels);
  put32(s, 16000);
  put32(s, 16000 * channels * bits / 8);
  put16(s, channels * bits / 8);
  put16(s, bits);
  s += "data";
  put32(s, data_bytes);
  return s;
}

TEST(Wav, DistinctErrors) {
  TempDir dir;
  const std::string p = dir.File("x.wav");
  WriteFileBytes(p, HeaderWith(1, 2, 16, 8) + std::string(8, '\0'));
  EXPECT_EQ(KindOf([&] { ReadWav(p); }), IoErrorKind::kStereo);
  WriteFileBytes(p, HeaderWith(7, 1, 8, 4) + std::string(4, '\0'));  // mu-law
  EXPECT_EQ(KindOf([&] { ReadWav(p); }), IoErrorKind::kUnsupportedCodec);
  WriteFileBytes(p, HeaderWith(1, 1, 24, 6) + std::string(6, '\0'));
  EXPECT_EQ(KindOf([&] { ReadWav(p); }), IoErrorKind::kUnsupportedCodec);
  WriteFileBytes(p, HeaderWith(1, 1, 16, 100) + std::string(60, '\0'));
  EXPECT_EQ(KindOf([&] { ReadWav(p); }), IoErrorKind::kTruncated);
  WriteFileBytes(p, HeaderWith(1, 1, 16, 100).substr(0, 30));
  EXPECT_EQ(KindOf([&] { ReadWav(p); }), IoErrorKind::kTruncated);
  WriteFileBytes(p, "not a wave file at all");
  EXPECT_EQ(KindOf([&] { ReadWav(p); }), IoErrorKind::kParse);
  EXPECT_EQ(KindOf([&] { ReadWav(dir.File("missing.wav")); }), IoErrorKind::kNotFound);
}

TEST(Manifest, EmptyFileAndOrder) {
  TempDir dir;
  WriteFileBytes(dir.File("empty.jsonl"), "");
  EXPECT_TRUE(ReadManifest(dir.File("empty.jsonl")).empty());
  for (auto n : {"a.wav", "b.wav", "c.wav"}) WriteFileBytes(dir.File(n), "");
  WriteFileBytes(dir.File("m.jsonl"),
                 "{\"utterance_id\":\"u3\",\"path\":\"c.wav\",\"speaker_id\":\"s1\"}\n"
                 "\n"
                 "{\"utterance_id\":\"u1\",\"path\":\"a.wav\",\"speaker_id\":\"s2\",\"transcript\":\"hi\"}\n"
                 "{\"utterance_id\":\"u2\",\"path\":\"b.wav\",\"speaker_id\":\"s1\",\"duration\":1.5}\n");
  auto m = ReadManifest(dir.File("m.jsonl"));
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m[0].utterance_id, "u3");
  EXPECT_EQ(m[1].utterance_id, "u1");
  EXPECT_EQ(m[2].utterance_id, "u2");
  EXPECT_EQ(m[1].transcript.value(), "hi");
  EXPECT_EQ(m[2].duration.value(), 1.5);
  EXPECT_EQ(m[0].path, dir.File("c.wav"));
}

TEST(Manifest, LineNumberedErrors) {
  TempDir dir;
  WriteFileBytes(dir.File("a.wav"), "");
  auto expect = [&](const std::string& text, IoErrorKind kind, const std::string& needle) {
    WriteFileBytes(dir.File("bad.jsonl"), text);
    try {
      ReadManifest(dir.File("bad.jsonl"));
      ADD_FAILURE() << "no error for " << text;
    } catch (const IoError& e) {
      EXPECT_EQ(e.io_kind(), kind);
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  const std::string ok = "{\"utterance_id\":\"u1\",\"path\":\"a.wav\",\"speaker_id\":\"s\"}\n";
  expect(ok + "{\"utterance_id\":\"u2\",\"path\":\"a.wav\"}\n", IoErrorKind::kParse, ":2: missing field speaker_id");
  expect(ok + ok, IoErrorKind::kDuplicateId, "'u1'");
  expect(ok + "{not json\n", IoErrorKind::kParse, ":2: malformed JSON");
  expect("{\"utterance_id\":\"u\",\"path\":\"gone.wav\",\"speaker_id\":\"s\"}\n", IoErrorKind::kNotFound, "gone.wav");
}

TEST(FeatureCache, RoundTripAndPipeline) {
  TempDir dir;
  std::vector<ManifestEntry> manifest;
  std::mt19937 rng(3);
  std::normal_distribution<float> g(0, 0.1f);
  for (int i = 0; i < 4; ++i) {
    Waveform w;
    for (int s = 0; s < 8000; ++s) w.samples.push_back(0.3f * std::sin(0.05f * s * (i + 1)) + g(rng));
    const std::string name = "u" + std::to_string(i) + ".wav";
    WriteWav(dir.File(name), w, WavEncoding::kPcm16);
    manifest.push_back({"u" + std::to_string(i), name, i < 2 ? "a" : "b", "text" + std::to_string(i), 0.5});
  }
  WriteManifest(dir.File("m.jsonl"), manifest);
  auto features = ComputeFeatures(ReadManifest(dir.File("m.jsonl")), SpectrogramConfig{});
  ASSERT_EQ(features.size(), 4u);
  EXPECT_EQ(features[0].frames.shape(), (Shape{48, 80}));
  EXPECT_EQ(features[3].speaker_id, "b");
  EXPECT_EQ(features[2].transcript, "text2");
  WriteFeatureCache(dir.File("f.apct"), features);
  auto back = ReadFeatureCache(dir.File("f.apct"));
  ASSERT_EQ(back.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(back[i].utterance_id, features[i].utterance_id);
    EXPECT_EQ(back[i].speaker_id, features[i].speaker_id);
    EXPECT_EQ(back[i].transcript, features[i].transcript);
    EXPECT_TRUE(BitwiseEqual(back[i].frames, features[i].frames));
  }
}

}  // namespace
}  // namespace apc
