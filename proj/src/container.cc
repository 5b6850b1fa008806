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

#include "apc/container.h"

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <set>

#include "apc/error.h"

namespace apc {

static_assert(std::endian::native == std::endian::little,
              "payloads are copied verbatim and require a little-endian host");

namespace {

constexpr std::uint64_t kHeaderSize = 4 + 1 + 8;
constexpr std::size_t kMaxDims = 8;

template <typename U>
void PutLe(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename U>
U GetLe(const std::uint8_t* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

bool KnownDType(std::uint8_t code) { return code >= 1 && code <= 4; }

template <typename T>
ContainerEntry FromTensor(std::string name, const Tensor<T>& t, DType dtype) {
  ContainerEntry e{std::move(name), dtype, t.shape(), std::vector<std::uint8_t>(t.size() * sizeof(T))};
  std::memcpy(e.bytes.data(), t.data(), e.bytes.size());
  return e;
}

IoError Corrupt(const std::string& path, const std::string& what) {
  return IoError(IoErrorKind::kCorruptFile, "container " + path + ": " + what);
}

}  // namespace

const char* DTypeName(DType dtype) {
  switch (dtype) {
    case DType::kFloat32: return "f32";
    case DType::kFloat64: return "f64";
    case DType::kUInt8: return "u8";
    case DType::kInt64: return "i64";
  }
  return "?";
}

std::size_t DTypeSize(DType dtype) {
  switch (dtype) {
    case DType::kFloat32: return 4;
    case DType::kFloat64: return 8;
    case DType::kUInt8: return 1;
    case DType::kInt64: return 8;
  }
  return 0;
}

ContainerEntry TensorEntry(std::string name, const Tensor<float>& t) {
  return FromTensor(std::move(name), t, DType::kFloat32);
}

ContainerEntry TensorEntry(std::string name, const Tensor<double>& t) {
  return FromTensor(std::move(name), t, DType::kFloat64);
}

ContainerEntry TextEntry(std::string name, const std::string& text) {
  return {std::move(name), DType::kUInt8, Shape{text.size()},
          std::vector<std::uint8_t>(text.begin(), text.end())};
}

ContainerEntry Int64Entry(std::string name, std::span<const std::int64_t> values) {
  ContainerEntry e{std::move(name), DType::kInt64, Shape{values.size()},
                   std::vector<std::uint8_t>(values.size() * 8)};
  std::memcpy(e.bytes.data(), values.data(), e.bytes.size());
  return e;
}

void WriteContainer(const std::string& path, std::span<const ContainerEntry> entries) {
  std::set<std::string> names;
  std::uint64_t table = 0;
  for (const auto& e : entries) {
    if (!names.insert(e.name).second) {
      throw IoError(IoErrorKind::kDuplicateId, "container: duplicate entry name '" + e.name + "'");
    }
    if (e.dims.empty() || e.dims.size() > kMaxDims) {
      throw DimensionError("container: entry '" + e.name + "' needs 1.." +
                           std::to_string(kMaxDims) + " dims");
    }
    if (ShapeSize(e.dims) * DTypeSize(e.dtype) != e.bytes.size()) {
      throw DimensionError("container: entry '" + e.name + "' payload does not match " +
                           ShapeString(e.dims) + " " + DTypeName(e.dtype));
    }
    table += 4 + e.name.size() + 2 + 8 * e.dims.size() + 8;
  }
  std::vector<std::uint8_t> head(kContainerMagic, kContainerMagic + 4);
  head.push_back(kContainerVersion);
  PutLe<std::uint64_t>(head, entries.size());
  std::uint64_t offset = kHeaderSize + table;
  for (const auto& e : entries) {
    PutLe<std::uint32_t>(head, static_cast<std::uint32_t>(e.name.size()));
    head.insert(head.end(), e.name.begin(), e.name.end());
    head.push_back(static_cast<std::uint8_t>(e.dtype));
    head.push_back(static_cast<std::uint8_t>(e.dims.size()));
    for (auto d : e.dims) PutLe<std::uint64_t>(head, d);
    PutLe<std::uint64_t>(head, offset);
    offset += e.bytes.size();
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(IoErrorKind::kWriteFailed, "container: cannot open " + tmp);
    out.write(reinterpret_cast<const char*>(head.data()), static_cast<std::streamsize>(head.size()));
    for (const auto& e : entries) {
      out.write(reinterpret_cast<const char*>(e.bytes.data()),
                static_cast<std::streamsize>(e.bytes.size()));
    }
    if (!out) throw IoError(IoErrorKind::kWriteFailed, "container: write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(IoErrorKind::kWriteFailed, "container: cannot rename to " + path);
}

ContainerReader::ContainerReader(const std::string& path) : path_(path) {
  in_.open(path, std::ios::binary);
  if (!in_) throw IoError(IoErrorKind::kNotFound, "container: cannot open " + path);
  in_.seekg(0, std::ios::end);
  file_size_ = static_cast<std::uint64_t>(in_.tellg());

  std::uint8_t head[kHeaderSize] = {};
  const std::uint64_t got = std::min<std::uint64_t>(file_size_, kHeaderSize);
  ReadAt(0, head, got);
  if (std::memcmp(head, kContainerMagic, std::min<std::uint64_t>(got, 4)) != 0 || got < 4) {
    throw IoError(IoErrorKind::kBadMagic, "container " + path + ": bad magic");
  }
  if (got < 5) throw Corrupt(path, "truncated header");
  if (head[4] != kContainerVersion) {
    throw IoError(IoErrorKind::kUnsupportedVersion, "container " + path + ": version " +
                                                        std::to_string(head[4]) + " unsupported (expected " +
                                                        std::to_string(kContainerVersion) + ")");
  }
  if (got < kHeaderSize) throw Corrupt(path, "truncated header");
  const std::uint64_t count = GetLe<std::uint64_t>(head + 5);
  std::uint64_t pos = kHeaderSize;
  if (count > (file_size_ - pos) / 22) throw Corrupt(path, "entry count exceeds file size");

  auto take = [&](std::size_t n) {
    if (n > file_size_ - pos) throw Corrupt(path, "truncated entry table");
    std::vector<std::uint8_t> buf(n);
    ReadAt(pos, buf.data(), n);
    pos += n;
    return buf;
  };
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = GetLe<std::uint32_t>(take(4).data());
    auto name_bytes = take(len);
    const auto meta = take(2);
    if (!KnownDType(meta[0])) {
      throw Corrupt(path, "entry " + std::to_string(i) + " has unknown dtype " + std::to_string(meta[0]));
    }
    if (meta[1] == 0 || meta[1] > kMaxDims) throw Corrupt(path, "entry " + std::to_string(i) + " has bad ndim");
    ContainerEntryInfo info{std::string(name_bytes.begin(), name_bytes.end()),
                            static_cast<DType>(meta[0]), {}, 0, DTypeSize(static_cast<DType>(meta[0]))};
    const auto dims = take(8 * meta[1]);
    for (std::size_t k = 0; k < meta[1]; ++k) {
      const auto d = GetLe<std::uint64_t>(dims.data() + 8 * k);
      if (d != 0 && info.byte_size > file_size_ / d) throw Corrupt(path, "entry '" + info.name + "' is too large");
      info.dims.push_back(d);
      info.byte_size *= d;
    }
    info.offset = GetLe<std::uint64_t>(take(8).data());
    if (!index_.emplace(info.name, entries_.size()).second) {
      throw Corrupt(path, "duplicate entry name '" + info.name + "'");
    }
    entries_.push_back(std::move(info));
  }
  for (const auto& e : entries_) {
    if (e.offset < pos || e.offset > file_size_ || e.byte_size > file_size_ - e.offset) {
      throw Corrupt(path, "payload of '" + e.name + "' lies outside the file (truncated?)");
    }
  }
  std::vector<const ContainerEntryInfo*> sorted;
  for (const auto& e : entries_)
    if (e.byte_size > 0) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->offset < b->offset; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i - 1]->offset + sorted[i - 1]->byte_size > sorted[i]->offset) {
      throw IoError(IoErrorKind::kOffsetOverlap, "container " + path + ": payloads of '" +
                                                     sorted[i - 1]->name + "' and '" + sorted[i]->name +
                                                     "' overlap");
    }
  }
}

void ContainerReader::ReadAt(std::uint64_t offset, void* dst, std::uint64_t n) {
  if (n == 0) return;
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(offset));
  in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::uint64_t>(in_.gcount()) != n) throw Corrupt(path_, "short read");
  bytes_read_ += n;
  ranges_.emplace_back(offset, n);
}

const ContainerEntryInfo& ContainerReader::Info(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw IoError(IoErrorKind::kNotFound, "container " + path_ + ": no entry '" + name + "'");
  }
  return entries_[it->second];
}

std::vector<std::uint8_t> ContainerReader::ReadBytes(const std::string& name) {
  const auto& info = Info(name);
  std::vector<std::uint8_t> out(info.byte_size);
  ReadAt(info.offset, out.data(), info.byte_size);
  return out;
}

template <typename T>
Tensor<T> ContainerReader::ReadTensor(const std::string& name) {
  const DType want = sizeof(T) == 4 ? DType::kFloat32 : DType::kFloat64;
  const auto& info = Info(name);
  if (info.dtype != want) {
    throw DimensionError("container: entry '" + name + "' is " + DTypeName(info.dtype) +
                         ", expected " + DTypeName(want));
  }
  Tensor<T> t(info.dims);
  ReadAt(info.offset, t.data(), info.byte_size);
  return t;
}

template Tensor<float> ContainerReader::ReadTensor<float>(const std::string&);
template Tensor<double> ContainerReader::ReadTensor<double>(const std::string&);

std::string ContainerReader::ReadText(const std::string& name) {
  if (Info(name).dtype != DType::kUInt8) throw DimensionError("container: entry '" + name + "' is not text");
  auto bytes = ReadBytes(name);
  return std::string(bytes.begin(), bytes.end());
}

std::vector<std::int64_t> ContainerReader::ReadInt64(const std::string& name) {
  const auto& info = Info(name);
  if (info.dtype != DType::kInt64) throw DimensionError("container: entry '" + name + "' is not i64");
  std::vector<std::int64_t> out(info.byte_size / 8);
  ReadAt(info.offset, out.data(), info.byte_size);
  return out;
}

std::vector<ContainerEntry> ReadContainer(const std::string& path) {
  ContainerReader reader(path);
  std::vector<ContainerEntry> out;
  for (const auto& info : reader.entries()) {
    out.push_back({info.name, info.dtype, info.dims, reader.ReadBytes(info.name)});
  }
  return out;
}

}  // namespace apc
