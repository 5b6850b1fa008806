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

#ifndef APC_CONTAINER_H_
#define APC_CONTAINER_H_

#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "apc/tensor.h"

namespace apc {

// APCT tensor container, version 1. All integers little-endian.
//
//   0   char[4]  magic "APCT"
//   4   u8       version
//   5   u64      entry count E
//   13  E table records:
//         u32 name length L, L bytes of name,
//         u8 dtype, u8 ndim, ndim x u64 dims, u64 absolute payload offset
//   ... payloads, each prod(dims) * sizeof(dtype) bytes, row-major
inline constexpr char kContainerMagic[4] = {'A', 'P', 'C', 'T'};
inline constexpr std::uint8_t kContainerVersion = 1;

enum class DType : std::uint8_t { kFloat32 = 1, kFloat64 = 2, kUInt8 = 3, kInt64 = 4 };

const char* DTypeName(DType dtype);
std::size_t DTypeSize(DType dtype);

struct ContainerEntry {
  std::string name;
  DType dtype = DType::kFloat32;
  Shape dims;
  std::vector<std::uint8_t> bytes;  // little-endian payload
};

ContainerEntry TensorEntry(std::string name, const Tensor<float>& t);
ContainerEntry TensorEntry(std::string name, const Tensor<double>& t);
ContainerEntry TextEntry(std::string name, const std::string& text);
ContainerEntry Int64Entry(std::string name, std::span<const std::int64_t> values);

// Writes all entries to a temporary file next to path and renames it into
// place. Names must be unique.
void WriteContainer(const std::string& path, std::span<const ContainerEntry> entries);

struct ContainerEntryInfo {
  std::string name;
  DType dtype;
  Shape dims;
  std::uint64_t offset;
  std::uint64_t byte_size;
};

// Validates the header and entry table on open; payloads are read lazily, one
// entry at a time.
class ContainerReader {
 public:
  explicit ContainerReader(const std::string& path);

  const std::vector<ContainerEntryInfo>& entries() const { return entries_; }
  bool Contains(const std::string& name) const { return index_.count(name) != 0; }
  const ContainerEntryInfo& Info(const std::string& name) const;

  std::vector<std::uint8_t> ReadBytes(const std::string& name);
  template <typename T>
  Tensor<T> ReadTensor(const std::string& name);
  std::string ReadText(const std::string& name);
  std::vector<std::int64_t> ReadInt64(const std::string& name);

  // Byte accounting over the lifetime of the reader, header included.
  std::uint64_t bytes_read() const { return bytes_read_; }
  const std::vector<std::pair<std::uint64_t, std::uint64_t>>& read_ranges() const {
    return ranges_;
  }

 private:
  void ReadAt(std::uint64_t offset, void* dst, std::uint64_t n);

  std::string path_;
  std::ifstream in_;
  std::uint64_t file_size_ = 0;
  std::vector<ContainerEntryInfo> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t bytes_read_ = 0;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges_;
};

extern template Tensor<float> ContainerReader::ReadTensor<float>(const std::string&);
extern template Tensor<double> ContainerReader::ReadTensor<double>(const std::string&);

// Whole-file convenience wrappers.
std::vector<ContainerEntry> ReadContainer(const std::string& path);

}  // namespace apc

#endif  // APC_CONTAINER_H_
