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

#include "apc/tensor.h"

#include <cstring>
#include <sstream>

#include "apc/error.h"

namespace apc {

const char* IoErrorKindName(IoErrorKind kind) {
  switch (kind) {
    case IoErrorKind::kNotFound: return "not_found";
    case IoErrorKind::kCorruptFile: return "corrupt_file";
    case IoErrorKind::kBadMagic: return "bad_magic";
    case IoErrorKind::kUnsupportedVersion: return "unsupported_version";
    case IoErrorKind::kOffsetOverlap: return "offset_overlap";
    case IoErrorKind::kConfigMismatch: return "config_mismatch";
    case IoErrorKind::kTruncated: return "truncated";
    case IoErrorKind::kUnsupportedCodec: return "unsupported_codec";
    case IoErrorKind::kStereo: return "stereo";
    case IoErrorKind::kParse: return "parse";
    case IoErrorKind::kDuplicateId: return "duplicate_id";
    case IoErrorKind::kWriteFailed: return "write_failed";
  }
  return "io";
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t ShapeSize(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

void CheckShape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dims must be positive, got " + ShapeString(shape));
  }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  CheckShape(shape_);
  data_.assign(ShapeSize(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  CheckShape(shape_);
  if (ShapeSize(shape_) != data_.size()) {
    throw DimensionError("buffer of " + std::to_string(data_.size()) +
                         " elements does not match shape " + ShapeString(shape_));
  }
}

template <typename T>
Tensor<T> Tensor<T>::FromRows(std::initializer_list<std::initializer_list<T>> rows) {
  std::size_t r = rows.size();
  std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<T> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows in FromRows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(data));
}

template <typename T>
std::size_t Tensor<T>::rows() const {
  if (shape_.size() != 2) throw DimensionError("expected a matrix, got " + ShapeString(shape_));
  return shape_[0];
}

template <typename T>
std::size_t Tensor<T>::cols() const {
  if (shape_.size() != 2) throw DimensionError("expected a matrix, got " + ShapeString(shape_));
  return shape_[1];
}

template <typename T>
void Tensor<T>::Fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
Tensor<T> Tensor<T>::Reshaped(Shape shape) const {
  if (ShapeSize(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + ShapeString(shape_) + " to " + ShapeString(shape));
  }
  return Tensor(std::move(shape), data_);
}

template <typename T>
bool BitwiseEqual(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

template class Tensor<float>;
template class Tensor<double>;
template bool BitwiseEqual(const Tensor<float>&, const Tensor<float>&);
template bool BitwiseEqual(const Tensor<double>&, const Tensor<double>&);

}  // namespace apc
