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

#ifndef APC_ERROR_H_
#define APC_ERROR_H_

#include <stdexcept>
#include <string>

namespace apc {

// Every failure raised by the library derives from Error. kind() is a short
// stable token used by the CLI for machine-parsable error lines.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error("dimension", what) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error("contract", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error("input", what) {}
};

// Training produced a non-finite loss or gradient.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error("divergence", what) {}
};

enum class IoErrorKind {
  kNotFound,
  kCorruptFile,
  kBadMagic,
  kUnsupportedVersion,
  kOffsetOverlap,
  kConfigMismatch,
  kTruncated,
  kUnsupportedCodec,
  kStereo,
  kParse,
  kDuplicateId,
  kWriteFailed,
};

const char* IoErrorKindName(IoErrorKind kind);

class IoError : public Error {
 public:
  IoError(IoErrorKind kind, const std::string& what)
      : Error(IoErrorKindName(kind), what), io_kind_(kind) {}
  IoErrorKind io_kind() const { return io_kind_; }

 private:
  IoErrorKind io_kind_;
};

}  // namespace apc

#endif  // APC_ERROR_H_
