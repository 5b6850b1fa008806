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

#ifndef APC_PARAMS_H_
#define APC_PARAMS_H_

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "apc/autograd.h"

namespace apc {

template <typename T>
struct NamedParam {
  std::string name;
  Var<T> var;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

template <typename T>
std::size_t CountParameters(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.var.size();
  return n;
}

template <typename T>
void ZeroGrads(const ParamList<T>& params) {
  for (auto p : params) p.var.ZeroGrad();
}

// Deterministic parameter initializer: matrices uniform in
// [-scale/sqrt(fan_in), scale/sqrt(fan_in)], biases zero.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  template <typename T>
  Var<T> Uniform(std::size_t rows, std::size_t cols, double scale = 1.0) {
    const double bound = scale / std::sqrt(static_cast<double>(rows));
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor<T> t(rows, cols);
    for (auto& v : t.values()) v = static_cast<T>(u(rng_));
    return Var<T>::Param(std::move(t));
  }

  template <typename T>
  Var<T> Filled(std::size_t rows, std::size_t cols, T value) {
    return Var<T>::Param(Tensor<T>(rows, cols, value));
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace apc

#endif  // APC_PARAMS_H_
