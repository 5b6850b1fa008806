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

#ifndef APC_OPTIM_H_
#define APC_OPTIM_H_

#include <cstdint>
#include <functional>
#include <vector>

#include "apc/params.h"
#include "json.hpp"

namespace apc {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Global gradient-norm clipping; 0 disables it.
  double clip_norm = 0.0;

  nlohmann::json ToJson() const;
  static AdamConfig FromJson(const nlohmann::json& j);
  void Validate() const;
};

// Maps (step about to be taken, base rate) to the rate used for that step.
using LearningRateSchedule = std::function<double(std::int64_t, double)>;

// Bias-corrected Adam over a fixed parameter list. Moments are indexed in
// parameter-list order.
template <typename T>
class Adam {
 public:
  Adam(ParamList<T> params, AdamConfig cfg);

  // Applies one update from the accumulated gradients and returns the global
  // gradient norm before clipping. Throws DivergenceError naming the first
  // parameter whose gradient is not finite; no parameter is touched then.
  double Step();

  void set_schedule(LearningRateSchedule schedule) { schedule_ = std::move(schedule); }
  double LearningRate(std::int64_t step) const;

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t step) { step_ = step; }
  const AdamConfig& config() const { return cfg_; }
  const ParamList<T>& params() const { return params_; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }

 private:
  ParamList<T> params_;
  AdamConfig cfg_;
  LearningRateSchedule schedule_;
  std::int64_t step_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace apc

#endif  // APC_OPTIM_H_
