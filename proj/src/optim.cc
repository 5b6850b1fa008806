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

#include "apc/optim.h"

#include <cmath>

#include "apc/error.h"

namespace apc {

nlohmann::json AdamConfig::ToJson() const {
  return {{"lr", lr}, {"beta1", beta1}, {"beta2", beta2}, {"eps", eps}, {"clip_norm", clip_norm}};
}

AdamConfig AdamConfig::FromJson(const nlohmann::json& j) {
  AdamConfig c;
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.Validate();
  return c;
}

void AdamConfig::Validate() const {
  if (!(lr > 0)) throw ConfigError("adam: lr must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw ConfigError("adam: betas must lie in [0, 1)");
  }
  if (!(eps > 0)) throw ConfigError("adam: eps must be positive");
  if (!(clip_norm >= 0)) throw ConfigError("adam: clip_norm must be non-negative");
}

template <typename T>
Adam<T>::Adam(ParamList<T> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  cfg_.Validate();
  for (const auto& p : params_) {
    m_.emplace_back(p.var.shape());
    v_.emplace_back(p.var.shape());
  }
}

template <typename T>
double Adam<T>::LearningRate(std::int64_t step) const {
  return schedule_ ? schedule_(step, cfg_.lr) : cfg_.lr;
}

template <typename T>
double Adam<T>::Step() {
  double sq = 0;
  for (const auto& p : params_) {
    for (T g : p.var.grad().values()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw DivergenceError("adam: non-finite gradient in parameter " + p.name + " at step " +
                              std::to_string(step_ + 1));
      }
      sq += static_cast<double>(g) * g;
    }
  }
  const double norm = std::sqrt(sq);
  const double clip = cfg_.clip_norm > 0 && norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;

  ++step_;
  const double lr = LearningRate(step_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& var = params_[i].var;
    const auto g = var.grad().values();
    auto w = var.mutable_value().values();
    auto m = m_[i].values();
    auto v = v_[i].values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = clip * static_cast<double>(g[k]);
      const double mk = cfg_.beta1 * m[k] + (1 - cfg_.beta1) * gk;
      const double vk = cfg_.beta2 * v[k] + (1 - cfg_.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      w[k] = static_cast<T>(w[k] - lr * (mk / c1) / (std::sqrt(vk / c2) + cfg_.eps));
    }
  }
  return norm;
}

template class Adam<float>;
template class Adam<double>;

}  // namespace apc
