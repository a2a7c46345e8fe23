// Copyright 2026 The simtpe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "simtpe/optim.hpp"

#include <cmath>

#include "simtpe/error.hpp"

namespace simtpe {

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    if (!p.requires_grad()) {
      throw InvalidArgument("Adam: tensor is not a parameter");
    }
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step(double lr) {
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double step_size = lr * std::sqrt(c2) / c1;
  for (std::size_t t = 0; t < params_.size(); ++t) {
    Node* node = params_[t].node();
    auto& value = node->value;
    const bool has_grad = !node->grad.empty();
    auto& m = m_[t];
    auto& v = v_[t];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = has_grad ? node->grad[i] : 0.0;
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      if (config_.weight_decay != 0.0) {
        value[i] -= lr * config_.weight_decay * value[i];
      }
      value[i] -= step_size * m[i] / (std::sqrt(v[i]) + config_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double InverseSqrtSchedule::lr(std::int64_t step) const {
  if (step < 1) step = 1;
  if (warmup > 0 && step <= warmup) {
    return init_lr + (peak_lr - init_lr) * static_cast<double>(step) /
                         static_cast<double>(warmup);
  }
  if (warmup <= 0) return peak_lr / std::sqrt(static_cast<double>(step));
  return peak_lr * std::sqrt(static_cast<double>(warmup) /
                             static_cast<double>(step));
}

}  // namespace simtpe
