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

#ifndef SIMTPE_OPTIM_HPP_
#define SIMTPE_OPTIM_HPP_

#include <cstdint>
#include <vector>

#include "simtpe/tensor.hpp"

namespace simtpe {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  // Decoupled: p -= lr * weight_decay * p before the Adam update.
  double weight_decay = 1e-4;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  // Applies one update from each parameter's accumulated gradient.
  // Parameters without a gradient are treated as having zero gradient.
  void step(double lr);
  void zero_grad();
  std::int64_t steps() const { return steps_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t steps_ = 0;
};

// Linear warmup from init_lr to peak_lr over warmup steps, then
// peak_lr * sqrt(warmup / step). Steps are 1-based.
struct InverseSqrtSchedule {
  double peak_lr = 5e-4;
  double init_lr = 1e-7;
  std::int64_t warmup = 4000;

  double lr(std::int64_t step) const;
};

}  // namespace simtpe

#endif  // SIMTPE_OPTIM_HPP_
