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

#include "simtpe/path.hpp"

#include <algorithm>

#include "simtpe/error.hpp"

namespace simtpe {

std::vector<Action> TranslationPath::actions() const {
  std::vector<Action> out;
  int read = 0;
  for (int gt : g) {
    for (; read < gt; ++read) out.push_back(Action::kRead);
    out.push_back(Action::kWrite);
  }
  return out;
}

std::string TranslationPath::action_string() const {
  std::string s;
  for (auto a : actions()) s.push_back(static_cast<char>(a));
  return s;
}

void TranslationPath::validate(int source_length) const {
  int prev = 1;
  for (std::size_t t = 0; t < g.size(); ++t) {
    if (g[t] < 1 || g[t] > source_length) {
      throw InvalidArgument("path: g(" + std::to_string(t + 1) + ") = " +
                            std::to_string(g[t]) + " outside [1, " +
                            std::to_string(source_length) + "]");
    }
    if (g[t] < prev) {
      throw InvalidArgument("path: g decreases at t = " + std::to_string(t + 1));
    }
    prev = g[t];
  }
}

int waitk_g(int t, int k, int source_length) {
  return std::min(k + t - 1, source_length);
}

TranslationPath waitk_path(int source_length, int target_length, int k) {
  SIMTPE_CHECK(source_length >= 1 && k >= 1, "waitk_path: need I >= 1, k >= 1");
  TranslationPath p;
  p.k = k;
  p.g.resize(static_cast<std::size_t>(target_length));
  for (int t = 1; t <= target_length; ++t)
    p.g[static_cast<std::size_t>(t - 1)] = waitk_g(t, k, source_length);
  return p;
}

TranslationPath full_sentence_path(int source_length, int target_length) {
  TranslationPath p;
  p.k = source_length;
  p.g.assign(static_cast<std::size_t>(target_length), source_length);
  return p;
}

TranslationPath disturbed_path(int source_length, int k,
                               std::span<const int> gammas) {
  SIMTPE_CHECK(source_length >= 1 && k >= 1,
               "disturbed_path: need I >= 1, k >= 1");
  TranslationPath p;
  p.k = k;
  p.g.reserve(gammas.size());
  int prev = k;
  for (std::size_t t = 0; t < gammas.size(); ++t) {
    const int gt = std::min(prev + gammas[t], source_length);
    p.g.push_back(gt);
    prev = gt;
  }
  return p;
}

TranslationPath sample_disturbed_path(int source_length, int target_length,
                                      int r, std::mt19937_64& rng) {
  SIMTPE_CHECK(source_length >= 1, "sample_disturbed_path: I must be >= 1");
  SIMTPE_CHECK(target_length >= 1, "sample_disturbed_path: M must be >= 1");
  SIMTPE_CHECK(r >= 1, "sample_disturbed_path: r must be >= 1");
  std::uniform_int_distribution<int> pick_k(1, source_length);
  std::uniform_int_distribution<int> pick_gamma(0, r);
  const int k = pick_k(rng);
  std::vector<int> gammas(static_cast<std::size_t>(target_length));
  for (auto& gamma : gammas) gamma = pick_gamma(rng);
  return disturbed_path(source_length, k, gammas);
}

}  // namespace simtpe
