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

#ifndef SIMTPE_PATH_HPP_
#define SIMTPE_PATH_HPP_

#include <random>
#include <span>
#include <string>
#include <vector>

namespace simtpe {

enum class Action : char { kRead = 'R', kWrite = 'W' };

// g(t) for t = 1..M: how many source tokens are available when target token
// t is written.
struct TranslationPath {
  std::vector<int> g;
  // Initial read count the path was built from (0 when not applicable).
  int k = 0;

  std::size_t length() const { return g.size(); }
  // READ/WRITE sequence implied by g.
  std::vector<Action> actions() const;
  std::string action_string() const;
  // Throws InvalidArgument unless g is non-decreasing with 1 <= g(t) <= I.
  void validate(int source_length) const;
};

// Wait-k schedule min(k + t - 1, I).
int waitk_g(int t, int k, int source_length);
TranslationPath waitk_path(int source_length, int target_length, int k);
TranslationPath full_sentence_path(int source_length, int target_length);

// g(1) = min(k + gamma_1, I), g(t) = min(g(t-1) + gamma_t, I).
TranslationPath disturbed_path(int source_length, int k,
                               std::span<const int> gammas);

// Draws k ~ U{1..I} and every gamma_t ~ U{0..r} independently.
TranslationPath sample_disturbed_path(int source_length, int target_length,
                                      int r, std::mt19937_64& rng);

}  // namespace simtpe

#endif  // SIMTPE_PATH_HPP_
