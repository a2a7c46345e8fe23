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

#ifndef SIMTPE_METRICS_HPP_
#define SIMTPE_METRICS_HPP_

#include <span>
#include <string>
#include <vector>

#include "simtpe/corpus.hpp"
#include "simtpe/model.hpp"
#include "simtpe/path.hpp"
#include "simtpe/policy.hpp"

namespace simtpe {

// Average lagging over the first tau steps, tau being the first step that
// sees the whole source (or the hypothesis length).
double average_lagging(const TranslationPath& path, int source_length,
                       int hypothesis_length);

struct BleuScore {
  double score = 0.0;  // 0..100
  std::vector<double> precisions;
  double brevity_penalty = 1.0;
  std::size_t hypothesis_length = 0;
  std::size_t reference_length = 0;
};

// Corpus BLEU; zero n-gram matches are floored at 1e-9.
BleuScore corpus_bleu(std::span<const Sentence> hypotheses,
                      std::span<const Sentence> references, int max_n = 4);
double bleu(std::span<const Sentence> hypotheses,
            std::span<const Sentence> references, int max_n = 4);

// Ids of the n most probable entries, ties broken by lower id.
std::vector<int> top_n(std::span<const double> probs, int n);

// Share of prefix positions whose token lies in the top n of probs; the
// empty prefix yields 0.
double overlap_fraction(std::span<const double> probs,
                        std::span<const int> prefix, int n);

struct OverlapRates {
  double target = 0.0;  // R^T
  double source = 0.0;  // R^S
};

// Per-sentence rates for a decoded hypothesis (with its path). Source and
// hypothesis carry <eos>. R^T skips t = 1.
OverlapRates sentence_overlap_rates(const ModelParameters& params,
                                    std::span<const int> source,
                                    std::span<const int> hypothesis,
                                    const TranslationPath& path, int n_target,
                                    int n_source);

struct EvalRecord {
  std::string policy;  // "waitk" or "pe"
  int k = 0;
  double rho = 0.0;
  double al = 0.0;
  double bleu = 0.0;
  bool has_overlap = false;
  double r_target = 0.0;
  double r_source = 0.0;
  std::size_t sentences = 0;
};

struct PolicyOutputs {
  EvalRecord record;
  std::vector<DecodeResult> results;
};

struct OverlapSizes {
  int target = 0;  // 0: ceil(mean target length / 2)
  int source = 0;  // 0: ceil(mean source length)
};

OverlapSizes resolve_overlap_sizes(std::span<const SentencePair> pairs,
                                   OverlapSizes sizes);

// Decodes every pair under the policy and scores it against the references
// (target side of the pairs, mapped through the vocabulary).
PolicyOutputs evaluate_policy(const ModelParameters& params,
                              std::span<const SentencePair> pairs,
                              const Vocab& target_vocab,
                              const PolicyConfig& policy, bool with_overlap,
                              OverlapSizes sizes = {});

struct SweepConfig {
  std::vector<int> waitk_ks{1, 3, 5, 7};
  std::vector<int> pe_ks{1, 3, 5, 7};
  std::vector<double> rhos{0.24};
  int r = 2;
  bool with_overlap = true;
  OverlapSizes sizes{};
};

// One record per grid point, sorted by AL.
std::vector<EvalRecord> sweep(const ModelParameters& params,
                              std::span<const SentencePair> pairs,
                              const Vocab& target_vocab,
                              const SweepConfig& config);

// Columns policy, k, rho, AL, BLEU, R_T, R_S, sentences.
void write_sweep_csv(const std::string& path, std::span<const EvalRecord> records);

}  // namespace simtpe

#endif  // SIMTPE_METRICS_HPP_
