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

#ifndef SIMTPE_TRAINING_HPP_
#define SIMTPE_TRAINING_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "simtpe/corpus.hpp"
#include "simtpe/model.hpp"
#include "simtpe/optim.hpp"
#include "simtpe/path.hpp"

namespace simtpe {

enum class PathMode {
  // k ~ U{1..I}, per-step increments gamma ~ U{0..r}.
  kDisturbed,
  // k ~ U{1..I}, wait-k schedule (multi-path).
  kMultiPath,
  // g(t) = I for every step.
  kFullSentence,
};

const char* path_mode_name(PathMode mode);
PathMode parse_path_mode(const std::string& name);

struct TrainConfig {
  double lambda_segment = 1.0;
  double lambda_token = 1.0;
  // Disturbance bound; also the READ restriction used at inference.
  int r = 2;
  double peak_lr = 5e-4;
  double init_lr = 1e-7;
  std::int64_t warmup = 4000;
  AdamConfig adam{};
  double label_smoothing = 0.1;
  double dropout = 0.3;
  std::size_t max_tokens = 16000;
  int max_epochs = 1;
  // 0 disables.
  std::int64_t max_steps = 0;
  double max_seconds = 0.0;
  PathMode path_mode = PathMode::kDisturbed;
  std::uint64_t seed = 1;

  void validate() const;
};

// Applies "key = value" lines ('#' starts a comment) to the configs. Model
// keys only matter when training from scratch.
void load_train_config(const std::string& path, ModelConfig& model,
                       TrainConfig& train);

// Everything the losses need for one sentence under one path.
struct SentenceForward {
  Tensor encoder_states;  // [I, d]
  Tensor decoder_states;  // [M, d]
  Tensor logits;          // [M, V_tgt]
  Tensor translated;      // Phi^T per step, [M, J*cap]
  Tensor untranslated;    // Phi^U per step, [M, N*cap]
  std::vector<CapsuleState> capsules;
};

// source and target carry their trailing <eos>. Capsules are routed only
// when with_capsules is set.
SentenceForward forward_sentence(const ModelParameters& params,
                                 std::span<const int> source,
                                 std::span<const int> target,
                                 const TranslationPath& path,
                                 const ForwardOptions& opts, bool with_capsules);

// Averaging matrices with the empty-average conventions: row t of the
// translated average is zero for t = 1, row t of the unread average is zero
// when g(t) = I.
Tensor translated_average_matrix(std::size_t target_length);
Tensor untranslated_average_matrix(std::size_t target_length);
Tensor unread_average_matrix(const TranslationPath& path, std::size_t source_length);

// (1/M) sum_t |Phi^T_t - W^T H^T_t|^2 + |Phi^U_t + W^U_e Z_t - W^U_d H^U_t|^2
Tensor segment_loss(const ModelParameters& params, const Tensor& translated,
                    const Tensor& untranslated, const Tensor& decoder_states,
                    const Tensor& encoder_states, const TranslationPath& path);

// -(1/M) sum_t [mean_{tau<t} log p_d(y_tau | Phi^T_t)
//               + mean_{i<=g(t)} log p_e(x_i | Phi^T_t; Phi^U_t)]
Tensor token_loss(const ModelParameters& params, const Tensor& translated,
                  const Tensor& untranslated, std::span<const int> source,
                  std::span<const int> target, const TranslationPath& path);

struct LossBreakdown {
  Tensor total;
  Tensor nll;  // label-smoothed, summed over target tokens
  Tensor segment;
  Tensor token;
  double plain_nll = 0.0;  // unsmoothed, summed over target tokens
  std::size_t target_tokens = 0;
};

LossBreakdown total_loss(const ModelParameters& params,
                         std::span<const int> source,
                         std::span<const int> target,
                         const TranslationPath& path, const TrainConfig& config,
                         const ForwardOptions& opts = {});

// Path for one training sentence under the configured mode.
TranslationPath sample_training_path(PathMode mode, int source_length,
                                     int target_length, int r,
                                     std::mt19937_64& rng);

struct TrainRecord {
  std::int64_t step = 0;
  double nll = 0.0;  // unsmoothed, per target token
  double loss_segment = 0.0;
  double loss_token = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  ModelParameters params;
  std::vector<TrainRecord> history;
  int epochs_completed = 0;
  bool stopped_early = false;
};

// Called after every epoch; returning false stops training.
using EpochCallback =
    std::function<bool(int epoch, const ModelParameters&, const TrainResult&)>;

// Adam with the inverse-sqrt schedule over length-bucketed batches. Each
// sentence gets a fresh path per epoch. Deterministic for a seed. When init
// is non-null training continues from a copy of it.
TrainResult train(std::span<const SentencePair> corpus,
                  const ModelConfig& model_config, const TrainConfig& config,
                  const ModelParameters* init = nullptr,
                  const EpochCallback& on_epoch = {});

void write_loss_history(const std::string& path,
                        std::span<const TrainRecord> history);

std::vector<int> with_eos(std::span<const int> ids);

}  // namespace simtpe

#endif  // SIMTPE_TRAINING_HPP_
