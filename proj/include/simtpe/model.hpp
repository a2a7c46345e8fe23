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

// Encoder-decoder transformer with a unidirectional encoder and a capsule
// routing head that measures how much of each source token has already been
// translated.

#ifndef SIMTPE_MODEL_HPP_
#define SIMTPE_MODEL_HPP_

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "simtpe/ops.hpp"
#include "simtpe/tensor.hpp"

namespace simtpe {

// Reserved vocabulary ids shared by source and target vocabularies.
inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;

struct ModelConfig {
  int src_vocab = 0;
  int tgt_vocab = 0;
  int d_model = 64;
  int d_ff = 128;
  int layers = 2;
  int heads = 4;
  // 0 selects d_model / 2.
  int capsule_dim = 0;
  // J: capsules holding translated source content.
  int translated_capsules = 2;
  // N: capsules holding untranslated source content.
  int untranslated_capsules = 2;
  int routing_iters = 3;
  double dropout = 0.3;
  int max_positions = 512;

  int resolved_capsule_dim() const {
    return capsule_dim > 0 ? capsule_dim : d_model / 2;
  }
  int capsule_count() const {
    return translated_capsules + untranslated_capsules;
  }
  // Throws InvalidArgument naming the first violated constraint.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct AttentionParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct FeedForwardParams {
  Tensor w1, b1, w2, b2;
};

struct EncoderLayerParams {
  Tensor ln1_g, ln1_b;
  AttentionParams self_attn;
  Tensor ln2_g, ln2_b;
  FeedForwardParams ffn;
};

struct DecoderLayerParams {
  Tensor ln1_g, ln1_b;
  AttentionParams self_attn;
  Tensor ln2_g, ln2_b;
  AttentionParams cross_attn;
  Tensor ln3_g, ln3_b;
  FeedForwardParams ffn;
};

class ModelParameters {
 public:
  ModelParameters() = default;
  // Xavier-uniform matrices, N(0, d^-1/2) embeddings, unit gains, zero biases.
  ModelParameters(const ModelConfig& config, std::uint64_t seed);

  // Deep copy; the clone shares no storage with this instance.
  ModelParameters clone() const;
  // Overwrites values (not gradients) from another instance of equal config.
  void copy_values_from(const ModelParameters& other);

  const ModelConfig& config() const { return config_; }
  const std::vector<std::pair<std::string, Tensor>>& named() const {
    return named_;
  }
  std::vector<Tensor> tensors() const;
  const Tensor& get(const std::string& name) const;
  std::size_t parameter_count() const;
  void zero_grad();

  Tensor src_embed, tgt_embed;
  std::vector<EncoderLayerParams> encoder;
  Tensor enc_ln_g, enc_ln_b;
  std::vector<DecoderLayerParams> decoder;
  Tensor dec_ln_g, dec_ln_b;
  Tensor out_w, out_b;
  // Vote transforms W_j for every capsule, side by side: [d, (J+N)*cap].
  Tensor caps_vote;
  // Decoder-state guidance U_g: [d, cap].
  Tensor caps_guide;
  // Segment-constraint projections W^T, W^U_e, W^U_d.
  Tensor seg_translated, seg_unread, seg_untranslated;
  // Token-constraint vocabulary projections for p_d and p_e.
  Tensor tok_tgt_w, tok_tgt_b, tok_src_w, tok_src_b;

 private:
  Tensor add(const std::string& name, Shape shape, std::vector<double> values);
  void build(std::mt19937_64* rng);

  ModelConfig config_;
  std::vector<std::pair<std::string, Tensor>> named_;
};

// Binary checkpoint: magic, format version, JSON config, named tensors.
void save_checkpoint(const ModelParameters& params, const std::string& path);
ModelParameters load_checkpoint(const std::string& path);
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ForwardOptions {
  bool training = false;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;
};

// Per-layer key/value rows of positions already processed.
struct LayerCache {
  std::vector<Tensor> keys;
  std::vector<Tensor> values;
  std::size_t length = 0;
};

// Encodes ids at positions [offset, offset + n). With a non-null cache the
// new rows attend to the cached prefix and are appended to it. Rows are
// computed with causal attention, so earlier states never change.
Tensor encode_rows(const ModelParameters& params, std::span<const int> ids,
                   LayerCache* cache, const ForwardOptions& opts = {});

// One-shot causal encoding of a whole source sentence: [I, d].
Tensor encode(const ModelParameters& params, std::span<const int> ids,
              const ForwardOptions& opts = {});

// Decoder rows for input ids (y_{t-1}, starting with bos) at positions
// [cache length, cache length + n). Row r cross-attends to encoder rows
// [0, limits[r]). Appends self-attention keys/values to the cache when
// commit is true.
Tensor decode_rows(const ModelParameters& params, std::span<const int> ids,
                   const Tensor& encoder_states, std::span<const int> limits,
                   LayerCache* cache, bool commit,
                   const ForwardOptions& opts = {});

Tensor output_logits(const ModelParameters& params, const Tensor& hidden);

struct DecodeStepOutput {
  Tensor hidden;  // [1, d]
  Tensor logits;  // [1, V_tgt]
};

// Decoder state and logits for step t = prefix.size() + 1 given the target
// prefix y_{<t} and the first g_t encoder states. Every prefix position sees
// at most the same g_t source tokens.
DecodeStepOutput decode_step(const ModelParameters& params,
                             std::span<const int> target_prefix,
                             const Tensor& encoder_states, int g_t);

// Routing state for one decode step.
struct CapsuleState {
  // Logits that produced c: [rows, J+N].
  Tensor b;
  // Assignment probabilities: [rows, J+N], zero for rows >= g.
  Tensor c;
  // Output capsules Phi_1..Phi_{J+N}, each [1, cap].
  std::vector<Tensor> capsules;
  std::size_t available = 0;
  std::size_t translated = 0;

  // Phi^T: capsules 1..J concatenated, [1, J*cap].
  Tensor translated_vector() const;
  // Phi^U: capsules J+1..J+N concatenated, [1, N*cap].
  Tensor untranslated_vector() const;
};

// Called after each routing iteration (0-based) with the state so far.
using RoutingObserver = std::function<void(int, const CapsuleState&)>;

// z * W_j for every capsule j: [rows, (J+N)*cap]. Computed once per set of
// encoder states and shared by all decode steps.
Tensor capsule_votes(const ModelParameters& params, const Tensor& encoder_states);

// Guided routing by agreement over the first g_t rows of the votes.
// Votes are u_ij = W_j z_i + U_g h_t; each iteration computes
// c = masked softmax(b), Phi_j = squash(sum_i c_ij u_ij), b_ij += Phi_j . u_ij.
CapsuleState route_capsules(const ModelParameters& params, const Tensor& votes,
                            const Tensor& decoder_hidden, int g_t,
                            const RoutingObserver& observer = {});

// Per-source-token translation degree d_i = sum_{j<=J} c_ij.
struct DegreeVector {
  std::vector<double> values;
  std::size_t available = 0;
};

DegreeVector translation_degree(const CapsuleState& state);

// Sinusoidal position encoding row.
std::vector<double> position_encoding(std::size_t position, std::size_t dim);

}  // namespace simtpe

#endif  // SIMTPE_MODEL_HPP_
