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

// Differentiable primitives. Every op works on the matrix view of its inputs
// (see Tensor::rows/cols) and records a backward rule when a graph is active.

#ifndef SIMTPE_OPS_HPP_
#define SIMTPE_OPS_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "simtpe/tensor.hpp"

namespace simtpe {

// Row-major boolean mask with the same matrix view as the logits it gates.
using Mask = std::vector<std::uint8_t>;

// a[m,k] * b[k,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// a[m,k] * b[n,k]^T
Tensor matmul_bt(const Tensor& a, const Tensor& b);
// a[k,m]^T * b[k,n]
Tensor matmul_at(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// a[m,n] + row[1,n] broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& row);

Tensor relu(const Tensor& a);

// Row-wise normalization with learned gain and bias of shape [1,n].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// Gathers rows of table[V,d] for each id.
Tensor embedding(const Tensor& table, std::span<const int> ids);

// Inverted dropout. Identity when !training or rate == 0.
Tensor dropout(const Tensor& x, double rate, bool training,
               std::mt19937_64& rng);

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);

struct MaskedSoftmax {
  Tensor probs;
  // Rows whose mask was entirely false; their output is all zeros.
  std::vector<std::size_t> degenerate_rows;
  bool degenerate() const { return !degenerate_rows.empty(); }
};

// Row-wise softmax restricted to entries where mask is true; masked-out
// entries are exactly 0.
MaskedSoftmax masked_softmax(const Tensor& logits, const Mask& mask);

Tensor log_softmax_rows(const Tensor& x);

// Row-wise capsule nonlinearity v * |v| / (1 + |v|^2). Rows with
// |v| < 1e-12 map to zero.
Tensor squash_rows(const Tensor& x);

// Scalars.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_squares(const Tensor& x);
Tensor mse(const Tensor& a, const Tensor& b);

// Label-smoothed cross-entropy summed over rows:
// (1 - eps) * -log p[target] + eps * mean_v(-log p[v]).
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     double smoothing);

struct PickEntry {
  std::size_t row;
  std::size_t col;
  double weight;
};

// sum_e weight_e * x[row_e, col_e]
Tensor weighted_pick_sum(const Tensor& x, std::span<const PickEntry> entries);

// Scaled dot-product multi-head attention. Query row r attends to key rows
// [0, limits[r]). Causal and prefix masks are both expressed as limits. The
// per-row arithmetic does not depend on how many query rows are processed
// together.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 std::size_t heads, std::span<const int> limits);

std::vector<int> causal_limits(std::size_t n, std::size_t offset = 0);

}  // namespace simtpe

#endif  // SIMTPE_OPS_HPP_
