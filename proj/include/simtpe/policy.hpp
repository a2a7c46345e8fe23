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

// Streaming greedy decoding under the wait-k and post-evaluation policies.

#ifndef SIMTPE_POLICY_HPP_
#define SIMTPE_POLICY_HPP_

#include <deque>
#include <span>
#include <string>
#include <vector>

#include "simtpe/model.hpp"
#include "simtpe/path.hpp"

namespace simtpe {

enum class PolicyKind { kWaitK, kPostEvaluation };

struct PolicyConfig {
  PolicyKind kind = PolicyKind::kPostEvaluation;
  int k = 1;
  double rho = 0.24;
  int r = 2;
  // 0 means 2 * I + 10 once finish() has fixed the source length.
  int max_target_len = 0;

  void validate() const;
};

double max_select(std::span<const double> values);

// max(after - before, 0) elementwise.
std::vector<double> delta_degree(const DegreeVector& before,
                                 const DegreeVector& after);

// WRITE iff the largest non-negative degree increase reaches rho.
bool pe_write_decision(const DegreeVector& before, const DegreeVector& after,
                       double rho);

struct TraceRow {
  int step = 0;
  Action action = Action::kRead;
  // Source tokens read and target tokens written after the action.
  int i = 0;
  int t = 0;
  // Token evaluated at this point, -1 when no evaluation ran.
  int candidate = -1;
  double max_delta = 0.0;
  // Degrees after the candidate, one per available source token.
  std::vector<double> degrees;
};

struct Evaluation {
  int candidate = 0;
  DegreeVector before;
  DegreeVector after;
  std::vector<double> delta;
  double max_delta = 0.0;
  bool write = false;
};

// Incremental state of one sentence: encoder rows for the source read so far
// and the decoder cache of the emitted prefix.
class DecodeSession {
 public:
  DecodeSession(const ModelParameters& params, const PolicyConfig& config);

  enum class Step { kRead, kWrite, kNeedInput, kDone };
  struct StepResult {
    Step step = Step::kDone;
    int token = -1;  // set for kWrite
  };

  // Queues source tokens. finish() queues <eos> and closes the stream.
  void push_source(int token);
  void finish();

  // Takes one action. kNeedInput means the policy wants to read but nothing
  // is queued.
  StepResult step();

  // Routing comparison at the current (i, t); does not change the session.
  Evaluation evaluate() const;

  int source_read() const { return static_cast<int>(read_.size()); }
  int target_written() const { return static_cast<int>(target_.size()); }
  bool source_complete() const { return closed_ && pending_.empty(); }
  bool done() const { return done_; }
  bool truncated() const { return truncated_; }
  const std::vector<int>& target() const { return target_; }
  const TranslationPath& path() const { return path_; }
  const std::vector<TraceRow>& trace() const { return trace_; }

 private:
  struct Pending {
    Evaluation eval;
    LayerCache cache;  // decoder cache with step t committed
  };

  Pending evaluate_with_cache() const;
  Tensor hidden(LayerCache& cache, bool commit) const;
  void read_one(int candidate, double max_delta, std::vector<double> degrees);
  void write(int token, LayerCache cache, const Evaluation* eval);
  int limit() const;

  const ModelParameters& params_;
  PolicyConfig config_;
  std::deque<int> pending_;
  bool closed_ = false;
  std::vector<int> read_;
  LayerCache encoder_cache_;
  Tensor z_;
  Tensor votes_;
  LayerCache decoder_cache_;
  std::vector<int> target_;
  TranslationPath path_;
  std::vector<TraceRow> trace_;
  int read_run_ = 0;
  bool prefix_done_ = false;
  bool done_ = false;
  bool truncated_ = false;
};

struct DecodeResult {
  // Emitted tokens, ending with <eos> unless truncated.
  std::vector<int> target;
  TranslationPath path;
  std::vector<TraceRow> trace;
  bool truncated = false;
};

// Decodes a complete source sentence (without <eos>) under the policy.
DecodeResult decode_sentence(const ModelParameters& params,
                             std::span<const int> source,
                             const PolicyConfig& config);

DecodeResult pe_decode(const ModelParameters& params, std::span<const int> source,
                       int k, double rho, int r, int max_target_len = 0);
DecodeResult fixed_decode(const ModelParameters& params,
                          std::span<const int> source, int k,
                          int max_target_len = 0);

// TSV with columns step, action, i, t, candidate, max_delta, degrees.
void write_trace(const std::string& path, std::span<const TraceRow> trace);
std::vector<TraceRow> read_trace(const std::string& path);

}  // namespace simtpe

#endif  // SIMTPE_POLICY_HPP_
