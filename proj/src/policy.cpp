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

#include "simtpe/policy.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "simtpe/error.hpp"
#include "simtpe/ops.hpp"

namespace simtpe {
namespace {

int argmax_row(const Tensor& logits) {
  auto v = logits.data();
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

void PolicyConfig::validate() const {
  SIMTPE_CHECK(k >= 1, "policy: k must be >= 1");
  SIMTPE_CHECK(rho >= 0.0, "policy: rho must be >= 0");
  SIMTPE_CHECK(r >= 1, "policy: r must be >= 1");
  SIMTPE_CHECK(max_target_len >= 0, "policy: max target length must be >= 0");
}

double max_select(std::span<const double> values) {
  SIMTPE_CHECK(!values.empty(), "max_select: empty vector");
  return *std::max_element(values.begin(), values.end());
}

std::vector<double> delta_degree(const DegreeVector& before,
                                 const DegreeVector& after) {
  SIMTPE_CHECK(before.values.size() == after.values.size() &&
                   before.available == after.available,
               "delta_degree: degree vectors differ in length");
  std::vector<double> out(before.values.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::max(after.values[i] - before.values[i], 0.0);
  return out;
}

bool pe_write_decision(const DegreeVector& before, const DegreeVector& after,
                       double rho) {
  return max_select(delta_degree(before, after)) >= rho;
}

DecodeSession::DecodeSession(const ModelParameters& params,
                             const PolicyConfig& config)
    : params_(params), config_(config) {
  config_.validate();
}

void DecodeSession::push_source(int token) {
  SIMTPE_CHECK(!closed_, "session: source already finished");
  SIMTPE_CHECK(token >= 0 && token < params_.config().src_vocab,
               "session: source id out of range");
  pending_.push_back(token);
}

void DecodeSession::finish() {
  if (closed_) return;
  pending_.push_back(kEosId);
  closed_ = true;
}

int DecodeSession::limit() const {
  const int cap = params_.config().max_positions - 1;
  if (config_.max_target_len > 0) return std::min(config_.max_target_len, cap);
  // I is known as soon as the stream is closed, even if not all of it is read.
  if (closed_) {
    const int source_len = source_read() + static_cast<int>(pending_.size());
    return std::min(2 * source_len + 10, cap);
  }
  return cap;
}

Tensor DecodeSession::hidden(LayerCache& cache, bool commit) const {
  const int input = target_.empty() ? kBosId : target_.back();
  const int limits[1] = {source_read()};
  const int ids[1] = {input};
  return decode_rows(params_, ids, z_, limits, &cache, commit);
}

DecodeSession::Pending DecodeSession::evaluate_with_cache() const {
  SIMTPE_CHECK(source_read() >= 1, "evaluate: no source token read");
  NoGradScope no_grad;
  Pending p{{}, decoder_cache_};
  const int g = source_read();
  Tensor h_t = hidden(p.cache, true);
  p.eval.candidate = argmax_row(output_logits(params_, h_t));
  p.eval.before = translation_degree(route_capsules(params_, votes_, h_t, g));
  const int ids[1] = {p.eval.candidate};
  const int limits[1] = {g};
  LayerCache lookahead = p.cache;
  Tensor h_next = decode_rows(params_, ids, z_, limits, &lookahead, false);
  p.eval.after = translation_degree(route_capsules(params_, votes_, h_next, g));
  p.eval.delta = delta_degree(p.eval.before, p.eval.after);
  p.eval.max_delta = max_select(p.eval.delta);
  p.eval.write = p.eval.max_delta >= config_.rho;
  return p;
}

Evaluation DecodeSession::evaluate() const { return evaluate_with_cache().eval; }

void DecodeSession::read_one(int candidate, double max_delta,
                             std::vector<double> degrees) {
  NoGradScope no_grad;
  const int ids[1] = {pending_.front()};
  pending_.pop_front();
  read_.push_back(ids[0]);
  Tensor row = encode_rows(params_, ids, &encoder_cache_);
  Tensor vote = capsule_votes(params_, row);
  z_ = z_.defined() ? concat_rows({z_, row}) : row;
  votes_ = votes_.defined() ? concat_rows({votes_, vote}) : vote;
  TraceRow tr;
  tr.step = static_cast<int>(trace_.size()) + 1;
  tr.action = Action::kRead;
  tr.i = source_read();
  tr.t = target_written();
  tr.candidate = candidate;
  tr.max_delta = max_delta;
  tr.degrees = std::move(degrees);
  trace_.push_back(std::move(tr));
}

void DecodeSession::write(int token, LayerCache cache, const Evaluation* eval) {
  decoder_cache_ = std::move(cache);
  target_.push_back(token);
  path_.g.push_back(source_read());
  read_run_ = 0;
  TraceRow tr;
  tr.step = static_cast<int>(trace_.size()) + 1;
  tr.action = Action::kWrite;
  tr.i = source_read();
  tr.t = target_written();
  tr.candidate = token;
  if (eval) {
    tr.max_delta = eval->max_delta;
    tr.degrees = eval->after.values;
  }
  trace_.push_back(std::move(tr));
  if (token == kEosId) done_ = true;
}

DecodeSession::StepResult DecodeSession::step() {
  if (done_) return {Step::kDone, -1};
  if (target_written() >= limit()) {
    truncated_ = true;
    done_ = true;
    return {Step::kDone, -1};
  }
  const bool complete = source_complete();
  auto want_read = [&]() -> StepResult {
    if (pending_.empty()) return {Step::kNeedInput, -1};
    read_one(-1, 0.0, {});
    return {Step::kRead, -1};
  };
  if (!prefix_done_) {
    if (!complete && source_read() < config_.k) return want_read();
    prefix_done_ = true;
    path_.k = source_read();
  }

  if (config_.kind == PolicyKind::kWaitK) {
    if (!complete && source_read() < config_.k + target_written()) return want_read();
    NoGradScope no_grad;
    LayerCache cache = decoder_cache_;
    const int token = argmax_row(output_logits(params_, hidden(cache, true)));
    write(token, std::move(cache), nullptr);
    return {Step::kWrite, token};
  }

  Pending p = evaluate_with_cache();
  const bool forced = complete || read_run_ >= config_.r;
  if (forced || p.eval.write) {
    const int token = p.eval.candidate;
    write(token, std::move(p.cache), &p.eval);
    return {Step::kWrite, token};
  }
  if (pending_.empty()) return {Step::kNeedInput, -1};
  read_one(p.eval.candidate, p.eval.max_delta, std::move(p.eval.after.values));
  ++read_run_;
  return {Step::kRead, -1};
}

DecodeResult decode_sentence(const ModelParameters& params,
                             std::span<const int> source,
                             const PolicyConfig& config) {
  SIMTPE_CHECK(!source.empty(), "decode: empty source sentence");
  DecodeSession session(params, config);
  for (int id : source) session.push_source(id);
  session.finish();
  while (session.step().step != DecodeSession::Step::kDone) {
  }
  return {session.target(), session.path(), session.trace(), session.truncated()};
}

DecodeResult pe_decode(const ModelParameters& params, std::span<const int> source,
                       int k, double rho, int r, int max_target_len) {
  return decode_sentence(params, source,
                         {PolicyKind::kPostEvaluation, k, rho, r, max_target_len});
}

DecodeResult fixed_decode(const ModelParameters& params,
                          std::span<const int> source, int k,
                          int max_target_len) {
  return decode_sentence(params, source,
                         {PolicyKind::kWaitK, k, 0.0, 1, max_target_len});
}

void write_trace(const std::string& path, std::span<const TraceRow> trace) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "step\taction\ti\tt\tcandidate\tmax_delta\tdegrees\n";
  char buf[32];
  for (const auto& row : trace) {
    std::snprintf(buf, sizeof buf, "%.6f", row.max_delta);
    os << row.step << '\t' << static_cast<char>(row.action) << '\t' << row.i
       << '\t' << row.t << '\t' << row.candidate << '\t' << buf << '\t';
    for (std::size_t j = 0; j < row.degrees.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.6f", row.degrees[j]);
      os << (j ? ";" : "") << buf;
    }
    os << '\n';
  }
  if (!os) throw IoError("failed writing '" + path + "'");
}

std::vector<TraceRow> read_trace(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open trace '" + path + "'");
  std::string line;
  if (!std::getline(is, line) || line.rfind("step\taction", 0) != 0)
    throw FormatError(path + ": missing trace header");
  std::vector<TraceRow> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() == 6) cols.emplace_back();
    const std::string where = path + ":" + std::to_string(lineno);
    if (cols.size() != 7 || (cols[1] != "R" && cols[1] != "W"))
      throw FormatError(where + ": malformed trace row");
    TraceRow row;
    try {
      row.step = std::stoi(cols[0]);
      row.action = cols[1] == "R" ? Action::kRead : Action::kWrite;
      row.i = std::stoi(cols[2]);
      row.t = std::stoi(cols[3]);
      row.candidate = std::stoi(cols[4]);
      row.max_delta = std::stod(cols[5]);
      std::stringstream ds(cols[6]);
      std::string d;
      while (std::getline(ds, d, ';'))
        if (!d.empty()) row.degrees.push_back(std::stod(d));
    } catch (const std::logic_error&) {
      throw FormatError(where + ": malformed trace row");
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace simtpe
