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

#include "simtpe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "simtpe/error.hpp"
#include "simtpe/ops.hpp"
#include "simtpe/training.hpp"

namespace simtpe {

double average_lagging(const TranslationPath& path, int source_length,
                       int hypothesis_length) {
  SIMTPE_CHECK(source_length > 0, "average_lagging: empty source");
  SIMTPE_CHECK(hypothesis_length > 0, "average_lagging: empty hypothesis");
  SIMTPE_CHECK(path.length() >= static_cast<std::size_t>(hypothesis_length),
               "average_lagging: path shorter than hypothesis");
  const double gamma = static_cast<double>(hypothesis_length) / source_length;
  int tau = hypothesis_length;
  for (int t = 1; t <= hypothesis_length; ++t) {
    if (path.g[static_cast<std::size_t>(t - 1)] >= source_length) {
      tau = t;
      break;
    }
  }
  double sum = 0.0;
  for (int t = 1; t <= tau; ++t)
    sum += path.g[static_cast<std::size_t>(t - 1)] - (t - 1) / gamma;
  return sum / tau;
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts ngrams(const Sentence& s, std::size_t n) {
  NgramCounts out;
  for (std::size_t i = 0; i + n <= s.size(); ++i)
    ++out[std::vector<std::string>(s.begin() + i, s.begin() + i + n)];
  return out;
}

}  // namespace

BleuScore corpus_bleu(std::span<const Sentence> hypotheses,
                      std::span<const Sentence> references, int max_n) {
  SIMTPE_CHECK(hypotheses.size() == references.size(),
               "bleu: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                   std::to_string(references.size()) + " references");
  SIMTPE_CHECK(!hypotheses.empty(), "bleu: empty corpus");
  SIMTPE_CHECK(max_n >= 1, "bleu: max n must be >= 1");
  std::vector<double> matches(static_cast<std::size_t>(max_n), 0.0);
  std::vector<double> totals(static_cast<std::size_t>(max_n), 0.0);
  BleuScore out;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    out.hypothesis_length += hypotheses[s].size();
    out.reference_length += references[s].size();
    for (int n = 1; n <= max_n; ++n) {
      const auto h = ngrams(hypotheses[s], static_cast<std::size_t>(n));
      const auto r = ngrams(references[s], static_cast<std::size_t>(n));
      for (const auto& [gram, count] : h) {
        totals[n - 1] += count;
        if (auto it = r.find(gram); it != r.end())
          matches[n - 1] += std::min(count, it->second);
      }
    }
  }
  double log_sum = 0.0;
  for (int n = 0; n < max_n; ++n) {
    const double p = std::max(matches[n], 1e-9) / std::max(totals[n], 1.0);
    out.precisions.push_back(p);
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(out.hypothesis_length);
  const double r = static_cast<double>(out.reference_length);
  out.brevity_penalty = c >= r ? 1.0 : (c == 0.0 ? 0.0 : std::exp(1.0 - r / c));
  out.score = 100.0 * out.brevity_penalty * std::exp(log_sum / max_n);
  return out;
}

double bleu(std::span<const Sentence> hypotheses,
            std::span<const Sentence> references, int max_n) {
  return corpus_bleu(hypotheses, references, max_n).score;
}

std::vector<int> top_n(std::span<const double> probs, int n) {
  std::vector<int> idx(probs.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto keep = std::min(idx.size(), static_cast<std::size_t>(std::max(n, 0)));
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep),
                    idx.end(), [&](int a, int b) {
                      return probs[a] != probs[b] ? probs[a] > probs[b] : a < b;
                    });
  idx.resize(keep);
  return idx;
}

double overlap_fraction(std::span<const double> probs,
                        std::span<const int> prefix, int n) {
  if (prefix.empty()) return 0.0;
  const auto top = top_n(probs, n);
  std::size_t hits = 0;
  for (int id : prefix)
    hits += std::find(top.begin(), top.end(), id) != top.end();
  return static_cast<double>(hits) / static_cast<double>(prefix.size());
}

OverlapRates sentence_overlap_rates(const ModelParameters& params,
                                    std::span<const int> source,
                                    std::span<const int> hypothesis,
                                    const TranslationPath& path, int n_target,
                                    int n_source) {
  NoGradScope no_grad;
  const auto fw = forward_sentence(params, source, hypothesis, path, {}, true);
  Tensor pd = log_softmax_rows(
      add_row(matmul(fw.translated, params.tok_tgt_w), params.tok_tgt_b));
  Tensor pe = log_softmax_rows(add_row(
      matmul(concat_cols({fw.translated, fw.untranslated}), params.tok_src_w),
      params.tok_src_b));
  const std::size_t m = hypothesis.size();
  OverlapRates out;
  std::size_t target_steps = 0;
  for (std::size_t t = 0; t < m; ++t) {
    // Log-probabilities rank the same as probabilities.
    auto row_d = pd.data().subspan(t * pd.cols(), pd.cols());
    auto row_e = pe.data().subspan(t * pe.cols(), pe.cols());
    if (t > 0) {
      out.target += overlap_fraction(row_d, hypothesis.first(t), n_target);
      ++target_steps;
    }
    out.source += overlap_fraction(
        row_e, source.first(static_cast<std::size_t>(path.g[t])), n_source);
  }
  out.target = target_steps ? out.target / static_cast<double>(target_steps) : 0.0;
  out.source /= static_cast<double>(m);
  return out;
}

OverlapSizes resolve_overlap_sizes(std::span<const SentencePair> pairs,
                                   OverlapSizes sizes) {
  if (pairs.empty()) return sizes;
  double src = 0.0, tgt = 0.0;
  for (const auto& p : pairs) {
    src += static_cast<double>(p.source.size());
    tgt += static_cast<double>(p.target.size());
  }
  src /= static_cast<double>(pairs.size());
  tgt /= static_cast<double>(pairs.size());
  if (sizes.target <= 0) sizes.target = static_cast<int>(std::ceil(tgt / 2.0));
  if (sizes.source <= 0) sizes.source = static_cast<int>(std::ceil(src));
  return sizes;
}

PolicyOutputs evaluate_policy(const ModelParameters& params,
                              std::span<const SentencePair> pairs,
                              const Vocab& target_vocab,
                              const PolicyConfig& policy, bool with_overlap,
                              OverlapSizes sizes) {
  SIMTPE_CHECK(!pairs.empty(), "evaluate: empty corpus");
  sizes = resolve_overlap_sizes(pairs, sizes);
  PolicyOutputs out;
  EvalRecord& rec = out.record;
  rec.policy = policy.kind == PolicyKind::kWaitK ? "waitk" : "pe";
  rec.k = policy.k;
  rec.rho = policy.rho;
  rec.has_overlap = with_overlap;
  std::vector<Sentence> hyps, refs;
  for (const auto& pair : pairs) {
    DecodeResult res = decode_sentence(params, pair.source, policy);
    const auto source = with_eos(pair.source);
    rec.al += average_lagging(res.path, static_cast<int>(source.size()),
                              static_cast<int>(res.target.size()));
    if (with_overlap) {
      const auto rates = sentence_overlap_rates(params, source, res.target,
                                                res.path, sizes.target, sizes.source);
      rec.r_target += rates.target;
      rec.r_source += rates.source;
    }
    hyps.push_back(target_vocab.decode(res.target));
    refs.push_back(target_vocab.decode(pair.target));
    out.results.push_back(std::move(res));
  }
  const auto n = static_cast<double>(pairs.size());
  rec.sentences = pairs.size();
  rec.al /= n;
  rec.r_target /= n;
  rec.r_source /= n;
  rec.bleu = bleu(hyps, refs);
  return out;
}

std::vector<EvalRecord> sweep(const ModelParameters& params,
                              std::span<const SentencePair> pairs,
                              const Vocab& target_vocab,
                              const SweepConfig& config) {
  std::vector<EvalRecord> out;
  for (int k : config.waitk_ks) {
    PolicyConfig pc{PolicyKind::kWaitK, k, 0.0, config.r, 0};
    out.push_back(evaluate_policy(params, pairs, target_vocab, pc,
                                  config.with_overlap, config.sizes).record);
  }
  for (int k : config.pe_ks) {
    for (double rho : config.rhos) {
      PolicyConfig pc{PolicyKind::kPostEvaluation, k, rho, config.r, 0};
      out.push_back(evaluate_policy(params, pairs, target_vocab, pc,
                                    config.with_overlap, config.sizes).record);
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const EvalRecord& a, const EvalRecord& b) { return a.al < b.al; });
  return out;
}

void write_sweep_csv(const std::string& path, std::span<const EvalRecord> records) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "policy,k,rho,AL,BLEU,R_T,R_S,sentences\n";
  char buf[256];
  for (const auto& r : records) {
    char rho[32] = "NA";
    if (r.policy == "pe") std::snprintf(rho, sizeof rho, "%g", r.rho);
    if (r.has_overlap) {
      std::snprintf(buf, sizeof buf, "%s,%d,%s,%.4f,%.4f,%.4f,%.4f,%zu\n",
                    r.policy.c_str(), r.k, rho, r.al, r.bleu, r.r_target,
                    r.r_source, r.sentences);
    } else {
      std::snprintf(buf, sizeof buf, "%s,%d,%s,%.4f,%.4f,NA,NA,%zu\n",
                    r.policy.c_str(), r.k, rho, r.al, r.bleu, r.sentences);
    }
    os << buf;
  }
  if (!os) throw IoError("failed writing '" + path + "'");
}

}  // namespace simtpe
