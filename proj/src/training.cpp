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

#include "simtpe/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "simtpe/error.hpp"

namespace simtpe {

const char* path_mode_name(PathMode mode) {
  switch (mode) {
    case PathMode::kDisturbed:
      return "disturbed";
    case PathMode::kMultiPath:
      return "multipath";
    case PathMode::kFullSentence:
      return "full";
  }
  return "?";
}

PathMode parse_path_mode(const std::string& name) {
  if (name == "disturbed") return PathMode::kDisturbed;
  if (name == "multipath") return PathMode::kMultiPath;
  if (name == "full") return PathMode::kFullSentence;
  throw InvalidArgument("unknown path mode '" + name +
                        "' (expected disturbed, multipath or full)");
}

void TrainConfig::validate() const {
  SIMTPE_CHECK(lambda_segment >= 0.0 && lambda_token >= 0.0,
               "loss weights must be non-negative");
  SIMTPE_CHECK(r >= 1, "r must be >= 1");
  SIMTPE_CHECK(peak_lr > 0.0, "lr must be positive");
  SIMTPE_CHECK(label_smoothing >= 0.0 && label_smoothing < 1.0,
               "label_smoothing must be in [0,1)");
  SIMTPE_CHECK(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0,1)");
  SIMTPE_CHECK(max_tokens >= 1, "max_tokens must be positive");
  SIMTPE_CHECK(max_epochs >= 1, "max_epochs must be >= 1");
}

void load_train_config(const std::string& path, ModelConfig& model,
                       TrainConfig& train) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    if (trim(line).empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw FormatError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      auto as_int = [&] { return std::stoi(value); };
      auto as_i64 = [&] { return static_cast<std::int64_t>(std::stoll(value)); };
      auto as_dbl = [&] { return std::stod(value); };
      if (key == "lambda_segment") train.lambda_segment = as_dbl();
      else if (key == "lambda_token") train.lambda_token = as_dbl();
      else if (key == "r") train.r = as_int();
      else if (key == "lr") train.peak_lr = as_dbl();
      else if (key == "warmup_init_lr") train.init_lr = as_dbl();
      else if (key == "warmup") train.warmup = as_i64();
      else if (key == "adam_beta1") train.adam.beta1 = as_dbl();
      else if (key == "adam_beta2") train.adam.beta2 = as_dbl();
      else if (key == "adam_eps") train.adam.eps = as_dbl();
      else if (key == "weight_decay") train.adam.weight_decay = as_dbl();
      else if (key == "label_smoothing") train.label_smoothing = as_dbl();
      else if (key == "dropout") train.dropout = model.dropout = as_dbl();
      else if (key == "max_tokens") train.max_tokens = static_cast<std::size_t>(as_i64());
      else if (key == "max_epochs") train.max_epochs = as_int();
      else if (key == "max_steps") train.max_steps = as_i64();
      else if (key == "max_seconds") train.max_seconds = as_dbl();
      else if (key == "path_mode") train.path_mode = parse_path_mode(value);
      else if (key == "seed") train.seed = static_cast<std::uint64_t>(std::stoull(value));
      else if (key == "d_model") model.d_model = as_int();
      else if (key == "d_ff") model.d_ff = as_int();
      else if (key == "layers") model.layers = as_int();
      else if (key == "heads") model.heads = as_int();
      else if (key == "capsule_dim") model.capsule_dim = as_int();
      else if (key == "translated_capsules") model.translated_capsules = as_int();
      else if (key == "untranslated_capsules") model.untranslated_capsules = as_int();
      else if (key == "routing_iters") model.routing_iters = as_int();
      else throw FormatError(where + ": unknown key '" + key + "'");
    } catch (const std::logic_error&) {
      throw FormatError(where + ": bad value '" + value + "' for '" + key + "'");
    }
  }
}

std::vector<int> with_eos(std::span<const int> ids) {
  std::vector<int> out(ids.begin(), ids.end());
  out.push_back(kEosId);
  return out;
}

SentenceForward forward_sentence(const ModelParameters& params,
                                 std::span<const int> source,
                                 std::span<const int> target,
                                 const TranslationPath& path,
                                 const ForwardOptions& opts, bool with_capsules) {
  SIMTPE_CHECK(!source.empty(), "forward_sentence: empty source");
  SIMTPE_CHECK(!target.empty(), "forward_sentence: empty target");
  SIMTPE_CHECK(path.length() == target.size(),
               "forward_sentence: path length differs from target length");
  path.validate(static_cast<int>(source.size()));

  SentenceForward fw;
  fw.encoder_states = encode(params, source, opts);
  std::vector<int> inputs;
  inputs.reserve(target.size());
  inputs.push_back(kBosId);
  inputs.insert(inputs.end(), target.begin(), target.end() - 1);
  fw.decoder_states = decode_rows(params, inputs, fw.encoder_states, path.g,
                                  nullptr, false, opts);
  fw.logits = output_logits(params, fw.decoder_states);
  if (!with_capsules) return fw;

  Tensor votes = capsule_votes(params, fw.encoder_states);
  std::vector<Tensor> translated, untranslated;
  for (std::size_t t = 0; t < target.size(); ++t) {
    Tensor h = slice_rows(fw.decoder_states, t, t + 1);
    CapsuleState st = route_capsules(params, votes, h, path.g[t]);
    translated.push_back(st.translated_vector());
    untranslated.push_back(st.untranslated_vector());
    fw.capsules.push_back(std::move(st));
  }
  fw.translated = concat_rows(translated);
  fw.untranslated = concat_rows(untranslated);
  return fw;
}

Tensor translated_average_matrix(std::size_t m) {
  std::vector<double> a(m * m, 0.0);
  for (std::size_t t = 1; t < m; ++t)
    for (std::size_t tau = 0; tau < t; ++tau)
      a[t * m + tau] = 1.0 / static_cast<double>(t);
  return Tensor::constant({m, m}, std::move(a));
}

Tensor untranslated_average_matrix(std::size_t m) {
  std::vector<double> a(m * m, 0.0);
  for (std::size_t t = 0; t < m; ++t)
    for (std::size_t tau = t; tau < m; ++tau)
      a[t * m + tau] = 1.0 / static_cast<double>(m - t);
  return Tensor::constant({m, m}, std::move(a));
}

Tensor unread_average_matrix(const TranslationPath& path, std::size_t source_length) {
  const std::size_t m = path.length();
  std::vector<double> a(m * source_length, 0.0);
  for (std::size_t t = 0; t < m; ++t) {
    const auto g = static_cast<std::size_t>(path.g[t]);
    if (g >= source_length) continue;
    for (std::size_t i = g; i < source_length; ++i)
      a[t * source_length + i] = 1.0 / static_cast<double>(source_length - g);
  }
  return Tensor::constant({m, source_length}, std::move(a));
}

Tensor segment_loss(const ModelParameters& params, const Tensor& translated,
                    const Tensor& untranslated, const Tensor& decoder_states,
                    const Tensor& encoder_states, const TranslationPath& path) {
  const std::size_t m = decoder_states.rows();
  SIMTPE_CHECK(m > 0, "segment_loss: M must be >= 1");
  SIMTPE_CHECK(path.length() == m && translated.rows() == m &&
                   untranslated.rows() == m,
               "segment_loss: per-step inputs must have M rows");
  Tensor ht = matmul(translated_average_matrix(m), decoder_states);
  Tensor hu = matmul(untranslated_average_matrix(m), decoder_states);
  Tensor zu = matmul(unread_average_matrix(path, encoder_states.rows()),
                     encoder_states);
  Tensor first = sub(translated, matmul(ht, params.seg_translated));
  Tensor second = sub(add(untranslated, matmul(zu, params.seg_unread)),
                      matmul(hu, params.seg_untranslated));
  return scale(add(sum_squares(first), sum_squares(second)),
               1.0 / static_cast<double>(m));
}

Tensor token_loss(const ModelParameters& params, const Tensor& translated,
                  const Tensor& untranslated, std::span<const int> source,
                  std::span<const int> target, const TranslationPath& path) {
  const std::size_t m = translated.rows();
  SIMTPE_CHECK(m > 0, "token_loss: M must be >= 1");
  SIMTPE_CHECK(path.length() == m && target.size() >= m,
               "token_loss: per-step inputs must have M rows");
  Tensor logp_d = log_softmax_rows(
      add_row(matmul(translated, params.tok_tgt_w), params.tok_tgt_b));
  Tensor logp_e = log_softmax_rows(add_row(
      matmul(concat_cols({translated, untranslated}), params.tok_src_w),
      params.tok_src_b));
  std::vector<PickEntry> picks_d, picks_e;
  for (std::size_t t = 0; t < m; ++t) {
    for (std::size_t tau = 0; tau < t; ++tau) {
      picks_d.push_back({t, static_cast<std::size_t>(target[tau]),
                         1.0 / static_cast<double>(t)});
    }
    const auto g = static_cast<std::size_t>(path.g[t]);
    for (std::size_t i = 0; i < g; ++i) {
      picks_e.push_back({t, static_cast<std::size_t>(source[i]),
                         1.0 / static_cast<double>(g)});
    }
  }
  Tensor ll = weighted_pick_sum(logp_e, picks_e);
  if (!picks_d.empty()) ll = add(weighted_pick_sum(logp_d, picks_d), ll);
  return scale(ll, -1.0 / static_cast<double>(m));
}

LossBreakdown total_loss(const ModelParameters& params,
                         std::span<const int> source,
                         std::span<const int> target,
                         const TranslationPath& path, const TrainConfig& config,
                         const ForwardOptions& opts) {
  const bool with_caps = config.lambda_segment > 0.0 || config.lambda_token > 0.0;
  SentenceForward fw =
      forward_sentence(params, source, target, path, opts, with_caps);
  LossBreakdown lb;
  lb.target_tokens = target.size();
  lb.nll = cross_entropy(fw.logits, target, config.label_smoothing);
  {
    const std::size_t v = fw.logits.cols();
    auto lv = fw.logits.data();
    for (std::size_t t = 0; t < target.size(); ++t) {
      const double* row = lv.data() + t * v;
      double mx = row[0];
      for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
      double z = 0.0;
      for (std::size_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
      lb.plain_nll += mx + std::log(z) - row[static_cast<std::size_t>(target[t])];
    }
  }
  lb.total = lb.nll;
  if (!with_caps) {
    lb.segment = Tensor::scalar(0.0);
    lb.token = Tensor::scalar(0.0);
    return lb;
  }
  lb.segment = segment_loss(params, fw.translated, fw.untranslated,
                            fw.decoder_states, fw.encoder_states, path);
  lb.token = token_loss(params, fw.translated, fw.untranslated, source, target,
                        path);
  if (config.lambda_segment > 0.0)
    lb.total = add(lb.total, scale(lb.segment, config.lambda_segment));
  if (config.lambda_token > 0.0)
    lb.total = add(lb.total, scale(lb.token, config.lambda_token));
  return lb;
}

TranslationPath sample_training_path(PathMode mode, int source_length,
                                     int target_length, int r,
                                     std::mt19937_64& rng) {
  switch (mode) {
    case PathMode::kDisturbed:
      return sample_disturbed_path(source_length, target_length, r, rng);
    case PathMode::kMultiPath: {
      std::uniform_int_distribution<int> pick_k(1, source_length);
      return waitk_path(source_length, target_length, pick_k(rng));
    }
    case PathMode::kFullSentence:
      return full_sentence_path(source_length, target_length);
  }
  throw InvalidArgument("unknown path mode");
}

TrainResult train(std::span<const SentencePair> corpus,
                  const ModelConfig& model_config, const TrainConfig& config,
                  const ModelParameters* init, const EpochCallback& on_epoch) {
  config.validate();
  SIMTPE_CHECK(!corpus.empty(), "train: empty corpus");
  TrainResult result;
  result.params = init ? init->clone() : ModelParameters(model_config, config.seed);
  ModelParameters& params = result.params;
  Adam optimizer(params.tensors(), config.adam);
  const InverseSqrtSchedule schedule{config.peak_lr, config.init_lr, config.warmup};
  const auto start = std::chrono::steady_clock::now();
  auto out_of_time = [&] {
    if (config.max_seconds <= 0.0) return false;
    const std::chrono::duration<double> el = std::chrono::steady_clock::now() - start;
    return el.count() >= config.max_seconds;
  };

  std::int64_t step = 0;
  bool stop = false;
  for (int epoch = 0; epoch < config.max_epochs && !stop; ++epoch) {
    auto batches = make_batches(corpus, config.max_tokens,
                                config.seed * 1000003ULL + static_cast<std::uint64_t>(epoch));
    for (const Batch& batch : batches) {
      if ((config.max_steps > 0 && step >= config.max_steps) || out_of_time()) {
        stop = true;
        result.stopped_early = true;
        break;
      }
      params.zero_grad();
      std::size_t tokens = 0;
      for (std::size_t r = 0; r < batch.size(); ++r) tokens += batch.target_lengths[r] + 1;
      const double norm = 1.0 / static_cast<double>(tokens);
      TrainRecord rec;
      double total = 0.0, plain = 0.0;
      for (std::size_t r = 0; r < batch.size(); ++r) {
        std::seed_seq seq{config.seed, static_cast<std::uint64_t>(epoch),
                          static_cast<std::uint64_t>(batch.indices[r])};
        std::mt19937_64 rng(seq);
        const auto x = with_eos(batch.source_row(r));
        const auto y = with_eos(batch.target_row(r));
        const auto path = sample_training_path(config.path_mode,
                                               static_cast<int>(x.size()),
                                               static_cast<int>(y.size()),
                                               config.r, rng);
        Graph graph;
        GraphScope scope(graph);
        ForwardOptions opts{true, config.dropout, &rng};
        LossBreakdown lb = total_loss(params, x, y, path, config, opts);
        graph.backward(scale(lb.total, norm));
        total += lb.total.item();
        plain += lb.plain_nll;
        rec.loss_segment += lb.segment.item();
        rec.loss_token += lb.token.item();
      }
      if (!std::isfinite(total)) {
        throw DivergenceError("non-finite loss at step " + std::to_string(step + 1));
      }
      ++step;
      const double lr = schedule.lr(step);
      optimizer.step(lr);
      rec.step = step;
      rec.nll = plain * norm;
      rec.total = total * norm;
      rec.loss_segment /= static_cast<double>(batch.size());
      rec.loss_token /= static_cast<double>(batch.size());
      rec.lr = lr;
      result.history.push_back(rec);
    }
    if (!stop) ++result.epochs_completed;
    if (on_epoch && !on_epoch(epoch, params, result)) {
      result.stopped_early = true;
      stop = true;
    }
  }
  params.zero_grad();
  return result;
}

void write_loss_history(const std::string& path,
                        std::span<const TrainRecord> history) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "step,nll,loss_S,loss_T,total,lr\n";
  os << std::setprecision(10);
  for (const auto& r : history) {
    os << r.step << ',' << r.nll << ',' << r.loss_segment << ',' << r.loss_token
       << ',' << r.total << ',' << r.lr << '\n';
  }
  if (!os) throw IoError("failed writing '" + path + "'");
}

}  // namespace simtpe
