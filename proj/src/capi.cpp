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

#include "simtpe/simtpe.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <string>

#include "simtpe/corpus.hpp"
#include "simtpe/error.hpp"
#include "simtpe/metrics.hpp"
#include "simtpe/model.hpp"
#include "simtpe/policy.hpp"
#include "simtpe/training.hpp"

struct simt_model {
  simtpe::ModelParameters params;
  simtpe::Vocab source_vocab;
  simtpe::Vocab target_vocab;
};

struct simt_session {
  const simt_model* model;
  simtpe::DecodeSession session;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
simt_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return SIMT_OK;
  } catch (const simtpe::InvalidArgument& e) {
    g_last_error = e.what();
    return SIMT_INVALID_ARGUMENT;
  } catch (const simtpe::IoError& e) {
    g_last_error = e.what();
    return SIMT_IO_ERROR;
  } catch (const simtpe::FormatError& e) {
    g_last_error = e.what();
    return SIMT_FORMAT_ERROR;
  } catch (const simtpe::DivergenceError& e) {
    g_last_error = e.what();
    return SIMT_DIVERGED;
  } catch (const std::invalid_argument& e) {
    g_last_error = e.what();
    return SIMT_INVALID_ARGUMENT;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SIMT_INTERNAL_ERROR;
  } catch (...) {
    g_last_error = "unknown error";
    return SIMT_INTERNAL_ERROR;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw simtpe::InvalidArgument(std::string(what) + " is NULL");
}

std::string source_vocab_path(const std::string& model) { return model + ".src.vocab"; }
std::string target_vocab_path(const std::string& model) { return model + ".tgt.vocab"; }

std::string trace_file(const std::string& dir, std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof name, "%06zu.tsv", index + 1);
  return (std::filesystem::path(dir) / name).string();
}

// Whitespace-tokenized lines; empty lines are kept as empty sentences.
std::vector<simtpe::Sentence> read_lines(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw simtpe::IoError("cannot open '" + path + "'");
  std::vector<simtpe::Sentence> out;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ss(line);
    simtpe::Sentence s;
    for (std::string w; ss >> w;) s.push_back(w);
    out.push_back(std::move(s));
  }
  return out;
}

simtpe::PolicyConfig to_policy(const simt_decode_options* o) {
  require(o, "decode options");
  simtpe::PolicyConfig pc;
  pc.kind = o->policy == SIMT_POLICY_WAITK ? simtpe::PolicyKind::kWaitK
                                           : simtpe::PolicyKind::kPostEvaluation;
  SIMTPE_CHECK(o->policy == SIMT_POLICY_WAITK || o->policy == SIMT_POLICY_PE,
               "unknown policy");
  pc.k = o->k;
  pc.rho = o->rho;
  pc.r = o->r;
  pc.max_target_len = o->max_len;
  pc.validate();
  return pc;
}

void to_configs(const simt_train_options& o, simtpe::ModelConfig& mc,
                simtpe::TrainConfig& tc) {
  mc.d_model = o.d_model;
  mc.d_ff = o.d_ff;
  mc.layers = o.layers;
  mc.heads = o.heads;
  mc.capsule_dim = o.capsule_dim;
  mc.translated_capsules = o.translated_capsules;
  mc.untranslated_capsules = o.untranslated_capsules;
  mc.routing_iters = o.routing_iters;
  mc.dropout = o.dropout;
  tc.lambda_segment = o.lambda_segment;
  tc.lambda_token = o.lambda_token;
  tc.r = o.r;
  tc.peak_lr = o.lr;
  tc.init_lr = o.warmup_init_lr;
  tc.warmup = o.warmup;
  tc.adam.beta1 = o.adam_beta1;
  tc.adam.beta2 = o.adam_beta2;
  tc.adam.eps = o.adam_eps;
  tc.adam.weight_decay = o.weight_decay;
  tc.label_smoothing = o.label_smoothing;
  tc.dropout = o.dropout;
  tc.max_tokens = o.max_tokens;
  tc.max_epochs = o.max_epochs;
  tc.max_steps = o.max_steps;
  tc.max_seconds = o.max_seconds;
  switch (o.path_mode) {
    case SIMT_PATH_DISTURBED:
      tc.path_mode = simtpe::PathMode::kDisturbed;
      break;
    case SIMT_PATH_MULTIPATH:
      tc.path_mode = simtpe::PathMode::kMultiPath;
      break;
    case SIMT_PATH_FULL:
      tc.path_mode = simtpe::PathMode::kFullSentence;
      break;
    default:
      throw simtpe::InvalidArgument("unknown path mode");
  }
  tc.seed = o.seed;
}

void from_configs(const simtpe::ModelConfig& mc, const simtpe::TrainConfig& tc,
                  simt_train_options& o) {
  o.d_model = mc.d_model;
  o.d_ff = mc.d_ff;
  o.layers = mc.layers;
  o.heads = mc.heads;
  o.capsule_dim = mc.capsule_dim;
  o.translated_capsules = mc.translated_capsules;
  o.untranslated_capsules = mc.untranslated_capsules;
  o.routing_iters = mc.routing_iters;
  o.lambda_segment = tc.lambda_segment;
  o.lambda_token = tc.lambda_token;
  o.r = tc.r;
  o.lr = tc.peak_lr;
  o.warmup_init_lr = tc.init_lr;
  o.warmup = tc.warmup;
  o.adam_beta1 = tc.adam.beta1;
  o.adam_beta2 = tc.adam.beta2;
  o.adam_eps = tc.adam.eps;
  o.weight_decay = tc.adam.weight_decay;
  o.label_smoothing = tc.label_smoothing;
  o.dropout = tc.dropout;
  o.max_tokens = tc.max_tokens;
  o.max_epochs = tc.max_epochs;
  o.max_steps = tc.max_steps;
  o.max_seconds = tc.max_seconds;
  o.path_mode = tc.path_mode == simtpe::PathMode::kDisturbed   ? SIMT_PATH_DISTURBED
                : tc.path_mode == simtpe::PathMode::kMultiPath ? SIMT_PATH_MULTIPATH
                                                               : SIMT_PATH_FULL;
  o.seed = tc.seed;
}

}  // namespace

extern "C" {

const char* simt_status_string(simt_status status) {
  switch (status) {
    case SIMT_OK:
      return "ok";
    case SIMT_INVALID_ARGUMENT:
      return "invalid argument";
    case SIMT_IO_ERROR:
      return "i/o error";
    case SIMT_FORMAT_ERROR:
      return "format error";
    case SIMT_DIVERGED:
      return "training diverged";
    case SIMT_INTERNAL_ERROR:
      return "internal error";
  }
  return "unknown status";
}

const char* simt_last_error(void) { return g_last_error.c_str(); }

const char* simt_version(void) { return "0.1.0"; }

void simt_synth_options_init(simt_synth_options* options) {
  if (options == nullptr) return;
  const simtpe::SynthConfig d;
  *options = {d.vocab_size, d.min_length, d.max_length, d.mapping_seed,
              d.swap_prob,  d.insert_prob, d.train_size, d.dev_size,
              d.test_size,  d.seed};
}

simt_status simt_generate_corpus(const simt_synth_options* options,
                                 const char* out_dir) {
  return guarded([&] {
    require(options, "options");
    require(out_dir, "out_dir");
    if (!std::filesystem::is_directory(out_dir))
      throw simtpe::IoError(std::string("output directory '") + out_dir +
                            "' does not exist");
    simtpe::SynthConfig c;
    c.vocab_size = options->vocab_size;
    c.min_length = options->min_length;
    c.max_length = options->max_length;
    c.mapping_seed = options->mapping_seed;
    c.swap_prob = options->swap_prob;
    c.insert_prob = options->insert_prob;
    c.train_size = options->train_size;
    c.dev_size = options->dev_size;
    c.test_size = options->test_size;
    c.seed = options->seed;
    const auto corpus = simtpe::generate_synthetic_corpus(c);
    const std::filesystem::path dir(out_dir);
    simtpe::write_parallel((dir / "train").string(), corpus.train);
    simtpe::write_parallel((dir / "dev").string(), corpus.dev);
    simtpe::write_parallel((dir / "test").string(), corpus.test);
  });
}

void simt_train_options_init(simt_train_options* options) {
  if (options == nullptr) return;
  *options = simt_train_options{};
  options->min_count = simtpe::LoadOptions{}.min_count;
  from_configs(simtpe::ModelConfig{}, simtpe::TrainConfig{}, *options);
}

simt_status simt_train_options_load(simt_train_options* options,
                                    const char* config_path) {
  return guarded([&] {
    require(options, "options");
    require(config_path, "config_path");
    simtpe::ModelConfig mc;
    simtpe::TrainConfig tc;
    to_configs(*options, mc, tc);
    simtpe::load_train_config(config_path, mc, tc);
    from_configs(mc, tc, *options);
  });
}

simt_status simt_train(const simt_train_options* options, const char* model_path,
                       const char* loss_csv_path, simt_train_report* report) {
  return guarded([&] {
    require(options, "options");
    require(model_path, "model_path");
    require(options->source_path, "source_path");
    require(options->target_path, "target_path");
    simtpe::ModelConfig mc;
    simtpe::TrainConfig tc;
    to_configs(*options, mc, tc);
    simtpe::LoadOptions lo;
    lo.min_count = options->min_count;
    lo.shared_vocab = options->shared_vocab != 0;

    std::unique_ptr<simt_model> init;
    simtpe::ParallelCorpus corpus;
    if (options->init_model_path != nullptr) {
      simt_model* m = nullptr;
      if (simt_model_load(options->init_model_path, &m) != SIMT_OK)
        throw simtpe::IoError(g_last_error);
      init.reset(m);
      corpus = simtpe::load_parallel(options->source_path, options->target_path,
                                     init->source_vocab, init->target_vocab, lo);
      mc = init->params.config();
    } else {
      corpus = simtpe::load_parallel(options->source_path, options->target_path, lo);
      mc.src_vocab = corpus.source_vocab.size();
      mc.tgt_vocab = corpus.target_vocab.size();
    }
    mc.validate();
    const auto start = std::chrono::steady_clock::now();
    auto result = simtpe::train(corpus.pairs, mc, tc, init ? &init->params : nullptr);
    const std::chrono::duration<double> elapsed =
        std::chrono::steady_clock::now() - start;
    simtpe::save_checkpoint(result.params, model_path);
    corpus.source_vocab.save(source_vocab_path(model_path));
    corpus.target_vocab.save(target_vocab_path(model_path));
    if (loss_csv_path != nullptr)
      simtpe::write_loss_history(loss_csv_path, result.history);
    if (report != nullptr) {
      report->steps = static_cast<int64_t>(result.history.size());
      report->epochs = result.epochs_completed;
      report->final_nll = result.history.empty() ? 0.0 : result.history.back().nll;
      report->final_total = result.history.empty() ? 0.0 : result.history.back().total;
      report->seconds = elapsed.count();
    }
  });
}

simt_status simt_model_load(const char* path, simt_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    auto m = std::make_unique<simt_model>(simt_model{
        simtpe::load_checkpoint(path), simtpe::Vocab::load(source_vocab_path(path)),
        simtpe::Vocab::load(target_vocab_path(path))});
    const auto& c = m->params.config();
    if (c.src_vocab != m->source_vocab.size() || c.tgt_vocab != m->target_vocab.size())
      throw simtpe::FormatError(std::string("vocabulary sizes do not match model '") +
                                path + "'");
    *out = m.release();
  });
}

simt_status simt_model_save(const simt_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    simtpe::save_checkpoint(model->params, path);
    model->source_vocab.save(source_vocab_path(path));
    model->target_vocab.save(target_vocab_path(path));
  });
}

simt_status simt_model_info_get(const simt_model* model, simt_model_info* info) {
  return guarded([&] {
    require(model, "model");
    require(info, "info");
    const auto& c = model->params.config();
    info->source_vocab = c.src_vocab;
    info->target_vocab = c.tgt_vocab;
    info->d_model = c.d_model;
    info->layers = c.layers;
    info->parameter_count = model->params.parameter_count();
  });
}

void simt_model_free(simt_model* model) { delete model; }

void simt_decode_options_init(simt_decode_options* options) {
  if (options == nullptr) return;
  const simtpe::PolicyConfig d;
  *options = {SIMT_POLICY_PE, d.k, d.rho, d.r, d.max_target_len};
}

simt_status simt_translate_file(const simt_model* model,
                                const simt_decode_options* options,
                                const char* source_path, const char* output_path,
                                const char* trace_dir) {
  return guarded([&] {
    require(model, "model");
    require(source_path, "source_path");
    require(output_path, "output_path");
    const auto policy = to_policy(options);
    const auto sources = simtpe::read_sentences(source_path);
    if (trace_dir != nullptr) std::filesystem::create_directories(trace_dir);
    std::ofstream os(output_path);
    if (!os) throw simtpe::IoError(std::string("cannot open '") + output_path + "'");
    for (std::size_t s = 0; s < sources.size(); ++s) {
      const auto ids = model->source_vocab.encode(sources[s]);
      const auto res = simtpe::decode_sentence(model->params, ids, policy);
      const auto words = model->target_vocab.decode(res.target);
      for (std::size_t w = 0; w < words.size(); ++w) os << (w ? " " : "") << words[w];
      os << '\n';
      if (trace_dir != nullptr) simtpe::write_trace(trace_file(trace_dir, s), res.trace);
    }
    if (!os) throw simtpe::IoError(std::string("failed writing '") + output_path + "'");
  });
}

simt_status simt_session_create(const simt_model* model,
                                const simt_decode_options* options,
                                simt_session** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = new simt_session{model, simtpe::DecodeSession(model->params, to_policy(options))};
  });
}

simt_status simt_session_push(simt_session* session, const char* token) {
  return guarded([&] {
    require(session, "session");
    require(token, "token");
    session->session.push_source(session->model->source_vocab.id(token));
  });
}

simt_status simt_session_finish(simt_session* session) {
  return guarded([&] {
    require(session, "session");
    session->session.finish();
  });
}

simt_status simt_session_step(simt_session* session, simt_action* action,
                              const char** token) {
  return guarded([&] {
    require(session, "session");
    require(action, "action");
    if (token != nullptr) *token = nullptr;
    using Step = simtpe::DecodeSession::Step;
    const auto res = session->session.step();
    switch (res.step) {
      case Step::kRead:
        *action = SIMT_ACTION_READ;
        break;
      case Step::kWrite:
        *action = SIMT_ACTION_WRITE;
        if (token != nullptr)
          *token = session->model->target_vocab.token(res.token).c_str();
        break;
      case Step::kNeedInput:
        *action = SIMT_ACTION_NEED_INPUT;
        break;
      case Step::kDone:
        *action = SIMT_ACTION_DONE;
        break;
    }
  });
}

void simt_session_free(simt_session* session) { delete session; }

simt_status simt_evaluate_files(const char* hypothesis_path,
                                const char* reference_path, const char* source_path,
                                const char* trace_dir, const simt_model* model,
                                int top_target, int top_source,
                                simt_eval_report* report) {
  return guarded([&] {
    require(hypothesis_path, "hypothesis_path");
    require(reference_path, "reference_path");
    require(report, "report");
    const auto hyps = read_lines(hypothesis_path);
    const auto refs = simtpe::read_sentences(reference_path);
    if (hyps.size() != refs.size())
      throw simtpe::FormatError(std::string(hypothesis_path) + " has " +
                                std::to_string(hyps.size()) + " lines, " + reference_path +
                                " has " + std::to_string(refs.size()));
    const double nan = std::numeric_limits<double>::quiet_NaN();
    report->bleu = simtpe::bleu(hyps, refs);
    report->al = report->r_target = report->r_source = nan;
    report->sentences = hyps.size();
    if (source_path == nullptr || trace_dir == nullptr) return;

    const auto sources = simtpe::read_sentences(source_path);
    if (sources.size() != hyps.size())
      throw simtpe::FormatError(std::string(source_path) + " has " +
                                std::to_string(sources.size()) + " lines, " +
                                hypothesis_path + " has " + std::to_string(hyps.size()));
    simtpe::OverlapSizes sizes{top_target, top_source};
    if (model != nullptr) {
      std::vector<simtpe::SentencePair> pairs;
      for (std::size_t s = 0; s < sources.size(); ++s)
        pairs.push_back({model->source_vocab.encode(sources[s]),
                         model->target_vocab.encode(refs[s])});
      sizes = simtpe::resolve_overlap_sizes(pairs, sizes);
    }
    double al = 0.0, rt = 0.0, rs = 0.0;
    for (std::size_t s = 0; s < sources.size(); ++s) {
      const auto trace = simtpe::read_trace(trace_file(trace_dir, s));
      simtpe::TranslationPath path;
      std::vector<int> hyp_ids;
      for (const auto& row : trace) {
        if (row.action != simtpe::Action::kWrite) continue;
        path.g.push_back(row.i);
        hyp_ids.push_back(row.candidate);
      }
      const int source_len = static_cast<int>(sources[s].size()) + 1;
      SIMTPE_CHECK(!hyp_ids.empty(),
                   "evaluate: trace " + trace_file(trace_dir, s) + " has no WRITE");
      path.validate(source_len);
      al += simtpe::average_lagging(path, source_len, static_cast<int>(hyp_ids.size()));
      if (model != nullptr) {
        const auto src_ids = simtpe::with_eos(model->source_vocab.encode(sources[s]));
        const auto rates = simtpe::sentence_overlap_rates(
            model->params, src_ids, hyp_ids, path, sizes.target, sizes.source);
        rt += rates.target;
        rs += rates.source;
      }
    }
    const auto n = static_cast<double>(sources.size());
    report->al = al / n;
    if (model != nullptr) {
      report->r_target = rt / n;
      report->r_source = rs / n;
    }
  });
}

void simt_sweep_options_init(simt_sweep_options* options) {
  if (options == nullptr) return;
  static const int kKs[] = {1, 3, 5, 7};
  static const double kRhos[] = {0.24};
  *options = {kKs, 4, kKs, 4, kRhos, 1, 2, 1, 0, 0, 0};
}

simt_status simt_sweep(const simt_model* model, const simt_sweep_options* options,
                       const char* source_path, const char* target_path,
                       const char* csv_path) {
  return guarded([&] {
    require(model, "model");
    require(options, "options");
    require(source_path, "source_path");
    require(target_path, "target_path");
    require(csv_path, "csv_path");
    simtpe::SweepConfig sc;
    sc.waitk_ks.assign(options->waitk_ks, options->waitk_ks + options->waitk_count);
    sc.pe_ks.assign(options->pe_ks, options->pe_ks + options->pe_count);
    sc.rhos.assign(options->rhos, options->rhos + options->rho_count);
    sc.r = options->r;
    sc.with_overlap = options->with_overlap != 0;
    sc.sizes = {options->top_target, options->top_source};
    auto corpus = simtpe::load_parallel(source_path, target_path, model->source_vocab,
                                        model->target_vocab);
    if (options->max_sentences > 0 && corpus.pairs.size() > options->max_sentences)
      corpus.pairs.resize(options->max_sentences);
    const auto records = simtpe::sweep(model->params, corpus.pairs, model->target_vocab, sc);
    simtpe::write_sweep_csv(csv_path, records);
  });
}

}  // extern "C"
