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

// Command-line front end over the C interface.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "simtpe/simtpe.h"

namespace {

int fail(simt_status status) {
  std::fprintf(stderr, "simtpe: error: %s: %s\n", simt_status_string(status),
               simt_last_error());
  return 1;
}

// Copies a flag into an options field only when it was given on the command
// line, so config files and library defaults stay in force otherwise.
class Overrides {
 public:
  template <typename T, typename Field>
  void add(CLI::App* app, const std::string& name, Field& field,
           const std::string& help) {
    auto value = std::make_shared<T>(static_cast<T>(field));
    CLI::Option* opt = app->add_option(name, *value, help)->default_val(field);
    apply_.push_back([opt, value, &field] {
      if (opt->count() > 0) field = static_cast<Field>(*value);
    });
  }
  void apply() {
    for (auto& f : apply_) f();
  }

 private:
  std::vector<std::function<void()>> apply_;
};

std::string text(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simultaneous translation with post-evaluation policies"};
  app.require_subcommand(1);
  app.set_version_flag("--version", simt_version());
  std::uint64_t seed = 1;
  app.add_option("--seed", seed, "Seed for all randomness")->capture_default_str();

  // gen-data
  simt_synth_options synth;
  simt_synth_options_init(&synth);
  std::string data_dir;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic parallel corpus");
  gen->add_option("--out", data_dir, "Output directory (created if missing)")->required();
  gen->add_option("--vocab-size", synth.vocab_size, "Vocabulary size incl. reserved ids")
      ->capture_default_str();
  gen->add_option("--min-len", synth.min_length, "Minimum source length")->capture_default_str();
  gen->add_option("--max-len", synth.max_length, "Maximum source length")->capture_default_str();
  gen->add_option("--mapping-seed", synth.mapping_seed, "Seed of the token mapping")
      ->capture_default_str();
  gen->add_option("--swap", synth.swap_prob, "Fraction of swapping token types")
      ->capture_default_str();
  gen->add_option("--insert", synth.insert_prob, "Fraction of types with a function token")
      ->capture_default_str();
  gen->add_option("--train-size", synth.train_size, "Training pairs")->capture_default_str();
  gen->add_option("--dev-size", synth.dev_size, "Development pairs")->capture_default_str();
  gen->add_option("--test-size", synth.test_size, "Test pairs")->capture_default_str();

  // train
  simt_train_options topt;
  simt_train_options_init(&topt);
  std::string train_src, train_tgt, model_out, loss_csv, config_file, init_model;
  std::string path_mode;
  bool shared_vocab = false;
  Overrides ov;
  auto* tr = app.add_subcommand("train", "Train a model on a parallel corpus");
  tr->add_option("--src", train_src, "Source side")->required()->check(CLI::ExistingFile);
  tr->add_option("--tgt", train_tgt, "Target side")->required()->check(CLI::ExistingFile);
  tr->add_option("--model", model_out, "Output checkpoint path")->required();
  tr->add_option("--config", config_file, "key = value config file")->check(CLI::ExistingFile);
  tr->add_option("--loss-csv", loss_csv, "Per-step loss history CSV");
  tr->add_option("--init", init_model, "Continue training this checkpoint")
      ->check(CLI::ExistingFile);
  tr->add_flag("--shared-vocab", shared_vocab, "One vocabulary for both sides");
  tr->add_option("--path-mode", path_mode, "disturbed | multipath | full")
      ->check(CLI::IsMember({"disturbed", "multipath", "full"}));
  ov.add<std::int64_t>(tr, "--min-count", topt.min_count, "Rarer tokens map to <unk>");
  ov.add<int>(tr, "--d-model", topt.d_model, "Model dimension");
  ov.add<int>(tr, "--d-ff", topt.d_ff, "Feed-forward dimension");
  ov.add<int>(tr, "--layers", topt.layers, "Encoder and decoder layers");
  ov.add<int>(tr, "--heads", topt.heads, "Attention heads");
  ov.add<int>(tr, "--capsule-dim", topt.capsule_dim, "Capsule size (0: d/2)");
  ov.add<int>(tr, "--translated-capsules", topt.translated_capsules, "J");
  ov.add<int>(tr, "--untranslated-capsules", topt.untranslated_capsules, "N");
  ov.add<int>(tr, "--routing-iters", topt.routing_iters, "Routing iterations");
  ov.add<double>(tr, "--lambda-s", topt.lambda_segment, "Segment constraint weight");
  ov.add<double>(tr, "--lambda-t", topt.lambda_token, "Token constraint weight");
  ov.add<int>(tr, "--r", topt.r, "Disturbance bound");
  ov.add<double>(tr, "--lr", topt.lr, "Peak learning rate");
  ov.add<double>(tr, "--warmup-init-lr", topt.warmup_init_lr, "Initial learning rate");
  ov.add<std::int64_t>(tr, "--warmup", topt.warmup, "Warmup steps");
  ov.add<double>(tr, "--weight-decay", topt.weight_decay, "Decoupled weight decay");
  ov.add<double>(tr, "--label-smoothing", topt.label_smoothing, "Label smoothing");
  ov.add<double>(tr, "--dropout", topt.dropout, "Dropout rate");
  ov.add<std::size_t>(tr, "--max-tokens", topt.max_tokens, "Tokens per batch");
  ov.add<int>(tr, "--epochs", topt.max_epochs, "Epochs");
  ov.add<std::int64_t>(tr, "--max-steps", topt.max_steps, "Step limit (0: none)");
  ov.add<double>(tr, "--max-seconds", topt.max_seconds, "Time limit (0: none)");

  // translate
  simt_decode_options dopt;
  simt_decode_options_init(&dopt);
  std::string model_in, input, output, trace_dir, policy = "pe";
  auto* tl = app.add_subcommand("translate", "Translate a source file");
  tl->add_option("--model", model_in, "Checkpoint")->required()->check(CLI::ExistingFile);
  tl->add_option("--input", input, "Source sentences")->required()->check(CLI::ExistingFile);
  tl->add_option("--output", output, "Translations")->required();
  tl->add_option("--trace-dir", trace_dir, "Directory for per-sentence traces");
  tl->add_option("--policy", policy, "waitk | pe")
      ->check(CLI::IsMember({"waitk", "pe"}))
      ->capture_default_str();
  tl->add_option("--k", dopt.k, "Initial reads")->capture_default_str();
  tl->add_option("--rho", dopt.rho, "Degree-change threshold")->capture_default_str();
  tl->add_option("--r", dopt.r, "Maximum consecutive READs")->capture_default_str();
  tl->add_option("--max-len", dopt.max_len, "Maximum output length (0: 2I+10)")
      ->capture_default_str();

  // evaluate
  std::string hyp, ref, eval_src, traces, eval_model;
  int top_t = 0, top_s = 0;
  auto* ev = app.add_subcommand("evaluate", "Score translations");
  ev->add_option("--hyp", hyp, "Hypotheses")->required()->check(CLI::ExistingFile);
  ev->add_option("--ref", ref, "References")->required()->check(CLI::ExistingFile);
  ev->add_option("--src", eval_src, "Sources (needed for AL)")->check(CLI::ExistingFile);
  ev->add_option("--traces", traces, "Trace directory (needed for AL)")
      ->check(CLI::ExistingDirectory);
  ev->add_option("--model", eval_model, "Checkpoint (needed for R_T / R_S)")
      ->check(CLI::ExistingFile);
  ev->add_option("--top-t", top_t, "Top-n size for R_T (0: corpus default)");
  ev->add_option("--top-s", top_s, "Top-n size for R_S (0: corpus default)");

  // sweep
  std::string sw_model, sw_src, sw_tgt, sw_out;
  std::vector<int> waitk_ks{1, 3, 5, 7}, pe_ks{1, 3, 5, 7};
  std::vector<double> rhos{0.24};
  simt_sweep_options sopt;
  simt_sweep_options_init(&sopt);
  bool no_overlap = false;
  auto* sw = app.add_subcommand("sweep", "Latency-quality grid over policies");
  sw->add_option("--model", sw_model, "Checkpoint")->required()->check(CLI::ExistingFile);
  sw->add_option("--src", sw_src, "Source side")->required()->check(CLI::ExistingFile);
  sw->add_option("--tgt", sw_tgt, "Target side")->required()->check(CLI::ExistingFile);
  sw->add_option("--out", sw_out, "CSV path")->required();
  sw->add_option("--waitk-k", waitk_ks, "k values for wait-k")->delimiter(',')
      ->capture_default_str();
  sw->add_option("--pe-k", pe_ks, "k values for PE")->delimiter(',')->capture_default_str();
  sw->add_option("--rho", rhos, "rho values for PE")->delimiter(',')->capture_default_str();
  sw->add_option("--r", sopt.r, "Maximum consecutive READs")->capture_default_str();
  sw->add_option("--top-t", sopt.top_target, "Top-n size for R_T (0: corpus default)");
  sw->add_option("--top-s", sopt.top_source, "Top-n size for R_S (0: corpus default)");
  sw->add_option("--max-sentences", sopt.max_sentences, "Evaluate a prefix (0: all)");
  sw->add_flag("--no-overlap", no_overlap, "Skip R_T / R_S");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    if (auto nl = msg.find('\n'); nl != std::string::npos) msg.resize(nl);
    std::fprintf(stderr, "simtpe: error: %s\n", msg.c_str());
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  simt_status st = SIMT_OK;
  if (gen->parsed()) {
    synth.seed = seed;
    std::error_code ec;
    std::filesystem::create_directories(data_dir, ec);
    if (ec) {
      std::fprintf(stderr, "simtpe: error: cannot create '%s'\n", data_dir.c_str());
      return 1;
    }
    if ((st = simt_generate_corpus(&synth, data_dir.c_str())) != SIMT_OK) return fail(st);
    std::printf("wrote %s/{train,dev,test}.{src,tgt}\n", data_dir.c_str());
    return 0;
  }

  if (tr->parsed()) {
    if (!config_file.empty() &&
        (st = simt_train_options_load(&topt, config_file.c_str())) != SIMT_OK)
      return fail(st);
    ov.apply();
    if (!path_mode.empty()) {
      topt.path_mode = path_mode == "disturbed"   ? SIMT_PATH_DISTURBED
                       : path_mode == "multipath" ? SIMT_PATH_MULTIPATH
                                                  : SIMT_PATH_FULL;
    }
    topt.source_path = train_src.c_str();
    topt.target_path = train_tgt.c_str();
    topt.init_model_path = init_model.empty() ? nullptr : init_model.c_str();
    topt.shared_vocab = shared_vocab ? 1 : 0;
    topt.seed = seed;
    simt_train_report report{};
    st = simt_train(&topt, model_out.c_str(), loss_csv.empty() ? nullptr : loss_csv.c_str(),
                    &report);
    if (st != SIMT_OK) return fail(st);
    std::printf("steps %lld epochs %d nll %.4f total %.4f seconds %.1f\n",
                static_cast<long long>(report.steps), report.epochs, report.final_nll,
                report.final_total, report.seconds);
    return 0;
  }

  if (tl->parsed()) {
    dopt.policy = policy == "waitk" ? SIMT_POLICY_WAITK : SIMT_POLICY_PE;
    simt_model* model = nullptr;
    if ((st = simt_model_load(model_in.c_str(), &model)) != SIMT_OK) return fail(st);
    st = simt_translate_file(model, &dopt, input.c_str(), output.c_str(),
                             trace_dir.empty() ? nullptr : trace_dir.c_str());
    simt_model_free(model);
    return st == SIMT_OK ? 0 : fail(st);
  }

  if (ev->parsed()) {
    simt_model* model = nullptr;
    if (!eval_model.empty() && (st = simt_model_load(eval_model.c_str(), &model)) != SIMT_OK)
      return fail(st);
    simt_eval_report rep{};
    st = simt_evaluate_files(hyp.c_str(), ref.c_str(),
                             eval_src.empty() ? nullptr : eval_src.c_str(),
                             traces.empty() ? nullptr : traces.c_str(), model, top_t,
                             top_s, &rep);
    simt_model_free(model);
    if (st != SIMT_OK) return fail(st);
    std::printf("sentences\t%zu\nBLEU\t%s\nAL\t%s\nR_T\t%s\nR_S\t%s\n", rep.sentences,
                text(rep.bleu).c_str(), text(rep.al).c_str(), text(rep.r_target).c_str(),
                text(rep.r_source).c_str());
    return 0;
  }

  if (sw->parsed()) {
    sopt.waitk_ks = waitk_ks.data();
    sopt.waitk_count = waitk_ks.size();
    sopt.pe_ks = pe_ks.data();
    sopt.pe_count = pe_ks.size();
    sopt.rhos = rhos.data();
    sopt.rho_count = rhos.size();
    sopt.with_overlap = no_overlap ? 0 : 1;
    simt_model* model = nullptr;
    if ((st = simt_model_load(sw_model.c_str(), &model)) != SIMT_OK) return fail(st);
    st = simt_sweep(model, &sopt, sw_src.c_str(), sw_tgt.c_str(), sw_out.c_str());
    simt_model_free(model);
    if (st != SIMT_OK) return fail(st);
    std::printf("wrote %s\n", sw_out.c_str());
    return 0;
  }
  return 0;
}
