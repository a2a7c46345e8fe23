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

// Exercises the shared library through its C interface only.

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "simtpe/simtpe.h"

namespace fs = std::filesystem;

namespace {

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream is(path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) out.push_back(line);
  return out;
}

struct Workspace {
  fs::path dir;
  simt_model* model = nullptr;

  Workspace() {
    dir = fs::temp_directory_path() / "simtpe_capi_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    simt_synth_options so;
    simt_synth_options_init(&so);
    so.vocab_size = 16;
    so.train_size = 80;
    so.dev_size = 5;
    so.test_size = 12;
    REQUIRE(simt_generate_corpus(&so, dir.c_str()) == SIMT_OK);

    simt_train_options to;
    simt_train_options_init(&to);
    const std::string src = (dir / "train.src").string(), tgt = (dir / "train.tgt").string();
    to.source_path = src.c_str();
    to.target_path = tgt.c_str();
    to.min_count = 1;
    to.d_model = 16;
    to.d_ff = 32;
    to.layers = 1;
    to.heads = 2;
    to.max_tokens = 60;
    to.max_epochs = 2;
    to.warmup = 10;
    simt_train_report report;
    const std::string model_path = (dir / "model.ckpt").string();
    const std::string loss_path = (dir / "loss.csv").string();
    REQUIRE(simt_train(&to, model_path.c_str(), loss_path.c_str(), &report) == SIMT_OK);
    CHECK(report.epochs == 2);
    CHECK(report.steps > 0);
    CHECK(std::isfinite(report.final_total));
    REQUIRE(simt_model_load(model_path.c_str(), &model) == SIMT_OK);
  }
  ~Workspace() {
    simt_model_free(model);
    fs::remove_all(dir);
  }
  std::string path(const char* name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("status strings and versions") {
  CHECK(std::strcmp(simt_status_string(SIMT_OK), "ok") == 0);
  CHECK(std::strlen(simt_status_string(SIMT_DIVERGED)) > 0);
  CHECK(std::strcmp(simt_version(), "0.1.0") == 0);
}

TEST_CASE("errors are reported through status codes") {
  simt_model* model = nullptr;
  CHECK(simt_model_load("/nonexistent/model.ckpt", &model) == SIMT_IO_ERROR);
  CHECK(model == nullptr);
  CHECK(std::strlen(simt_last_error()) > 0);
  CHECK(simt_model_load(nullptr, &model) == SIMT_INVALID_ARGUMENT);

  simt_synth_options so;
  simt_synth_options_init(&so);
  so.vocab_size = 4;
  CHECK(simt_generate_corpus(&so, fs::temp_directory_path().c_str()) ==
        SIMT_INVALID_ARGUMENT);
  CHECK(std::string(simt_last_error()).find("vocab") != std::string::npos);
  simt_synth_options_init(&so);
  CHECK(simt_generate_corpus(&so, "/nonexistent/dir") == SIMT_IO_ERROR);

  simt_train_options to;
  simt_train_options_init(&to);
  const auto cfg = (fs::temp_directory_path() / "simtpe_capi_bad.cfg").string();
  {
    std::ofstream os(cfg);
    os << "bogus_key = 3\n";
  }
  CHECK(simt_train_options_load(&to, cfg.c_str()) == SIMT_FORMAT_ERROR);
  CHECK(std::string(simt_last_error()).find("bogus_key") != std::string::npos);
  fs::remove(cfg);
  CHECK(simt_train(&to, "/tmp/x.ckpt", nullptr, nullptr) == SIMT_INVALID_ARGUMENT);
}

TEST_CASE("end-to-end through the C interface") {
  Workspace ws;
  simt_model_info info;
  REQUIRE(simt_model_info_get(ws.model, &info) == SIMT_OK);
  CHECK(info.d_model == 16);
  CHECK(info.layers == 1);
  CHECK(info.parameter_count > 0);
  CHECK(fs::exists(ws.path("model.ckpt.src.vocab")));
  CHECK(read_lines(ws.path("loss.csv"))[0] == "step,nll,loss_S,loss_T,total,lr");

  simt_decode_options dopt;
  simt_decode_options_init(&dopt);
  CHECK(dopt.policy == SIMT_POLICY_PE);
  CHECK(dopt.rho == doctest::Approx(0.24));
  CHECK(dopt.r == 2);
  const auto hyp = ws.path("test.hyp"), traces = ws.path("traces");
  fs::create_directories(traces);
  REQUIRE(simt_translate_file(ws.model, &dopt, ws.path("test.src").c_str(), hyp.c_str(),
                              traces.c_str()) == SIMT_OK);
  CHECK(read_lines(hyp).size() == 12u);
  CHECK(fs::exists(fs::path(traces) / "000001.tsv"));
  CHECK(fs::exists(fs::path(traces) / "000012.tsv"));
  CHECK(read_lines(fs::path(traces) / "000001.tsv")[0] ==
        "step\taction\ti\tt\tcandidate\tmax_delta\tdegrees");

  simt_eval_report rep;
  REQUIRE(simt_evaluate_files(hyp.c_str(), ws.path("test.tgt").c_str(), nullptr, nullptr,
                              nullptr, 0, 0, &rep) == SIMT_OK);
  CHECK(rep.sentences == 12u);
  CHECK(rep.bleu >= 0.0);
  CHECK(std::isnan(rep.al));
  REQUIRE(simt_evaluate_files(hyp.c_str(), ws.path("test.tgt").c_str(),
                              ws.path("test.src").c_str(), traces.c_str(), ws.model, 0, 0,
                              &rep) == SIMT_OK);
  CHECK(rep.al >= 1.0);
  CHECK(rep.r_target >= 0.0);
  CHECK(rep.r_source <= 1.0);

  // Reference against itself scores 100.
  REQUIRE(simt_evaluate_files(ws.path("test.tgt").c_str(), ws.path("test.tgt").c_str(),
                              nullptr, nullptr, nullptr, 0, 0, &rep) == SIMT_OK);
  CHECK(rep.bleu == doctest::Approx(100.0));
  CHECK(simt_evaluate_files(hyp.c_str(), ws.path("train.tgt").c_str(), nullptr, nullptr,
                            nullptr, 0, 0, &rep) == SIMT_FORMAT_ERROR);

  simt_sweep_options sw;
  simt_sweep_options_init(&sw);
  const int ks[] = {1, 3};
  sw.waitk_ks = ks;
  sw.waitk_count = 2;
  sw.pe_ks = ks;
  sw.pe_count = 2;
  const auto csv = ws.path("sweep.csv");
  REQUIRE(simt_sweep(ws.model, &sw, ws.path("test.src").c_str(), ws.path("test.tgt").c_str(),
                     csv.c_str()) == SIMT_OK);
  const auto rows = read_lines(csv);
  REQUIRE(rows.size() == 5u);
  CHECK(rows[0] == "policy,k,rho,AL,BLEU,R_T,R_S,sentences");
  double last_al = -1.0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::stringstream ss(rows[i]);
    std::string policy, k, rho, al;
    std::getline(ss, policy, ',');
    std::getline(ss, k, ',');
    std::getline(ss, rho, ',');
    std::getline(ss, al, ',');
    CHECK((policy == "waitk" ? rho == "NA" : rho == "0.24"));
    CHECK(std::stod(al) >= last_al);
    last_al = std::stod(al);
  }

  // Wait-k with a huge k equals full-sentence decoding of the same file.
  dopt.policy = SIMT_POLICY_WAITK;
  dopt.k = 999;
  const auto full = ws.path("full.hyp");
  REQUIRE(simt_translate_file(ws.model, &dopt, ws.path("test.src").c_str(), full.c_str(),
                              nullptr) == SIMT_OK);

  // Streaming one source line reproduces the file output.
  const auto first_src = read_lines(ws.path("test.src"))[0];
  simt_session* session = nullptr;
  REQUIRE(simt_session_create(ws.model, &dopt, &session) == SIMT_OK);
  std::stringstream words(first_src);
  std::string w, out;
  simt_action action;
  const char* token = nullptr;
  bool finished = false;
  while (true) {
    REQUIRE(simt_session_step(session, &action, &token) == SIMT_OK);
    if (action == SIMT_ACTION_DONE) break;
    if (action == SIMT_ACTION_NEED_INPUT) {
      if (words >> w) {
        REQUIRE(simt_session_push(session, w.c_str()) == SIMT_OK);
      } else {
        REQUIRE_FALSE(finished);
        REQUIRE(simt_session_finish(session) == SIMT_OK);
        finished = true;
      }
    } else if (action == SIMT_ACTION_WRITE) {
      REQUIRE(token != nullptr);
      if (std::strcmp(token, "<eos>") != 0) out += (out.empty() ? "" : " ") + std::string(token);
    }
  }
  CHECK(out == read_lines(full)[0]);
  CHECK(simt_session_push(session, "s1") == SIMT_INVALID_ARGUMENT);
  simt_session_free(session);

  // Save and reload produce identical translations.
  const auto copy = ws.path("copy.ckpt");
  REQUIRE(simt_model_save(ws.model, copy.c_str()) == SIMT_OK);
  simt_model* again = nullptr;
  REQUIRE(simt_model_load(copy.c_str(), &again) == SIMT_OK);
  const auto full2 = ws.path("full2.hyp");
  REQUIRE(simt_translate_file(again, &dopt, ws.path("test.src").c_str(), full2.c_str(),
                              nullptr) == SIMT_OK);
  CHECK(read_lines(full) == read_lines(full2));
  simt_model_free(again);

  dopt.k = 0;
  CHECK(simt_session_create(ws.model, &dopt, &session) == SIMT_INVALID_ARGUMENT);
}
