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

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>

#include "oracles.hpp"
#include "simtpe/error.hpp"
#include "simtpe/ops.hpp"
#include "simtpe/training.hpp"

using namespace simtpe;

namespace {

using Matrix = std::vector<std::vector<double>>;

Matrix to_matrix(const Tensor& t) {
  Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

std::vector<double> row_times(const std::vector<double>& x, const Matrix& w) {
  std::vector<double> out(w[0].size(), 0.0);
  for (std::size_t a = 0; a < x.size(); ++a)
    for (std::size_t b = 0; b < out.size(); ++b) out[b] += x[a] * w[a][b];
  return out;
}

std::vector<double> average(const Matrix& rows, std::size_t begin, std::size_t end,
                            std::size_t dim) {
  std::vector<double> out(dim, 0.0);
  if (begin >= end) return out;
  for (std::size_t r = begin; r < end; ++r)
    for (std::size_t k = 0; k < dim; ++k) out[k] += rows[r][k] / static_cast<double>(end - begin);
  return out;
}

std::vector<double> log_softmax(const std::vector<double>& x) {
  double mx = *std::max_element(x.begin(), x.end()), z = 0.0;
  for (double v : x) z += std::exp(v - mx);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - mx - std::log(z);
  return out;
}

ModelConfig small_config() {
  ModelConfig c = oracle::micro_config(10, 10);
  c.d_model = 4;
  c.d_ff = 8;
  c.heads = 2;
  return c;
}

double segment_oracle(const ModelParameters& p, const Tensor& phi_t, const Tensor& phi_u,
                      const Tensor& h, const Tensor& z, const TranslationPath& path) {
  const auto H = to_matrix(h), Z = to_matrix(z), PT = to_matrix(phi_t), PU = to_matrix(phi_u);
  const auto WT = to_matrix(p.seg_translated), WE = to_matrix(p.seg_unread),
             WD = to_matrix(p.seg_untranslated);
  const std::size_t m = H.size(), n = Z.size(), d = H[0].size();
  double loss = 0.0;
  for (std::size_t t = 0; t < m; ++t) {
    const auto ht = row_times(average(H, 0, t, d), WT);
    const auto hu = row_times(average(H, t, m, d), WD);
    const auto zu = row_times(average(Z, static_cast<std::size_t>(path.g[t]), n, d), WE);
    for (std::size_t k = 0; k < ht.size(); ++k) loss += std::pow(PT[t][k] - ht[k], 2);
    for (std::size_t k = 0; k < hu.size(); ++k) loss += std::pow(PU[t][k] + zu[k] - hu[k], 2);
  }
  return loss / static_cast<double>(m);
}

double token_oracle(const ModelParameters& p, const Tensor& phi_t, const Tensor& phi_u,
                    const std::vector<int>& x, const std::vector<int>& y,
                    const TranslationPath& path) {
  const auto PT = to_matrix(phi_t), PU = to_matrix(phi_u);
  const auto VD = to_matrix(p.tok_tgt_w), VE = to_matrix(p.tok_src_w);
  const auto bd = to_matrix(p.tok_tgt_b)[0], be = to_matrix(p.tok_src_b)[0];
  const std::size_t m = PT.size();
  double total = 0.0;
  for (std::size_t t = 0; t < m; ++t) {
    auto ld = row_times(PT[t], VD);
    for (std::size_t v = 0; v < ld.size(); ++v) ld[v] += bd[v];
    ld = log_softmax(ld);
    std::vector<double> both = PT[t];
    both.insert(both.end(), PU[t].begin(), PU[t].end());
    auto le = row_times(both, VE);
    for (std::size_t v = 0; v < le.size(); ++v) le[v] += be[v];
    le = log_softmax(le);
    double pd = 0.0, pe = 0.0;
    for (std::size_t tau = 0; tau < t; ++tau) pd += ld[y[tau]] / static_cast<double>(t);
    const auto g = static_cast<std::size_t>(path.g[t]);
    for (std::size_t i = 0; i < g; ++i) pe += le[x[i]] / static_cast<double>(g);
    total += pd + pe;
  }
  return -total / static_cast<double>(m);
}

std::vector<SentencePair> copy_corpus(std::size_t n, int vocab, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<SentencePair> out;
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<int> ids(3 + rng() % 4);
    for (auto& id : ids) id = 4 + static_cast<int>(rng() % static_cast<unsigned>(vocab - 4));
    out.push_back({ids, ids});
  }
  return out;
}

}  // namespace

TEST_CASE("averaging matrices follow the empty-average conventions") {
  Tensor a = translated_average_matrix(3);
  CHECK(to_matrix(a) == Matrix{{0, 0, 0}, {1, 0, 0}, {0.5, 0.5, 0}});
  Tensor u = untranslated_average_matrix(3);
  CHECK(u.at(0, 0) == doctest::Approx(1.0 / 3));
  CHECK(u.at(1, 0) == 0.0);
  CHECK(u.at(2, 2) == 1.0);
  TranslationPath path;
  path.g = {1, 3, 4};
  Tensor z = unread_average_matrix(path, 4);
  CHECK(to_matrix(z) == Matrix{{0, 1.0 / 3, 1.0 / 3, 1.0 / 3}, {0, 0, 0, 1}, {0, 0, 0, 0}});
}

TEST_CASE("segment loss matches a scripted evaluation") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    ModelParameters p(small_config(), seed);
    Tensor h = oracle::random_tensor({3, 4}, rng, 1.0, false);
    Tensor z = oracle::random_tensor({4, 4}, rng, 1.0, false);
    Tensor pt = oracle::random_tensor({3, 4}, rng, 1.0, false);
    Tensor pu = oracle::random_tensor({3, 4}, rng, 1.0, false);
    TranslationPath path;
    path.g = {1 + static_cast<int>(rng() % 2), 3, 4};
    CHECK(segment_loss(p, pt, pu, h, z, path).item() ==
          doctest::Approx(segment_oracle(p, pt, pu, h, z, path)).epsilon(1e-12));
  }
}

TEST_CASE("segment loss is zero for exactly fitting capsules") {
  std::mt19937_64 rng(3);
  ModelParameters p(small_config(), 3);
  Tensor h = oracle::random_tensor({3, 4}, rng, 1.0, false);
  Tensor z = oracle::random_tensor({4, 4}, rng, 1.0, false);
  TranslationPath path;
  path.g = {2, 2, 3};
  Tensor pt = matmul(matmul(translated_average_matrix(3), h), p.seg_translated);
  Tensor pu = sub(matmul(matmul(untranslated_average_matrix(3), h), p.seg_untranslated),
                  matmul(matmul(unread_average_matrix(path, 4), z), p.seg_unread));
  CHECK(segment_loss(p, pt, pu, h, z, path).item() == doctest::Approx(0.0).epsilon(1e-20));
}

TEST_CASE("segment loss with M = 1 charges the full translated capsule") {
  std::mt19937_64 rng(4);
  ModelParameters p(small_config(), 4);
  Tensor h = oracle::random_tensor({1, 4}, rng, 1.0, false);
  Tensor z = oracle::random_tensor({2, 4}, rng, 1.0, false);
  Tensor pt = oracle::random_tensor({1, 4}, rng, 1.0, false);
  TranslationPath path;
  path.g = {2};
  Tensor pu = sub(matmul(h, p.seg_untranslated), Tensor::zeros({1, 4}));
  CHECK(segment_loss(p, pt, pu, h, z, path).item() ==
        doctest::Approx(sum_squares(pt).item()).epsilon(1e-12));
}

TEST_CASE("token loss matches a scripted evaluation") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    ModelParameters p(small_config(), seed);
    oracle::jitter(p, rng);
    Tensor pt = oracle::random_tensor({3, 4}, rng, 1.0, false);
    Tensor pu = oracle::random_tensor({3, 4}, rng, 1.0, false);
    std::vector<int> x{4, 7, 9, 2}, y{5, 8, 2};
    TranslationPath path;
    path.g = {1 + static_cast<int>(rng() % 4), 4, 4};
    path.g[1] = std::max(path.g[0], 3);
    CHECK(token_loss(p, pt, pu, x, y, path).item() ==
          doctest::Approx(token_oracle(p, pt, pu, x, y, path)).epsilon(1e-12));
  }
}

TEST_CASE("token loss with uniform projections is log V per term") {
  ModelParameters p(small_config(), 6);
  for (Tensor t : {p.tok_tgt_w, p.tok_tgt_b, p.tok_src_w, p.tok_src_b})
    std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
  std::mt19937_64 rng(6);
  Tensor pt = oracle::random_tensor({3, 4}, rng, 1.0, false);
  Tensor pu = oracle::random_tensor({3, 4}, rng, 1.0, false);
  std::vector<int> x{4, 7, 2}, y{5, 8, 2};
  TranslationPath path;
  path.g = {1, 2, 3};
  // t = 1 has no p_d term; every other term is log(1/10).
  const double expected = -(5.0 * std::log(1.0 / 10.0)) / 3.0;
  CHECK(token_loss(p, pt, pu, x, y, path).item() == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("total loss composes its terms") {
  ModelConfig c = oracle::micro_config(12, 12);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    ModelParameters p(c, seed);
    std::vector<int> x{4, 9, 11, kEosId}, y{6, 5, 10, kEosId};
    auto path = sample_disturbed_path(4, 4, 2, rng);
    TrainConfig tc;
    tc.lambda_segment = 0.0;
    tc.lambda_token = 0.0;
    auto plain = total_loss(p, x, y, path, tc);
    auto fw = forward_sentence(p, x, y, path, {}, true);
    const double nll = cross_entropy(fw.logits, y, tc.label_smoothing).item();
    CHECK(plain.total.item() == nll);
    tc.lambda_segment = 0.7;
    tc.lambda_token = 1.3;
    auto full = total_loss(p, x, y, path, tc);
    const double s = segment_loss(p, fw.translated, fw.untranslated, fw.decoder_states,
                                  fw.encoder_states, path).item();
    const double t = token_loss(p, fw.translated, fw.untranslated, x, y, path).item();
    CHECK(std::abs(full.total.item() - (nll + 0.7 * s + 1.3 * t)) <= 1e-12);
    CHECK(full.segment.item() == doctest::Approx(s).epsilon(1e-14));
    CHECK(full.token.item() == doctest::Approx(t).epsilon(1e-14));
  }
}

TEST_CASE("full-sentence paths give finite losses") {
  ModelParameters p(oracle::micro_config(12, 12), 1);
  std::vector<int> x{4, 9, kEosId}, y{6, 5, 10, 7, kEosId};
  auto lb = total_loss(p, x, y, full_sentence_path(3, 5), TrainConfig{});
  CHECK(std::isfinite(lb.total.item()));
  CHECK(std::isfinite(lb.segment.item()));
}

TEST_CASE("total loss gradients match finite differences for every parameter group") {
  ModelConfig c = oracle::micro_config();
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    std::mt19937_64 rng(seed);
    ModelParameters p(c, seed);
    oracle::jitter(p, rng);
    std::vector<int> x{4, 7, 8, kEosId}, y{5, 6, 8, kEosId};
    auto path = sample_disturbed_path(4, 4, 2, rng);
    TrainConfig tc;
    auto check = oracle::check_gradients(p.tensors(), [&] {
      return total_loss(p, x, y, path, tc).total;
    });
    INFO("seed " << seed);
    CHECK_MESSAGE(check.ok, check.failure);
  }
}

TEST_CASE("padding never receives gradient") {
  std::vector<SentencePair> pairs{{{4, 5, 6, 7, 8}, {5, 6}}, {{4, 5}, {6, 7, 8, 9}}};
  auto batches = make_batches(pairs, 100, 1);
  REQUIRE(batches.size() == 1);
  const Batch& b = batches[0];
  ModelParameters p(oracle::micro_config(12, 12), 2);
  p.zero_grad();
  Graph g;
  GraphScope scope(g);
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t r = 0; r < b.size(); ++r) {
    for (int id : b.source_row(r)) CHECK(id != kPadId);
    for (int id : b.target_row(r)) CHECK(id != kPadId);
    const auto x = with_eos(b.source_row(r));
    const auto y = with_eos(b.target_row(r));
    total = add(total, total_loss(p, x, y, waitk_path(static_cast<int>(x.size()),
                                                      static_cast<int>(y.size()), 2),
                                  TrainConfig{}).total);
  }
  g.backward(total);
  const auto grad_src = p.src_embed.grad();
  const auto grad_tgt = p.tgt_embed.grad();
  for (std::size_t j = 0; j < 8; ++j) {
    CHECK(grad_src[kPadId * 8 + j] == 0.0);
    CHECK(grad_tgt[kPadId * 8 + j] == 0.0);
  }
  CHECK(std::any_of(grad_src.begin(), grad_src.end(), [](double v) { return v != 0.0; }));
}

TEST_CASE("disturbed paths with forced increments have closed forms") {
  for (int I = 1; I <= 12; ++I) {
    for (int k = 1; k <= I; ++k) {
      const int M = 10;
      std::vector<int> zeros(M, 0), ones(M, 1);
      auto p0 = disturbed_path(I, k, zeros);
      auto p1 = disturbed_path(I, k, ones);
      for (int t = 1; t <= M; ++t) {
        CHECK(p0.g[t - 1] == std::min(k, I));
        CHECK(p1.g[t - 1] == std::min(k + t, I));
      }
      if (k == I) {
        std::vector<int> twos(M, 2);
        for (int gt : disturbed_path(I, k, twos).g) CHECK(gt == I);
      }
    }
  }
}

TEST_CASE("sampled increments and initial reads are uniform") {
  std::mt19937_64 rng(2024);
  const int I = 20, M = 20, r = 2, samples = 100000;
  std::vector<double> k_counts(I, 0.0), gamma_counts(r + 1, 0.0);
  for (int s = 0; s < samples; ++s) {
    auto path = sample_disturbed_path(I, M, r, rng);
    path.validate(I);
    ++k_counts[static_cast<std::size_t>(path.k - 1)];
    for (std::size_t t = 1; t < path.g.size(); ++t) {
      if (path.g[t - 1] + r < I) ++gamma_counts[static_cast<std::size_t>(path.g[t] - path.g[t - 1])];
    }
  }
  auto chi2 = [](const std::vector<double>& counts) {
    double n = 0.0;
    for (double c : counts) n += c;
    const double e = n / static_cast<double>(counts.size());
    double x = 0.0;
    for (double c : counts) x += (c - e) * (c - e) / e;
    return x;
  };
  // 1% critical values for 19 and 2 degrees of freedom.
  CHECK(chi2(k_counts) < 36.191);
  CHECK(chi2(gamma_counts) < 9.210);
}

TEST_CASE("training path modes") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int I = 1 + static_cast<int>(rng() % 10), M = 1 + static_cast<int>(rng() % 10);
    auto mp = sample_training_path(PathMode::kMultiPath, I, M, 2, rng);
    for (int t = 1; t <= M; ++t) CHECK(mp.g[t - 1] == waitk_g(t, mp.k, I));
    auto full = sample_training_path(PathMode::kFullSentence, I, M, 2, rng);
    for (int gt : full.g) CHECK(gt == I);
  }
  CHECK(parse_path_mode("multipath") == PathMode::kMultiPath);
  CHECK_THROWS_AS(parse_path_mode("greedy"), InvalidArgument);
}

TEST_CASE("training is deterministic for a seed") {
  auto corpus = copy_corpus(30, 12, 5);
  ModelConfig mc = oracle::micro_config(12, 12);
  TrainConfig tc;
  tc.max_tokens = 20;
  tc.max_epochs = 2;
  tc.warmup = 10;
  tc.seed = 9;
  auto a = train(corpus, mc, tc);
  auto b = train(corpus, mc, tc);
  REQUIRE(a.history.size() == b.history.size());
  REQUIRE(!a.history.empty());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].total == b.history[i].total);
    CHECK(a.history[i].nll == b.history[i].nll);
  }
  CHECK(a.epochs_completed == 2);
  tc.seed = 10;
  auto c = train(corpus, mc, tc);
  CHECK(c.history[0].total != a.history[0].total);
}

TEST_CASE("copy task drops below 0.5 nats per token within 2000 steps") {
  auto corpus = copy_corpus(100, 14, 1);
  ModelConfig mc = oracle::micro_config(14, 14);
  mc.d_model = 32;
  mc.d_ff = 64;
  mc.heads = 4;
  TrainConfig tc;
  tc.lambda_segment = 0.0;
  tc.lambda_token = 0.0;
  tc.path_mode = PathMode::kFullSentence;
  tc.label_smoothing = 0.0;
  tc.dropout = 0.0;
  tc.peak_lr = 3e-3;
  tc.warmup = 100;
  tc.max_tokens = 48;
  tc.max_steps = 2000;
  tc.max_epochs = 1000;
  double best = std::numeric_limits<double>::infinity();
  std::size_t seen = 0;
  auto result = train(corpus, mc, tc, nullptr,
                      [&](int, const ModelParameters&, const TrainResult& r) {
                        double s = 0.0;
                        for (std::size_t i = seen; i < r.history.size(); ++i) s += r.history[i].nll;
                        best = std::min(best, s / static_cast<double>(r.history.size() - seen));
                        seen = r.history.size();
                        return best >= 0.5;
                      });
  CHECK(result.history.size() <= 2000);
  CHECK(best < 0.5);
}

TEST_CASE("non-finite losses abort training") {
  auto corpus = copy_corpus(4, 12, 2);
  ModelConfig mc = oracle::micro_config(12, 12);
  ModelParameters init(mc, 1);
  init.out_w.mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig tc;
  CHECK_THROWS_AS(train(corpus, mc, tc, &init), DivergenceError);
}

TEST_CASE("train config files and loss history") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto cfg = (dir / "simtpe_train.cfg").string();
  {
    std::ofstream os(cfg);
    os << "# desk scale\nlr = 0.002\nwarmup = 300  # steps\nd_model = 32\n"
          "path_mode = multipath\nlambda_token = 0.5\n\n";
  }
  ModelConfig mc;
  TrainConfig tc;
  load_train_config(cfg, mc, tc);
  CHECK(tc.peak_lr == 0.002);
  CHECK(tc.warmup == 300);
  CHECK(mc.d_model == 32);
  CHECK(tc.path_mode == PathMode::kMultiPath);
  CHECK(tc.lambda_token == 0.5);
  {
    std::ofstream os(cfg);
    os << "learning_rate = 1\n";
  }
  CHECK_THROWS_AS(load_train_config(cfg, mc, tc), FormatError);
  {
    std::ofstream os(cfg);
    os << "warmup = lots\n";
  }
  CHECK_THROWS_AS(load_train_config(cfg, mc, tc), FormatError);
  std::filesystem::remove(cfg);

  const auto csv = (dir / "simtpe_loss.csv").string();
  std::vector<TrainRecord> hist{{1, 2.5, 0.1, 3.0, 5.6, 1e-4}};
  write_loss_history(csv, hist);
  std::ifstream is(csv);
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  CHECK(header == "step,nll,loss_S,loss_T,total,lr");
  CHECK(row.rfind("1,2.5,0.1,3,5.6,", 0) == 0);
  std::filesystem::remove(csv);
}
