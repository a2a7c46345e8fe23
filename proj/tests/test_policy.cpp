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
#include <optional>

#include "oracles.hpp"
#include "simtpe/error.hpp"
#include "simtpe/ops.hpp"
#include "simtpe/policy.hpp"

using namespace simtpe;

namespace {

std::vector<int> random_source(std::mt19937_64& rng, int vocab, std::size_t min_len,
                               std::size_t max_len) {
  std::vector<int> ids(min_len + rng() % (max_len - min_len + 1));
  for (auto& id : ids) id = 4 + static_cast<int>(rng() % static_cast<unsigned>(vocab - 4));
  return ids;
}

ModelConfig policy_config() {
  ModelConfig c = oracle::micro_config(16, 16);
  c.d_model = 16;
  c.heads = 4;
  return c;
}

// Greedy decoding over the whole source through decode_step.
std::vector<int> greedy_oracle(const ModelParameters& p, std::vector<int> src, int max_len) {
  src.push_back(kEosId);
  Tensor z = encode(p, src);
  std::vector<int> out;
  while (static_cast<int>(out.size()) < max_len) {
    auto step = decode_step(p, out, z, static_cast<int>(src.size()));
    auto v = step.logits.data();
    const int tok = static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
    out.push_back(tok);
    if (tok == kEosId) break;
  }
  return out;
}

DegreeVector degrees(std::vector<double> v) {
  DegreeVector d;
  d.available = v.size();
  d.values = std::move(v);
  return d;
}

}  // namespace

TEST_CASE("wait-k schedule over a grid") {
  for (int k = 1; k <= 50; ++k)
    for (int t = 1; t <= 50; ++t)
      for (int I = 1; I <= 50; ++I) {
        const int expected = k + t - 1 < I ? k + t - 1 : I;
        REQUIRE(waitk_g(t, k, I) == expected);
      }
  CHECK(waitk_path(5, 4, 2).g == std::vector<int>{2, 3, 4, 5});
}

TEST_CASE("max select, degree differences and the write decision") {
  CHECK(max_select(std::vector<double>{0.1, 0.7, 0.3}) == 0.7);
  CHECK_THROWS_AS(max_select(std::vector<double>{}), InvalidArgument);
  auto d = delta_degree(degrees({0.3, 0.1}), degrees({0.3, 0.4}));
  CHECK(d[0] == 0.0);
  CHECK(d[1] == doctest::Approx(0.3));
  CHECK(pe_write_decision(degrees({0.3, 0.1}), degrees({0.3, 0.4}), 0.24));
  CHECK_FALSE(pe_write_decision(degrees({0.3, 0.1}), degrees({0.35, 0.2}), 0.24));
  // Decreases clip to zero.
  CHECK(delta_degree(degrees({0.9}), degrees({0.2}))[0] == 0.0);
  CHECK_THROWS_AS(delta_degree(degrees({0.1}), degrees({0.1, 0.2})), InvalidArgument);
}

TEST_CASE("policy config validation") {
  PolicyConfig c;
  CHECK_NOTHROW(c.validate());
  c.k = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = PolicyConfig{};
  c.rho = -0.1;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = PolicyConfig{};
  c.r = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("post-evaluation traces obey the read/write contract") {
  std::mt19937_64 rng(31);
  const double rho = 0.24;
  const int r = 2;
  int sentences = 0, post_prefix_reads = 0;
  while (sentences < 200) {
    ModelParameters p(policy_config(), rng());
    oracle::jitter(p, rng, 0.5);
    for (int s = 0; s < 10; ++s, ++sentences) {
      const auto src = random_source(rng, 16, 1, 10);
      const int I = static_cast<int>(src.size()) + 1;
      const int k = 1 + static_cast<int>(rng() % 4);
      auto res = pe_decode(p, src, k, rho, r);
      const int prefix = std::min(k, I);
      int reads = 0, run = 0, last_i = 0, last_t = 0;
      for (const auto& row : res.trace) {
        CHECK(row.i >= last_i);
        CHECK(row.max_delta >= 0.0);
        for (double v : row.degrees) {
          CHECK(v >= 0.0);
          CHECK(v <= 1.0 + 1e-12);
        }
        if (row.action == Action::kRead) {
          CHECK(last_i < I);
          CHECK(row.i == last_i + 1);
          CHECK(row.t == last_t);
          ++reads;
          if (reads > prefix) {
            ++run;
            ++post_prefix_reads;
            CHECK(run <= r);
            CHECK(row.candidate >= 0);
            CHECK(row.max_delta < rho);
            CHECK(row.degrees.size() == static_cast<std::size_t>(row.i - 1));
          } else {
            CHECK(row.candidate == -1);
          }
        } else {
          CHECK(row.t == last_t + 1);
          CHECK(row.candidate == res.target[static_cast<std::size_t>(row.t - 1)]);
          CHECK(row.degrees.size() == static_cast<std::size_t>(row.i));
          const bool forced = row.i == I || run == r;
          if (!forced) CHECK(row.max_delta >= rho);
          run = 0;
        }
        last_i = row.i;
        last_t = row.t;
      }
      CHECK(reads <= I);
      CHECK(reads >= prefix);
      CHECK(res.path.g.size() == res.target.size());
      for (std::size_t t = 0; t < res.path.g.size(); ++t) {
        CHECK(res.path.g[t] >= prefix);
        if (t) CHECK(res.path.g[t] >= res.path.g[t - 1]);
      }
      if (!res.truncated) CHECK(res.target.back() == kEosId);
    }
  }
  // The jittered models exercise both branches.
  CHECK(post_prefix_reads > 0);
}

TEST_CASE("rho = 0 never reads after the prefix") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    ModelParameters p(policy_config(), rng());
    oracle::jitter(p, rng, 0.5);
    const auto src = random_source(rng, 16, 1, 8);
    const int I = static_cast<int>(src.size()) + 1;
    const int k = 1 + static_cast<int>(rng() % 6);
    auto res = pe_decode(p, src, k, 0.0, 2);
    for (int g : res.path.g) CHECK(g == std::min(k, I));
  }
}

TEST_CASE("rho above one reads in runs of r until the source is exhausted") {
  ModelParameters p(policy_config(), 7);
  std::fill(p.out_b.mutable_data().begin(), p.out_b.mutable_data().end(), 0.0);
  p.out_b.mutable_data()[kEosId] = -1e9;
  const std::vector<int> src{4, 5, 6, 7};
  auto res = pe_decode(p, src, 1, 1.5, 2, 6);
  CHECK(res.path.g == std::vector<int>{3, 5, 5, 5, 5, 5});
  CHECK(res.truncated);
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = random_source(rng, 16, 1, 12);
    const int I = static_cast<int>(s.size()) + 1;
    const int k = 1 + static_cast<int>(rng() % 3), r = 1 + static_cast<int>(rng() % 3);
    auto out = pe_decode(p, s, k, 1.5, r, 4);
    const int prefix = std::min(k, I);
    for (std::size_t t = 0; t < out.path.g.size(); ++t)
      CHECK(out.path.g[t] == std::min(prefix + r * static_cast<int>(t + 1), I));
  }
}

TEST_CASE("wait-k with k >= I matches greedy decoding over the full source") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    ModelParameters p(policy_config(), rng());
    oracle::jitter(p, rng, 0.5);
    const auto src = random_source(rng, 16, 1, 8);
    auto res = fixed_decode(p, src, 100, 12);
    CHECK(res.target == greedy_oracle(p, src, 12));
    for (int g : res.path.g) CHECK(g == static_cast<int>(src.size()) + 1);
  }
}

TEST_CASE("wait-k follows its schedule") {
  std::mt19937_64 rng(13);
  ModelParameters p(policy_config(), 13);
  p.out_b.mutable_data()[kEosId] = -1e9;
  for (int trial = 0; trial < 20; ++trial) {
    const auto src = random_source(rng, 16, 1, 10);
    const int I = static_cast<int>(src.size()) + 1;
    const int k = 1 + static_cast<int>(rng() % 5);
    auto res = fixed_decode(p, src, k, 15);
    CHECK(res.target.size() == 15u);
    for (int t = 1; t <= 15; ++t) CHECK(res.path.g[t - 1] == waitk_g(t, k, I));
  }
}

TEST_CASE("written tokens reuse the evaluated candidate") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    ModelParameters p(policy_config(), rng());
    oracle::jitter(p, rng, 0.5);
    PolicyConfig cfg;
    cfg.k = 2;
    DecodeSession session(p, cfg);
    for (int id : random_source(rng, 16, 2, 8)) session.push_source(id);
    session.finish();
    while (!session.done()) {
      const bool past_prefix = session.source_read() >= 2 || session.source_complete();
      std::optional<Evaluation> ev;
      if (past_prefix && session.source_read() >= 1) ev = session.evaluate();
      auto res = session.step();
      if (res.step == DecodeSession::Step::kWrite) {
        REQUIRE(ev.has_value());
        CHECK(res.token == ev->candidate);
        CHECK(session.trace().back().max_delta == ev->max_delta);
      } else if (res.step == DecodeSession::Step::kRead && ev) {
        CHECK(session.trace().back().candidate == ev->candidate);
        CHECK_FALSE(ev->write);
      }
    }
  }
}

TEST_CASE("streaming input reproduces offline decoding") {
  std::mt19937_64 rng(41);
  for (PolicyKind kind : {PolicyKind::kPostEvaluation, PolicyKind::kWaitK}) {
    for (int trial = 0; trial < 15; ++trial) {
      ModelParameters p(policy_config(), rng());
      oracle::jitter(p, rng, 0.5);
      const auto src = random_source(rng, 16, 1, 9);
      PolicyConfig cfg;
      cfg.kind = kind;
      cfg.k = 1 + static_cast<int>(rng() % 3);
      cfg.max_target_len = 20;
      auto offline = decode_sentence(p, src, cfg);

      DecodeSession session(p, cfg);
      std::size_t next = 0;
      int need_input = 0;
      while (true) {
        auto res = session.step();
        if (res.step == DecodeSession::Step::kDone) break;
        if (res.step == DecodeSession::Step::kNeedInput) {
          ++need_input;
          if (next < src.size()) session.push_source(src[next++]);
          else session.finish();
        }
      }
      CHECK(need_input > 0);
      CHECK(session.target() == offline.target);
      CHECK(session.path().g == offline.path.g);
      REQUIRE(session.trace().size() == offline.trace.size());
      for (std::size_t s = 0; s < offline.trace.size(); ++s) {
        CHECK(session.trace()[s].action == offline.trace[s].action);
        CHECK(session.trace()[s].max_delta == offline.trace[s].max_delta);
      }
    }
  }
}

TEST_CASE("session input errors") {
  ModelParameters p(policy_config(), 3);
  DecodeSession session(p, PolicyConfig{});
  CHECK(session.step().step == DecodeSession::Step::kNeedInput);
  CHECK_THROWS_AS(session.push_source(16), InvalidArgument);
  CHECK_THROWS_AS(session.push_source(-1), InvalidArgument);
  session.push_source(5);
  session.finish();
  CHECK_THROWS_AS(session.push_source(5), InvalidArgument);
  CHECK_THROWS_AS(decode_sentence(p, std::vector<int>{}, PolicyConfig{}), InvalidArgument);
}

TEST_CASE("decoding stops at the default length limit") {
  ModelParameters p(policy_config(), 4);
  p.out_b.mutable_data()[kEosId] = -1e9;
  const std::vector<int> src{4, 5, 6};
  auto res = pe_decode(p, src, 1, 0.24, 2);
  CHECK(res.truncated);
  CHECK(res.target.size() == 2u * 4u + 10u);
  ModelConfig tiny = policy_config();
  tiny.max_positions = 8;
  ModelParameters q(tiny, 4);
  q.out_b.mutable_data()[kEosId] = -1e9;
  CHECK(fixed_decode(q, src, 2).target.size() == 7u);
}

TEST_CASE("trace files round trip") {
  ModelParameters p(policy_config(), 8);
  std::mt19937_64 rng(8);
  oracle::jitter(p, rng, 0.5);
  auto res = pe_decode(p, std::vector<int>{4, 9, 12, 5, 6}, 1, 0.24, 2);
  const auto path = (std::filesystem::temp_directory_path() / "simtpe_trace.tsv").string();
  write_trace(path, res.trace);
  auto back = read_trace(path);
  REQUIRE(back.size() == res.trace.size());
  for (std::size_t s = 0; s < back.size(); ++s) {
    CHECK(back[s].step == static_cast<int>(s) + 1);
    CHECK(back[s].action == res.trace[s].action);
    CHECK(back[s].i == res.trace[s].i);
    CHECK(back[s].t == res.trace[s].t);
    CHECK(back[s].candidate == res.trace[s].candidate);
    CHECK(back[s].max_delta == doctest::Approx(res.trace[s].max_delta).epsilon(1e-5));
    CHECK(back[s].degrees.size() == res.trace[s].degrees.size());
  }
  {
    std::ofstream os(path);
    os << "step\taction\ti\tt\tcandidate\tmax_delta\tdegrees\n1\tX\t1\t0\t-1\t0\t\n";
  }
  CHECK_THROWS_AS(read_trace(path), FormatError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_trace(path), IoError);
}
