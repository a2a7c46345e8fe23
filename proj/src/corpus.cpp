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

#include "simtpe/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "simtpe/error.hpp"
#include "simtpe/model.hpp"

namespace simtpe {

Vocab::Vocab() {
  add(kPadToken, 0);
  add(kBosToken, 0);
  add(kEosToken, 0);
  add(kUnkToken, 0);
}

int Vocab::add(const std::string& token, std::int64_t freq) {
  auto [it, inserted] = ids_.emplace(token, static_cast<int>(tokens_.size()));
  if (!inserted) throw InvalidArgument("duplicate vocabulary token '" + token + "'");
  tokens_.push_back(token);
  freqs_.push_back(freq);
  return it->second;
}

Vocab Vocab::build(const std::unordered_map<std::string, std::int64_t>& counts,
                   std::int64_t min_count) {
  std::vector<std::pair<std::string, std::int64_t>> entries;
  for (const auto& [tok, n] : counts) {
    if (n >= min_count) entries.emplace_back(tok, n);
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocab v;
  for (const auto& [tok, n] : entries) {
    if (v.contains(tok)) continue;  // reserved spellings in the data
    v.add(tok, n);
  }
  return v;
}

Vocab Vocab::build(std::span<const Sentence> sentences, std::int64_t min_count) {
  std::unordered_map<std::string, std::int64_t> counts;
  for (const auto& s : sentences)
    for (const auto& w : s) ++counts[w];
  return build(counts, min_count);
}

void Vocab::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    os << tokens_[i] << ' ' << freqs_[i] << '\n';
  if (!os) throw IoError("failed writing '" + path + "'");
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open vocabulary '" + path + "'");
  Vocab v;
  v.tokens_.clear();
  v.freqs_.clear();
  v.ids_.clear();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tok;
    std::int64_t freq = 0;
    if (!(ls >> tok >> freq)) {
      throw FormatError(path + ":" + std::to_string(lineno) +
                        ": expected 'token frequency'");
    }
    v.add(tok, freq);
  }
  const char* reserved[] = {kPadToken, kBosToken, kEosToken, kUnkToken};
  for (int i = 0; i < 4; ++i) {
    if (v.size() <= i || v.tokens_[static_cast<std::size_t>(i)] != reserved[i]) {
      throw FormatError(path + ": reserved token " + reserved[i] +
                        " must have id " + std::to_string(i));
    }
  }
  return v;
}

int Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnkId : it->second;
}

bool Vocab::contains(const std::string& token) const {
  return ids_.count(token) > 0;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) {
    throw InvalidArgument("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(const Sentence& words) const {
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(id(w));
  return ids;
}

Sentence Vocab::decode(std::span<const int> ids) const {
  Sentence out;
  for (int id : ids) {
    if (id == kEosId) break;
    if (id == kPadId || id == kBosId) continue;
    out.push_back(token(id));
  }
  return out;
}

std::vector<Sentence> read_sentences(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::vector<Sentence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    Sentence s;
    std::string w;
    while (ls >> w) s.push_back(w);
    if (s.empty()) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": empty line");
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_sentences(const std::string& path, std::span<const Sentence> sentences) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? " " : "") << s[i];
    os << '\n';
  }
  if (!os) throw IoError("failed writing '" + path + "'");
}

namespace {

std::pair<std::vector<Sentence>, std::vector<Sentence>> read_aligned(
    const std::string& src_path, const std::string& tgt_path,
    const LoadOptions& options) {
  auto src = read_sentences(src_path);
  auto tgt = read_sentences(tgt_path);
  if (src.size() != tgt.size()) {
    throw FormatError("line count mismatch: " + src_path + " has " +
                      std::to_string(src.size()) + " lines, " + tgt_path +
                      " has " + std::to_string(tgt.size()));
  }
  if (options.max_length > 0) {
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (src[i].size() > options.max_length ||
          tgt[i].size() > options.max_length) {
        throw FormatError("sentence pair " + std::to_string(i + 1) +
                          " exceeds max length " +
                          std::to_string(options.max_length));
      }
    }
  }
  return {std::move(src), std::move(tgt)};
}

double encode_all(const Vocab& vocab, const std::vector<Sentence>& sentences,
                  std::vector<std::vector<int>>& out) {
  std::size_t total = 0, unk = 0;
  out.clear();
  for (const auto& s : sentences) {
    out.push_back(vocab.encode(s));
    for (std::size_t i = 0; i < s.size(); ++i) {
      ++total;
      if (out.back()[i] == kUnkId && s[i] != kUnkToken) ++unk;
    }
  }
  return total ? static_cast<double>(unk) / static_cast<double>(total) : 0.0;
}

ParallelCorpus assemble(const std::vector<Sentence>& src,
                        const std::vector<Sentence>& tgt, Vocab sv, Vocab tv) {
  ParallelCorpus corpus;
  corpus.source_vocab = std::move(sv);
  corpus.target_vocab = std::move(tv);
  std::vector<std::vector<int>> s_ids, t_ids;
  corpus.source_oov_rate = encode_all(corpus.source_vocab, src, s_ids);
  corpus.target_oov_rate = encode_all(corpus.target_vocab, tgt, t_ids);
  corpus.pairs.resize(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    corpus.pairs[i].source = std::move(s_ids[i]);
    corpus.pairs[i].target = std::move(t_ids[i]);
  }
  return corpus;
}

}  // namespace

ParallelCorpus load_parallel(const std::string& src_path,
                             const std::string& tgt_path,
                             const LoadOptions& options) {
  auto [src, tgt] = read_aligned(src_path, tgt_path, options);
  if (options.shared_vocab) {
    std::vector<Sentence> both(src);
    both.insert(both.end(), tgt.begin(), tgt.end());
    Vocab v = Vocab::build(both, options.min_count);
    return assemble(src, tgt, v, v);
  }
  return assemble(src, tgt, Vocab::build(src, options.min_count),
                  Vocab::build(tgt, options.min_count));
}

ParallelCorpus load_parallel(const std::string& src_path,
                             const std::string& tgt_path,
                             const Vocab& source_vocab, const Vocab& target_vocab,
                             const LoadOptions& options) {
  auto [src, tgt] = read_aligned(src_path, tgt_path, options);
  return assemble(src, tgt, source_vocab, target_vocab);
}

void SynthConfig::validate() const {
  SIMTPE_CHECK(vocab_size >= 8, "synthetic vocab_size must be >= 8");
  SIMTPE_CHECK(min_length >= 1 && max_length >= min_length,
               "synthetic lengths need 1 <= min_length <= max_length");
  SIMTPE_CHECK(swap_prob >= 0.0 && swap_prob <= 1.0, "swap_prob must be in [0,1]");
  SIMTPE_CHECK(insert_prob >= 0.0 && insert_prob <= 1.0,
               "insert_prob must be in [0,1]");
}

namespace {

// Per-type tables derived from the mapping seed.
struct SynthTables {
  int content = 0;
  std::vector<int> image;
  std::vector<bool> swaps;
  std::vector<bool> inserts;
};

SynthTables make_tables(const SynthConfig& cfg) {
  cfg.validate();
  SynthTables t;
  // Reserved ids plus the function token.
  t.content = cfg.vocab_size - 5;
  std::mt19937_64 rng(cfg.mapping_seed);
  t.image.resize(static_cast<std::size_t>(t.content));
  std::iota(t.image.begin(), t.image.end(), 0);
  std::shuffle(t.image.begin(), t.image.end(), rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < t.content; ++k) {
    const double a = u(rng), b = u(rng);
    t.swaps.push_back(a < cfg.swap_prob);
    t.inserts.push_back(b < cfg.insert_prob);
  }
  return t;
}

int content_index(const std::string& token) {
  if (token.size() < 2 || token[0] != 's') {
    throw InvalidArgument("not a synthetic source token: '" + token + "'");
  }
  return std::stoi(token.substr(1));
}

Sentence map_target(const SynthTables& t, const Sentence& source) {
  Sentence out;
  auto emit = [&](int k) {
    if (t.inserts[static_cast<std::size_t>(k)]) out.emplace_back(kFunctionToken);
    out.push_back("t" + std::to_string(t.image[static_cast<std::size_t>(k)]));
  };
  std::size_t i = 0;
  while (i < source.size()) {
    const int k = content_index(source[i]);
    if (t.swaps[static_cast<std::size_t>(k)] && i + 1 < source.size()) {
      emit(content_index(source[i + 1]));
      emit(k);
      i += 2;
    } else {
      emit(k);
      i += 1;
    }
  }
  return out;
}

}  // namespace

Sentence synthetic_target(const SynthConfig& config, const Sentence& source) {
  return map_target(make_tables(config), source);
}

SyntheticCorpus generate_synthetic_corpus(const SynthConfig& config) {
  const SynthTables tables = make_tables(config);
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<int> len(config.min_length, config.max_length);
  std::uniform_int_distribution<int> tok(0, tables.content - 1);
  const std::size_t total = config.train_size + config.dev_size + config.test_size;

  std::set<Sentence> seen;
  std::vector<Sentence> pool;
  pool.reserve(total);
  std::size_t attempts = 0;
  while (pool.size() < total) {
    if (++attempts > 100 * total + 1000) {
      throw InvalidArgument("synthetic corpus: not enough distinct sentences");
    }
    Sentence s(static_cast<std::size_t>(len(rng)));
    for (auto& w : s) w = "s" + std::to_string(tok(rng));
    if (seen.insert(s).second) pool.push_back(std::move(s));
  }
  std::shuffle(pool.begin(), pool.end(), rng);

  SyntheticCorpus out;
  for (std::size_t i = 0; i < total; ++i) {
    TextPair p{pool[i], map_target(tables, pool[i])};
    if (i < config.train_size) {
      out.train.push_back(std::move(p));
    } else if (i < config.train_size + config.dev_size) {
      out.dev.push_back(std::move(p));
    } else {
      out.test.push_back(std::move(p));
    }
  }
  return out;
}

void write_parallel(const std::string& prefix, std::span<const TextPair> pairs) {
  std::vector<Sentence> src, tgt;
  for (const auto& p : pairs) {
    src.push_back(p.source);
    tgt.push_back(p.target);
  }
  write_sentences(prefix + ".src", src);
  write_sentences(prefix + ".tgt", tgt);
}

std::span<const int> Batch::source_row(std::size_t r) const {
  return {source.data() + r * source_width, source_lengths[r]};
}

std::span<const int> Batch::target_row(std::size_t r) const {
  return {target.data() + r * target_width, target_lengths[r]};
}

std::vector<Batch> make_batches(std::span<const SentencePair> pairs,
                                std::size_t max_tokens, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  auto width = [&](std::size_t i) {
    return std::max(pairs[i].source.size(), pairs[i].target.size());
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return width(a) < width(b); });

  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::size_t> current;
  std::size_t current_width = 0;
  for (std::size_t i : order) {
    const std::size_t w = width(i);
    if (w > max_tokens) {
      throw InvalidArgument("sentence " + std::to_string(i) + " has " +
                            std::to_string(w) + " tokens, above max_tokens " +
                            std::to_string(max_tokens));
    }
    const std::size_t nw = std::max(current_width, w);
    if (!current.empty() && (current.size() + 1) * nw > max_tokens) {
      groups.push_back(std::move(current));
      current.clear();
      current_width = 0;
    }
    current.push_back(i);
    current_width = std::max(current_width, w);
  }
  if (!current.empty()) groups.push_back(std::move(current));
  std::shuffle(groups.begin(), groups.end(), rng);

  std::vector<Batch> batches;
  batches.reserve(groups.size());
  for (auto& g : groups) {
    Batch b;
    b.indices = std::move(g);
    for (std::size_t i : b.indices) {
      b.source_width = std::max(b.source_width, pairs[i].source.size());
      b.target_width = std::max(b.target_width, pairs[i].target.size());
    }
    b.source.assign(b.size() * b.source_width, kPadId);
    b.target.assign(b.size() * b.target_width, kPadId);
    for (std::size_t r = 0; r < b.size(); ++r) {
      const auto& p = pairs[b.indices[r]];
      std::copy(p.source.begin(), p.source.end(), b.source.begin() + r * b.source_width);
      std::copy(p.target.begin(), p.target.end(), b.target.begin() + r * b.target_width);
      b.source_lengths.push_back(p.source.size());
      b.target_lengths.push_back(p.target.size());
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace simtpe
