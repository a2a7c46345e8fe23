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

// Vocabularies, parallel text corpora, the synthetic reordering corpus and
// length-bucketed batching.

#ifndef SIMTPE_CORPUS_HPP_
#define SIMTPE_CORPUS_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace simtpe {

using Sentence = std::vector<std::string>;

// Token <-> id bijection. Ids 0..3 are <pad>, <bos>, <eos>, <unk>.
class Vocab {
 public:
  Vocab();

  // Tokens with count >= min_count get ids in order of decreasing count,
  // ties broken lexicographically.
  static Vocab build(const std::unordered_map<std::string, std::int64_t>& counts,
                     std::int64_t min_count);
  static Vocab build(std::span<const Sentence> sentences, std::int64_t min_count);

  // One "token frequency" line per id.
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  int id(const std::string& token) const;
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  std::int64_t frequency(int id) const { return freqs_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }

  std::vector<int> encode(const Sentence& words) const;
  // Stops at <eos>; drops <pad> and <bos>.
  Sentence decode(std::span<const int> ids) const;

 private:
  int add(const std::string& token, std::int64_t freq);

  std::vector<std::string> tokens_;
  std::vector<std::int64_t> freqs_;
  std::unordered_map<std::string, int> ids_;
};

inline const char* const kPadToken = "<pad>";
inline const char* const kBosToken = "<bos>";
inline const char* const kEosToken = "<eos>";
inline const char* const kUnkToken = "<unk>";

// Token ids without the trailing <eos>, which models append internally.
struct SentencePair {
  std::vector<int> source;
  std::vector<int> target;
};

struct ParallelCorpus {
  Vocab source_vocab;
  Vocab target_vocab;
  std::vector<SentencePair> pairs;
  double source_oov_rate = 0.0;
  double target_oov_rate = 0.0;
};

struct LoadOptions {
  // Tokens seen fewer times than this map to <unk>.
  std::int64_t min_count = 5;
  // One vocabulary built over both sides.
  bool shared_vocab = false;
  // 0 disables the length limit.
  std::size_t max_length = 0;
};

// Reads line-aligned whitespace-tokenized text.
std::vector<Sentence> read_sentences(const std::string& path);
void write_sentences(const std::string& path, std::span<const Sentence> sentences);

// Builds vocabularies from the files themselves.
ParallelCorpus load_parallel(const std::string& src_path,
                             const std::string& tgt_path,
                             const LoadOptions& options = {});
// Maps the files through existing vocabularies.
ParallelCorpus load_parallel(const std::string& src_path,
                             const std::string& tgt_path,
                             const Vocab& source_vocab, const Vocab& target_vocab,
                             const LoadOptions& options = {});

struct SynthConfig {
  int vocab_size = 64;
  int min_length = 5;
  int max_length = 12;
  std::uint64_t mapping_seed = 7;
  // Fraction of source token types that swap with their right neighbour.
  double swap_prob = 0.3;
  // Fraction of source token types whose translation is preceded by the
  // function token.
  double insert_prob = 0.15;
  std::size_t train_size = 4000;
  std::size_t dev_size = 500;
  std::size_t test_size = 500;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TextPair {
  Sentence source;
  Sentence target;
};

struct SyntheticCorpus {
  std::vector<TextPair> train;
  std::vector<TextPair> dev;
  std::vector<TextPair> test;
};

inline const char* const kFunctionToken = "fn";

// Source sentences are uniform draws over content tokens s0..s{C-1}; the
// target maps each token through a fixed permutation, swaps trigger tokens
// with their right neighbour and prefixes insertion-type tokens with the
// function token. Every source sentence is unique across all three splits.
SyntheticCorpus generate_synthetic_corpus(const SynthConfig& config);

// Deterministic target for one source sentence under the given config.
Sentence synthetic_target(const SynthConfig& config, const Sentence& source);

// Writes <prefix>.src and <prefix>.tgt.
void write_parallel(const std::string& prefix, std::span<const TextPair> pairs);

struct Batch {
  std::vector<std::size_t> indices;
  std::size_t source_width = 0;
  std::size_t target_width = 0;
  // Row-major, padded with <pad>.
  std::vector<int> source;
  std::vector<int> target;
  std::vector<std::size_t> source_lengths;
  std::vector<std::size_t> target_lengths;

  std::size_t size() const { return indices.size(); }
  std::span<const int> source_row(std::size_t r) const;
  std::span<const int> target_row(std::size_t r) const;
};

// Groups sentences of similar length so that rows * max(width) stays within
// max_tokens (widths count stored tokens, without <eos>). Bucketing ties and
// batch order are shuffled with the seed.
std::vector<Batch> make_batches(std::span<const SentencePair> pairs,
                                std::size_t max_tokens, std::uint64_t seed);

}  // namespace simtpe

#endif  // SIMTPE_CORPUS_HPP_
