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

#include "simtpe/model.hpp"

#include <cmath>
#include <string>

#include "simtpe/error.hpp"

namespace simtpe {
namespace {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_row(matmul(x, w), b);
}

Tensor sublayer_dropout(const Tensor& x, const ForwardOptions& opts) {
  if (!opts.training || opts.dropout <= 0.0 || opts.rng == nullptr) return x;
  return dropout(x, opts.dropout, true, *opts.rng);
}

Tensor feed_forward(const FeedForwardParams& p, const Tensor& x) {
  return linear(relu(linear(x, p.w1, p.b1)), p.w2, p.b2);
}

// Projects a new rows, extends the cached keys/values and attends.
Tensor self_attention(const AttentionParams& p, const Tensor& a,
                      LayerCache* cache, std::size_t layer, bool commit,
                      std::span<const int> limits, std::size_t heads) {
  Tensor q = linear(a, p.wq, p.bq);
  Tensor k = linear(a, p.wk, p.bk);
  Tensor v = linear(a, p.wv, p.bv);
  if (cache != nullptr && cache->length > 0) {
    k = concat_rows({cache->keys[layer], k});
    v = concat_rows({cache->values[layer], v});
  }
  if (cache != nullptr && commit) {
    cache->keys[layer] = k;
    cache->values[layer] = v;
  }
  return linear(attention(q, k, v, heads, limits), p.wo, p.bo);
}

Tensor cross_attention(const AttentionParams& p, const Tensor& a,
                       const Tensor& memory, std::span<const int> limits,
                       std::size_t heads) {
  Tensor q = linear(a, p.wq, p.bq);
  Tensor k = linear(memory, p.wk, p.bk);
  Tensor v = linear(memory, p.wv, p.bv);
  return linear(attention(q, k, v, heads, limits), p.wo, p.bo);
}

Tensor embed_with_positions(const Tensor& table, std::span<const int> ids,
                            std::size_t offset, std::size_t d,
                            std::size_t max_positions) {
  if (offset + ids.size() > max_positions) {
    throw InvalidArgument("sequence exceeds max_positions " +
                          std::to_string(max_positions));
  }
  std::vector<double> pos(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto row = position_encoding(offset + i, d);
    std::copy(row.begin(), row.end(), pos.begin() + i * d);
  }
  Tensor emb = scale(embedding(table, ids), std::sqrt(static_cast<double>(d)));
  return add(emb, Tensor::constant({ids.size(), d}, std::move(pos)));
}

void prepare_cache(LayerCache* cache, std::size_t layers) {
  if (cache == nullptr) return;
  if (cache->keys.size() != layers) {
    cache->keys.assign(layers, Tensor());
    cache->values.assign(layers, Tensor());
    cache->length = 0;
  }
}

std::vector<double> xavier(std::mt19937_64& rng, std::size_t fan_in,
                           std::size_t fan_out) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  std::vector<double> v(fan_in * fan_out);
  for (auto& x : v) x = dist(rng);
  return v;
}

std::vector<double> normal(std::mt19937_64& rng, std::size_t n, double sd) {
  std::normal_distribution<double> dist(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

}  // namespace

void ModelConfig::validate() const {
  SIMTPE_CHECK(src_vocab > kUnkId, "src_vocab must exceed the reserved ids");
  SIMTPE_CHECK(tgt_vocab > kUnkId, "tgt_vocab must exceed the reserved ids");
  SIMTPE_CHECK(d_model >= 1 && d_ff >= 1, "d_model and d_ff must be positive");
  SIMTPE_CHECK(layers >= 1, "layers must be >= 1");
  SIMTPE_CHECK(heads >= 1 && d_model % heads == 0,
               "d_model must be divisible by heads");
  SIMTPE_CHECK(resolved_capsule_dim() >= 1, "capsule_dim must be positive");
  SIMTPE_CHECK(translated_capsules >= 1, "J (translated_capsules) must be >= 1");
  SIMTPE_CHECK(untranslated_capsules >= 1,
               "N (untranslated_capsules) must be >= 1");
  SIMTPE_CHECK(routing_iters >= 1, "routing_iters must be >= 1");
  SIMTPE_CHECK(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0,1)");
  SIMTPE_CHECK(max_positions >= 1, "max_positions must be positive");
}

ModelParameters::ModelParameters(const ModelConfig& config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  build(&rng);
}

Tensor ModelParameters::add(const std::string& name, Shape shape,
                            std::vector<double> values) {
  Tensor t = Tensor::parameter(std::move(shape), std::move(values));
  named_.emplace_back(name, t);
  return t;
}

// With rng == nullptr every tensor is zero-filled (used by clone/load).
void ModelParameters::build(std::mt19937_64* rng) {
  const auto d = static_cast<std::size_t>(config_.d_model);
  const auto ff = static_cast<std::size_t>(config_.d_ff);
  const auto vs = static_cast<std::size_t>(config_.src_vocab);
  const auto vt = static_cast<std::size_t>(config_.tgt_vocab);
  const auto cap = static_cast<std::size_t>(config_.resolved_capsule_dim());
  const auto nj = static_cast<std::size_t>(config_.translated_capsules);
  const auto nn = static_cast<std::size_t>(config_.untranslated_capsules);

  auto mat = [&](const std::string& name, std::size_t in, std::size_t out) {
    return add(name, {in, out},
               rng ? xavier(*rng, in, out) : std::vector<double>(in * out));
  };
  auto vec = [&](const std::string& name, std::size_t n, double fill) {
    return add(name, {1, n}, std::vector<double>(n, rng ? fill : 0.0));
  };
  auto emb = [&](const std::string& name, std::size_t rows) {
    return add(name, {rows, d},
               rng ? normal(*rng, rows * d, 1.0 / std::sqrt(double(d)))
                   : std::vector<double>(rows * d));
  };
  auto attn = [&](const std::string& prefix) {
    AttentionParams p;
    p.wq = mat(prefix + ".wq", d, d);
    p.bq = vec(prefix + ".bq", d, 0.0);
    p.wk = mat(prefix + ".wk", d, d);
    p.bk = vec(prefix + ".bk", d, 0.0);
    p.wv = mat(prefix + ".wv", d, d);
    p.bv = vec(prefix + ".bv", d, 0.0);
    p.wo = mat(prefix + ".wo", d, d);
    p.bo = vec(prefix + ".bo", d, 0.0);
    return p;
  };
  auto ffn = [&](const std::string& prefix) {
    FeedForwardParams p;
    p.w1 = mat(prefix + ".w1", d, ff);
    p.b1 = vec(prefix + ".b1", ff, 0.0);
    p.w2 = mat(prefix + ".w2", ff, d);
    p.b2 = vec(prefix + ".b2", d, 0.0);
    return p;
  };

  src_embed = emb("src_embed", vs);
  tgt_embed = emb("tgt_embed", vt);
  encoder.clear();
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = "encoder." + std::to_string(l);
    EncoderLayerParams layer;
    layer.ln1_g = vec(p + ".ln1_g", d, 1.0);
    layer.ln1_b = vec(p + ".ln1_b", d, 0.0);
    layer.self_attn = attn(p + ".self_attn");
    layer.ln2_g = vec(p + ".ln2_g", d, 1.0);
    layer.ln2_b = vec(p + ".ln2_b", d, 0.0);
    layer.ffn = ffn(p + ".ffn");
    encoder.push_back(std::move(layer));
  }
  enc_ln_g = vec("encoder.ln_g", d, 1.0);
  enc_ln_b = vec("encoder.ln_b", d, 0.0);
  decoder.clear();
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = "decoder." + std::to_string(l);
    DecoderLayerParams layer;
    layer.ln1_g = vec(p + ".ln1_g", d, 1.0);
    layer.ln1_b = vec(p + ".ln1_b", d, 0.0);
    layer.self_attn = attn(p + ".self_attn");
    layer.ln2_g = vec(p + ".ln2_g", d, 1.0);
    layer.ln2_b = vec(p + ".ln2_b", d, 0.0);
    layer.cross_attn = attn(p + ".cross_attn");
    layer.ln3_g = vec(p + ".ln3_g", d, 1.0);
    layer.ln3_b = vec(p + ".ln3_b", d, 0.0);
    layer.ffn = ffn(p + ".ffn");
    decoder.push_back(std::move(layer));
  }
  dec_ln_g = vec("decoder.ln_g", d, 1.0);
  dec_ln_b = vec("decoder.ln_b", d, 0.0);
  out_w = mat("output.w", d, vt);
  out_b = vec("output.b", vt, 0.0);
  caps_vote = mat("capsule.vote", d, (nj + nn) * cap);
  caps_guide = mat("capsule.guide", d, cap);
  seg_translated = mat("segment.translated", d, nj * cap);
  seg_unread = mat("segment.unread", d, nn * cap);
  seg_untranslated = mat("segment.untranslated", d, nn * cap);
  tok_tgt_w = mat("token.target.w", nj * cap, vt);
  tok_tgt_b = vec("token.target.b", vt, 0.0);
  tok_src_w = mat("token.source.w", (nj + nn) * cap, vs);
  tok_src_b = vec("token.source.b", vs, 0.0);
}

ModelParameters ModelParameters::clone() const {
  ModelParameters copy;
  copy.config_ = config_;
  copy.build(nullptr);
  copy.copy_values_from(*this);
  return copy;
}

void ModelParameters::copy_values_from(const ModelParameters& other) {
  if (!(other.config_ == config_) || other.named_.size() != named_.size()) {
    throw InvalidArgument("copy_values_from: configuration mismatch");
  }
  for (std::size_t i = 0; i < named_.size(); ++i) {
    auto src = other.named_[i].second.data();
    auto dst = named_[i].second.mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

std::vector<Tensor> ModelParameters::tensors() const {
  std::vector<Tensor> out;
  out.reserve(named_.size());
  for (const auto& [name, t] : named_) out.push_back(t);
  return out;
}

const Tensor& ModelParameters::get(const std::string& name) const {
  for (const auto& [n, t] : named_)
    if (n == name) return t;
  throw InvalidArgument("unknown parameter '" + name + "'");
}

std::size_t ModelParameters::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_) n += t.size();
  return n;
}

void ModelParameters::zero_grad() {
  for (auto& [name, t] : named_) t.zero_grad();
}

std::vector<double> position_encoding(std::size_t position, std::size_t dim) {
  std::vector<double> row(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const double expo = static_cast<double>(2 * (i / 2)) / static_cast<double>(dim);
    const double angle = static_cast<double>(position) / std::pow(10000.0, expo);
    row[i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
  }
  return row;
}

Tensor encode_rows(const ModelParameters& params, std::span<const int> ids,
                   LayerCache* cache, const ForwardOptions& opts) {
  const auto& cfg = params.config();
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto heads = static_cast<std::size_t>(cfg.heads);
  prepare_cache(cache, params.encoder.size());
  const std::size_t offset = cache ? cache->length : 0;
  Tensor x = embed_with_positions(params.src_embed, ids, offset, d,
                                  static_cast<std::size_t>(cfg.max_positions));
  x = sublayer_dropout(x, opts);
  const auto limits = causal_limits(ids.size(), offset);
  for (std::size_t l = 0; l < params.encoder.size(); ++l) {
    const auto& layer = params.encoder[l];
    Tensor a = layer_norm(x, layer.ln1_g, layer.ln1_b);
    x = add(x, sublayer_dropout(self_attention(layer.self_attn, a, cache, l,
                                               true, limits, heads),
                                opts));
    Tensor f = layer_norm(x, layer.ln2_g, layer.ln2_b);
    x = add(x, sublayer_dropout(feed_forward(layer.ffn, f), opts));
  }
  if (cache) cache->length += ids.size();
  return layer_norm(x, params.enc_ln_g, params.enc_ln_b);
}

Tensor encode(const ModelParameters& params, std::span<const int> ids,
              const ForwardOptions& opts) {
  SIMTPE_CHECK(!ids.empty(), "encode: empty source");
  return encode_rows(params, ids, nullptr, opts);
}

Tensor decode_rows(const ModelParameters& params, std::span<const int> ids,
                   const Tensor& encoder_states, std::span<const int> limits,
                   LayerCache* cache, bool commit, const ForwardOptions& opts) {
  const auto& cfg = params.config();
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto heads = static_cast<std::size_t>(cfg.heads);
  SIMTPE_CHECK(limits.size() == ids.size(),
               "decode_rows: one cross-attention limit per row required");
  for (int lim : limits) {
    SIMTPE_CHECK(lim >= 1, "decode_rows: at least one source token required");
    SIMTPE_CHECK(static_cast<std::size_t>(lim) <= encoder_states.rows(),
                 "decode_rows: limit beyond available encoder states");
  }
  prepare_cache(cache, params.decoder.size());
  const std::size_t offset = cache ? cache->length : 0;
  Tensor x = embed_with_positions(params.tgt_embed, ids, offset, d,
                                  static_cast<std::size_t>(cfg.max_positions));
  x = sublayer_dropout(x, opts);
  const auto self_limits = causal_limits(ids.size(), offset);
  for (std::size_t l = 0; l < params.decoder.size(); ++l) {
    const auto& layer = params.decoder[l];
    Tensor a = layer_norm(x, layer.ln1_g, layer.ln1_b);
    x = add(x, sublayer_dropout(self_attention(layer.self_attn, a, cache, l,
                                               commit, self_limits, heads),
                                opts));
    Tensor c = layer_norm(x, layer.ln2_g, layer.ln2_b);
    x = add(x, sublayer_dropout(cross_attention(layer.cross_attn, c,
                                                encoder_states, limits, heads),
                                opts));
    Tensor f = layer_norm(x, layer.ln3_g, layer.ln3_b);
    x = add(x, sublayer_dropout(feed_forward(layer.ffn, f), opts));
  }
  if (cache && commit) cache->length += ids.size();
  return layer_norm(x, params.dec_ln_g, params.dec_ln_b);
}

Tensor output_logits(const ModelParameters& params, const Tensor& hidden) {
  return linear(hidden, params.out_w, params.out_b);
}

DecodeStepOutput decode_step(const ModelParameters& params,
                             std::span<const int> target_prefix,
                             const Tensor& encoder_states, int g_t) {
  SIMTPE_CHECK(g_t >= 1, "decode_step: g_t must be >= 1");
  SIMTPE_CHECK(static_cast<std::size_t>(g_t) <= encoder_states.rows(),
               "decode_step: g_t exceeds the encoded source prefix");
  std::vector<int> inputs;
  inputs.reserve(target_prefix.size() + 1);
  inputs.push_back(kBosId);
  inputs.insert(inputs.end(), target_prefix.begin(), target_prefix.end());
  std::vector<int> limits(inputs.size(), g_t);
  Tensor h = decode_rows(params, inputs, encoder_states, limits, nullptr, false);
  Tensor last = slice_rows(h, h.rows() - 1, h.rows());
  return {last, output_logits(params, last)};
}

Tensor CapsuleState::translated_vector() const {
  return concat_cols(std::vector<Tensor>(capsules.begin(),
                                         capsules.begin() + translated));
}

Tensor CapsuleState::untranslated_vector() const {
  return concat_cols(std::vector<Tensor>(capsules.begin() + translated,
                                         capsules.end()));
}

Tensor capsule_votes(const ModelParameters& params,
                     const Tensor& encoder_states) {
  return matmul(encoder_states, params.caps_vote);
}

CapsuleState route_capsules(const ModelParameters& params, const Tensor& votes,
                            const Tensor& decoder_hidden, int g_t,
                            const RoutingObserver& observer) {
  const auto& cfg = params.config();
  const auto cap = static_cast<std::size_t>(cfg.resolved_capsule_dim());
  const auto caps = static_cast<std::size_t>(cfg.capsule_count());
  const std::size_t rows = votes.rows();
  SIMTPE_CHECK(g_t >= 1, "route_capsules: g_t must be >= 1");
  SIMTPE_CHECK(static_cast<std::size_t>(g_t) <= rows,
               "route_capsules: g_t exceeds the encoder states");
  SIMTPE_CHECK(votes.cols() == caps * cap, "route_capsules: vote width mismatch");

  Tensor guide = matmul(decoder_hidden, params.caps_guide);
  std::vector<Tensor> u(caps);
  for (std::size_t j = 0; j < caps; ++j)
    u[j] = add_row(slice_cols(votes, j * cap, (j + 1) * cap), guide);

  Mask mask(rows * caps, 0);
  for (std::size_t i = 0; i < static_cast<std::size_t>(g_t); ++i)
    for (std::size_t j = 0; j < caps; ++j) mask[i * caps + j] = 1;

  CapsuleState state;
  state.available = static_cast<std::size_t>(g_t);
  state.translated = static_cast<std::size_t>(cfg.translated_capsules);
  state.b = Tensor::zeros({rows, caps});
  state.capsules.resize(caps);
  for (int it = 0; it < cfg.routing_iters; ++it) {
    state.c = masked_softmax(state.b, mask).probs;
    for (std::size_t j = 0; j < caps; ++j) {
      Tensor s = matmul_at(slice_cols(state.c, j, j + 1), u[j]);
      state.capsules[j] = squash_rows(s);
    }
    if (observer) observer(it, state);
    if (it + 1 == cfg.routing_iters) break;
    std::vector<Tensor> agreement(caps);
    for (std::size_t j = 0; j < caps; ++j)
      agreement[j] = matmul_bt(u[j], state.capsules[j]);
    state.b = add(state.b, concat_cols(agreement));
  }
  return state;
}

DegreeVector translation_degree(const CapsuleState& state) {
  DegreeVector d;
  const std::size_t rows = state.c.rows(), caps = state.c.cols();
  d.available = state.available;
  d.values.assign(rows, 0.0);
  auto c = state.c.data();
  for (std::size_t i = 0; i < state.available && i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < state.translated; ++j) s += c[i * caps + j];
    d.values[i] = s;
  }
  return d;
}

}  // namespace simtpe
