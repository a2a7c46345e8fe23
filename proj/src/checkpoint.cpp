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

// Checkpoint layout (little-endian):
//   char[8]  "SIMTPECK"
//   u32      format version
//   u64      length of the JSON config, then the JSON bytes
//   u32      tensor count
//   per tensor: u32 name length, name, u32 rank, u64 dims[rank],
//               f64 values[product(dims)]

#include <cstring>
#include <fstream>
#include <json.hpp>

#include "simtpe/error.hpp"
#include "simtpe/model.hpp"

namespace simtpe {
namespace {

constexpr char kMagic[8] = {'S', 'I', 'M', 'T', 'P', 'E', 'C', 'K'};

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"src_vocab", c.src_vocab},
          {"tgt_vocab", c.tgt_vocab},
          {"d_model", c.d_model},
          {"d_ff", c.d_ff},
          {"layers", c.layers},
          {"heads", c.heads},
          {"capsule_dim", c.capsule_dim},
          {"translated_capsules", c.translated_capsules},
          {"untranslated_capsules", c.untranslated_capsules},
          {"routing_iters", c.routing_iters},
          {"dropout", c.dropout},
          {"max_positions", c.max_positions}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.src_vocab = j.at("src_vocab").get<int>();
  c.tgt_vocab = j.at("tgt_vocab").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.capsule_dim = j.at("capsule_dim").get<int>();
  c.translated_capsules = j.at("translated_capsules").get<int>();
  c.untranslated_capsules = j.at("untranslated_capsules").get<int>();
  c.routing_iters = j.at("routing_iters").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.max_positions = j.at("max_positions").get<int>();
  return c;
}

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& is, const std::string& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError(path + ": truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const ModelParameters& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kCheckpointVersion);
  const std::string cfg = config_to_json(params.config()).dump();
  put<std::uint64_t>(os, cfg.size());
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(params.named().size()));
  for (const auto& [name, t] : params.named()) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto dim : t.shape()) put<std::uint64_t>(os, dim);
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os) throw IoError("failed writing checkpoint '" + path + "'");
}

ModelParameters load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(path + ": not a simtpe checkpoint");
  }
  const auto version = take<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    throw FormatError(path + ": unsupported checkpoint version " +
                      std::to_string(version));
  }
  const auto cfg_len = take<std::uint64_t>(is, path);
  if (cfg_len > (1u << 20)) throw FormatError(path + ": config block too large");
  std::string cfg(cfg_len, '\0');
  is.read(cfg.data(), static_cast<std::streamsize>(cfg_len));
  if (!is) throw FormatError(path + ": truncated config block");
  ModelConfig config;
  try {
    config = config_from_json(nlohmann::json::parse(cfg));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad config block: " + e.what());
  }
  // Zero-initialised tensors with the right shapes, then filled by name.
  ModelParameters params(config, 0);
  const auto count = take<std::uint32_t>(is, path);
  if (count != params.named().size()) {
    throw FormatError(path + ": expected " +
                      std::to_string(params.named().size()) + " tensors, found " +
                      std::to_string(count));
  }
  for (std::uint32_t n = 0; n < count; ++n) {
    const auto name_len = take<std::uint32_t>(is, path);
    if (name_len > 4096) throw FormatError(path + ": tensor name too long");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto rank = take<std::uint32_t>(is, path);
    Shape shape(rank);
    for (auto& dim : shape) dim = static_cast<std::size_t>(take<std::uint64_t>(is, path));
    Tensor t;
    try {
      t = params.get(name);
    } catch (const InvalidArgument&) {
      throw FormatError(path + ": unexpected tensor '" + name + "'");
    }
    if (shape != t.shape()) {
      throw FormatError(path + ": tensor '" + name + "' has shape " +
                        shape_to_string(shape) + ", expected " +
                        shape_to_string(t.shape()));
    }
    auto dst = t.mutable_data();
    is.read(reinterpret_cast<char*>(dst.data()),
            static_cast<std::streamsize>(dst.size() * sizeof(double)));
    if (!is) throw FormatError(path + ": truncated tensor '" + name + "'");
  }
  return params;
}

}  // namespace simtpe
