// SPDX-License-Identifier: Apache-2.0
#include "protolens/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include <nlohmann/json.hpp>

#include "protolens/error.hpp"
#include "protolens/io.hpp"

namespace protolens::model {

namespace {

constexpr std::string_view kMagic = "PROTOLNS";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

void put_floats(std::string& out, const ad::Tensor<float>& t) {
  for (std::size_t i = 0; i < t.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(t[i]));
}

nlohmann::ordered_json config_json(const ModelConfig& c) {
  return {{"embed_dim", c.embed_dim},
          {"hidden_dim", c.hidden_dim},
          {"mlp_hidden", c.mlp_hidden},
          {"lang_embed_dim", c.lang_embed_dim},
          {"max_decode_len", c.max_decode_len},
          {"seed", c.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.mlp_hidden = j.at("mlp_hidden").get<std::size_t>();
  c.lang_embed_dim = j.at("lang_embed_dim").get<std::size_t>();
  c.max_decode_len = j.at("max_decode_len").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const auto expected = ModelParams<float>::shapes(ckpt.config, ckpt.vocab.size());
  const auto tensors = ckpt.params.tensors();
  const auto& names = ModelParams<float>::names();
  nlohmann::ordered_json shapes = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i]->shape() != expected[i]) {
      throw CheckpointError("tensor " + names[i] + " has shape " +
                            ad::shape_str(tensors[i]->shape()) + ", config expects " +
                            ad::shape_str(expected[i]));
    }
    shapes.push_back({{"name", names[i]}, {"shape", tensors[i]->shape()}});
  }
  nlohmann::ordered_json inventory = nlohmann::ordered_json::object();
  for (std::size_t l = 0; l < corpus::kNumLanguages; ++l) {
    inventory[std::string(corpus::language_name(static_cast<corpus::Language>(l)))] =
        ckpt.inventory[l];
  }
  nlohmann::ordered_json header;
  header["format"] = "protolens-checkpoint";
  header["version"] = kCheckpointVersion;
  header["config"] = config_json(ckpt.config);
  header["mode"] = std::string(corpus::mode_name(ckpt.mode));
  header["vocab"] = nlohmann::ordered_json::parse(ckpt.vocab.to_json());
  header["inventory"] = inventory;
  header["tensors"] = shapes;
  const auto text = header.dump();

  std::string out(kMagic);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (const auto* t : tensors) put_floats(out, *t);
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < kMagic.size() + 4 || bytes.compare(0, kMagic.size(), kMagic) != 0) {
    throw CheckpointError("not a protolens checkpoint (bad magic)");
  }
  const std::size_t header_len = get_u32(bytes, kMagic.size());
  const std::size_t data_start = kMagic.size() + 4 + header_len;
  if (data_start > bytes.size()) throw CheckpointError("checkpoint header is truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(kMagic.size() + 4, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    if (header.value("format", "") != "protolens-checkpoint") {
      throw CheckpointError("checkpoint header has the wrong format tag");
    }
    const int version = header.value("version", -1);
    if (version != kCheckpointVersion) {
      throw CheckpointError("checkpoint version " + std::to_string(version) +
                            " is not supported (expected " +
                            std::to_string(kCheckpointVersion) + ")");
    }
    ckpt.config = config_from_json(header.at("config"));
    const auto mode = header.at("mode").get<std::string>();
    ckpt.mode = mode == "phonetic" ? corpus::Mode::Phonetic : corpus::Mode::Orthographic;
    ckpt.vocab = corpus::Vocabulary::from_json(header.at("vocab").dump());
    for (std::size_t l = 0; l < corpus::kNumLanguages; ++l) {
      const auto name = std::string(corpus::language_name(static_cast<corpus::Language>(l)));
      ckpt.inventory[l] = header.at("inventory").at(name).get<std::vector<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  } catch (const VocabularyError& e) {
    throw CheckpointError(std::string("checkpoint vocabulary: ") + e.what());
  } catch (const ValidationError& e) {
    throw CheckpointError(std::string("checkpoint config: ") + e.what());
  }

  const auto expected = ModelParams<float>::shapes(ckpt.config, ckpt.vocab.size());
  const auto& names = ModelParams<float>::names();
  const auto& listed = header.at("tensors");
  if (listed.size() != expected.size()) {
    throw CheckpointError("checkpoint lists " + std::to_string(listed.size()) +
                          " tensors, expected " + std::to_string(expected.size()));
  }
  std::size_t total = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto name = listed[i].at("name").get<std::string>();
    const auto shape = listed[i].at("shape").get<ad::Shape>();
    if (name != names[i]) {
      throw CheckpointError("tensor " + std::to_string(i) + " is '" + name + "', expected '" +
                            names[i] + "'");
    }
    if (shape != expected[i]) {
      throw CheckpointError("shape mismatch for " + name + ": file has " +
                            ad::shape_str(shape) + ", config and vocabulary imply " +
                            ad::shape_str(expected[i]));
    }
    total += ad::shape_size(shape);
  }
  if (bytes.size() != data_start + 4 * total) {
    throw CheckpointError("checkpoint data is " + std::to_string(bytes.size() - data_start) +
                          " bytes, expected " + std::to_string(4 * total) +
                          (bytes.size() < data_start + 4 * total ? " (truncated)" : ""));
  }
  std::size_t pos = data_start;
  auto tensors = ckpt.params.tensors();
  for (std::size_t i = 0; i < expected.size(); ++i) {
    std::vector<float> data(ad::shape_size(expected[i]));
    for (auto& v : data) {
      v = std::bit_cast<float>(get_u32(bytes, pos));
      pos += 4;
    }
    *tensors[i] = ad::Tensor<float>(expected[i], std::move(data));
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace protolens::model
