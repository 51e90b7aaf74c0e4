// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint file layout:
//   8 bytes   magic "PROTOLNS"
//   4 bytes   little-endian uint32 header length N
//   N bytes   UTF-8 JSON header: format, version, config, mode, vocab,
//             per-language symbol inventory, tensor names and shapes
//   rest      little-endian float32 tensor data in header order
#pragma once

#include <filesystem>
#include <string>

#include "protolens/corpus.hpp"
#include "protolens/model.hpp"

namespace protolens::model {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams<float> params;
  ModelConfig config;
  corpus::Vocabulary vocab;
  corpus::Inventory inventory;  // symbols attested per language in training data
  corpus::Mode mode = corpus::Mode::Orthographic;
};

/// Serialises to bytes. Throws CheckpointError if the parameter shapes do not
/// match the config and vocabulary.
std::string encode_checkpoint(const Checkpoint& ckpt);
/// Throws CheckpointError on a bad magic, truncated or oversized data, a
/// version mismatch, or tensors whose shapes disagree with the config.
Checkpoint decode_checkpoint(const std::string& bytes);

/// Atomic write (temporary file + rename).
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace protolens::model
