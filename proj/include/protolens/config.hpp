// SPDX-License-Identifier: Apache-2.0
//
// Flat key=value run configuration shared by the train subcommand and the
// run manifests.
#pragma once

#include <map>
#include <string>
#include <string_view>

#include "protolens/model.hpp"
#include "protolens/trainer.hpp"

namespace protolens::config {

struct RunConfig {
  model::ModelConfig model;
  trainer::TrainConfig train;
};

using KeyValues = std::map<std::string, std::string>;

/// One "key = value" per line; '#' starts a comment. Throws ParseError
/// with the line number for a line without '=' or a repeated key.
KeyValues parse_config_text(std::string_view text);

/// Parses "key=value" as given to --set. Throws ValidationError.
std::pair<std::string, std::string> parse_assignment(std::string_view text);

/// Applies `values` on top of the defaults. Keys: embed_dim, hidden_dim,
/// mlp_hidden, lang_embed_dim, max_decode_len, init_seed, learning_rate,
/// batch_size, max_epochs, patience, grad_clip, seed. Throws ValidationError
/// for an unknown key, a malformed number or an invalid result.
RunConfig resolve(const KeyValues& values);

/// Every key with its resolved value, in the same spelling resolve() reads.
KeyValues to_key_values(const RunConfig& config);

}  // namespace protolens::config
