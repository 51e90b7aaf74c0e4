// SPDX-License-Identifier: Apache-2.0
#include "protolens/config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>

#include "protolens/error.hpp"

namespace protolens::config {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) {
    throw ValidationError("config key '" + key + "': '" + value + "' is not a valid number");
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

KeyValues parse_config_text(std::string_view text) {
  KeyValues out;
  std::size_t line_number = 0, pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_number;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_number, "expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ParseError(line_number, "empty key");
    if (!out.emplace(key, value).second) throw ParseError(line_number, "duplicate key '" + key + "'");
  }
  return out;
}

std::pair<std::string, std::string> parse_assignment(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || trim(text.substr(0, eq)).empty()) {
    throw ValidationError("expected key=value, got '" + std::string(text) + "'");
  }
  return {std::string(trim(text.substr(0, eq))), std::string(trim(text.substr(eq + 1)))};
}

RunConfig resolve(const KeyValues& values) {
  RunConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter, std::less<>> setters = {
      {"embed_dim", [&](auto& k, auto& v) { c.model.embed_dim = parse_number<std::size_t>(k, v); }},
      {"hidden_dim", [&](auto& k, auto& v) { c.model.hidden_dim = parse_number<std::size_t>(k, v); }},
      {"mlp_hidden", [&](auto& k, auto& v) { c.model.mlp_hidden = parse_number<std::size_t>(k, v); }},
      {"lang_embed_dim",
       [&](auto& k, auto& v) { c.model.lang_embed_dim = parse_number<std::size_t>(k, v); }},
      {"max_decode_len",
       [&](auto& k, auto& v) { c.model.max_decode_len = parse_number<std::size_t>(k, v); }},
      {"init_seed", [&](auto& k, auto& v) { c.model.seed = parse_number<std::uint64_t>(k, v); }},
      {"learning_rate",
       [&](auto& k, auto& v) { c.train.learning_rate = parse_number<double>(k, v); }},
      {"batch_size", [&](auto& k, auto& v) { c.train.batch_size = parse_number<std::size_t>(k, v); }},
      {"max_epochs", [&](auto& k, auto& v) { c.train.max_epochs = parse_number<std::size_t>(k, v); }},
      {"patience", [&](auto& k, auto& v) { c.train.patience = parse_number<std::size_t>(k, v); }},
      {"grad_clip", [&](auto& k, auto& v) { c.train.grad_clip = parse_number<double>(k, v); }},
      {"seed", [&](auto& k, auto& v) { c.train.seed = parse_number<std::uint64_t>(k, v); }},
  };
  for (const auto& [key, value] : values) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ValidationError("unknown config key '" + key + "'");
    it->second(key, value);
  }
  c.model.validate();
  c.train.validate();
  return c;
}

KeyValues to_key_values(const RunConfig& c) {
  return {
      {"embed_dim", std::to_string(c.model.embed_dim)},
      {"hidden_dim", std::to_string(c.model.hidden_dim)},
      {"mlp_hidden", std::to_string(c.model.mlp_hidden)},
      {"lang_embed_dim", std::to_string(c.model.lang_embed_dim)},
      {"max_decode_len", std::to_string(c.model.max_decode_len)},
      {"init_seed", std::to_string(c.model.seed)},
      {"learning_rate", format_double(c.train.learning_rate)},
      {"batch_size", std::to_string(c.train.batch_size)},
      {"max_epochs", std::to_string(c.train.max_epochs)},
      {"patience", std::to_string(c.train.patience)},
      {"grad_clip", format_double(c.train.grad_clip)},
      {"seed", std::to_string(c.train.seed)},
  };
}

}  // namespace protolens::config
