// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace protolens::io {

/// Whole file as bytes; throws IoError if it cannot be read.
std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view bytes);

}  // namespace protolens::io
