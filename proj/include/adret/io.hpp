#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <string_view>

namespace adret {

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// Lowercase hex SHA-256 of a file's content. Throws adret::Error if unreadable.
std::string file_sha256_hex(const std::filesystem::path& path);

/// First 8 bytes of SHA-256, big-endian. Stable content fingerprint.
std::uint64_t fingerprint64(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

/// Writes through `writer` into a sibling temporary file, then renames it onto
/// `path`. On any exception the temporary is removed and `path` is untouched.
void write_file_atomic(const std::filesystem::path& path, const std::function<void(std::ostream&)>& writer);

}  // namespace adret
