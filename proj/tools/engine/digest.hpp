#pragma once

#include <string>

namespace ecgid::cli {

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

/// Lowercase hex SHA-256 of a file's contents. Throws IoError when the file
/// cannot be read.
std::string sha256_file(const std::string& path);

}  // namespace ecgid::cli
