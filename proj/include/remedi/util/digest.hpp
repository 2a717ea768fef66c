#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace remedi::util {

/// Lower-case hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

/// SHA-256 of a file's bytes, or throws remedi::Error if unreadable.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace remedi::util
