#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace remedi::util {

std::string read_file(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename so readers never see a torn file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

nlohmann::ordered_json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j);

/// Splits on '\n'; a trailing empty line is dropped, '\r' is not stripped.
std::vector<std::string> split_lines(std::string_view text);

}  // namespace remedi::util
