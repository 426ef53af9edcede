#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace abbrx::io {

/// Whole file as a string. Throws Error if the file cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Lines without their trailing '\n' (and '\r').
std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Writes `content` to a sibling temporary file and renames it over `path`,
/// creating parent directories as needed.
void write_atomic(const std::filesystem::path& path, std::string_view content);

/// Shortest decimal form that reads back to the same float / double.
std::string format_float(float v);
std::string format_double(double v);

}  // namespace abbrx::io
