#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace rsmig {

std::string read_file(const std::filesystem::path& path);
/// Writes atomically enough for our purposes: to a sibling temp file, then rename.
void write_file(const std::filesystem::path& path, std::string_view content);
void append_file(const std::filesystem::path& path, std::string_view content);
void copy_tree(const std::filesystem::path& from, const std::filesystem::path& to);

}  // namespace rsmig
