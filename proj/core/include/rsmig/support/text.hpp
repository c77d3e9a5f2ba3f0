#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace rsmig::text {

std::string_view trim(std::string_view s);
std::string trim_copy(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string replace_all(std::string s, std::string_view from, std::string_view to);
std::string to_lower(std::string_view s);
bool is_identifier_start(char c);
bool is_identifier_char(char c);
bool is_identifier(std::string_view s);

/// POSIX-shell style word splitting (quotes and backslash escapes), as used by
/// the `command` form of a build trace entry.
std::vector<std::string> shell_split(std::string_view command);

/// Splits an identifier on underscores and case boundaries into lower-case
/// subwords: `HdfSbufRecycle` -> hdf, sbuf, recycle; `ht_set` -> ht, set.
std::vector<std::string> identifier_subwords(std::string_view ident);

/// Identifiers of C-like source text in order of appearance, skipping
/// comments, string and character literals, and numbers.
std::vector<std::string> code_identifiers(std::string_view code);

/// Adds `indent` in front of every non-empty line.
std::string indent_lines(std::string_view s, std::string_view indent);

/// Removes the longest common leading whitespace of all non-empty lines.
std::string dedent(std::string_view s);

}  // namespace rsmig::text
