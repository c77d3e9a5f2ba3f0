#include "rsmig/support/text.hpp"

#include <algorithm>
#include <cctype>
#include <limits>

namespace rsmig::text {

std::string_view trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string trim_copy(std::string_view s) { return std::string(trim(s)); }

std::vector<std::string> split_lines(std::string_view s) {
    std::vector<std::string> lines;
    size_t start = 0;
    while (start <= s.size()) {
        auto nl = s.find('\n', start);
        if (nl == std::string_view::npos) {
            if (start < s.size()) lines.emplace_back(s.substr(start));
            break;
        }
        lines.emplace_back(s.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    if (from.empty()) return s;
    size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

bool is_identifier_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_identifier_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

bool is_identifier(std::string_view s) {
    if (s.empty() || !is_identifier_start(s[0])) return false;
    return std::all_of(s.begin(), s.end(), is_identifier_char);
}

std::vector<std::string> shell_split(std::string_view command) {
    std::vector<std::string> words;
    std::string cur;
    bool in_word = false;
    for (size_t i = 0; i < command.size(); ++i) {
        char c = command[i];
        if (c == '\'') {
            in_word = true;
            auto end = command.find('\'', i + 1);
            if (end == std::string_view::npos) end = command.size();
            cur.append(command.substr(i + 1, end - i - 1));
            i = end;
        } else if (c == '"') {
            in_word = true;
            for (++i; i < command.size() && command[i] != '"'; ++i) {
                if (command[i] == '\\' && i + 1 < command.size() &&
                    (command[i + 1] == '"' || command[i + 1] == '\\' || command[i + 1] == '$' || command[i + 1] == '`')) {
                    ++i;
                }
                cur.push_back(command[i]);
            }
        } else if (c == '\\' && i + 1 < command.size()) {
            in_word = true;
            cur.push_back(command[++i]);
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            if (in_word) words.push_back(std::move(cur));
            cur.clear();
            in_word = false;
        } else {
            in_word = true;
            cur.push_back(c);
        }
    }
    if (in_word) words.push_back(std::move(cur));
    return words;
}

std::vector<std::string> identifier_subwords(std::string_view ident) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) out.push_back(to_lower(cur));
        cur.clear();
    };
    for (size_t i = 0; i < ident.size(); ++i) {
        char c = ident[i];
        if (c == '_' || !is_identifier_char(c)) {
            flush();
            continue;
        }
        if (!cur.empty()) {
            char prev = ident[i - 1];
            bool lower_to_upper = std::islower(static_cast<unsigned char>(prev)) && std::isupper(static_cast<unsigned char>(c));
            // "HTTPServer" splits before the last capital of an acronym run.
            bool acronym_end = std::isupper(static_cast<unsigned char>(prev)) && std::isupper(static_cast<unsigned char>(c)) &&
                               i + 1 < ident.size() && std::islower(static_cast<unsigned char>(ident[i + 1]));
            bool digit_edge = std::isdigit(static_cast<unsigned char>(prev)) != std::isdigit(static_cast<unsigned char>(c));
            if (lower_to_upper || acronym_end || digit_edge) flush();
        }
        cur.push_back(c);
    }
    flush();
    return out;
}

std::vector<std::string> code_identifiers(std::string_view code) {
    std::vector<std::string> out;
    size_t i = 0, n = code.size();
    while (i < n) {
        char c = code[i];
        if (c == '/' && i + 1 < n && code[i + 1] == '/') {
            while (i < n && code[i] != '\n') ++i;
        } else if (c == '/' && i + 1 < n && code[i + 1] == '*') {
            size_t end = code.find("*/", i + 2);
            i = end == std::string_view::npos ? n : end + 2;
        } else if (c == '"' || c == '\'') {
            ++i;
            while (i < n && code[i] != c && code[i] != '\n') i += code[i] == '\\' ? 2 : 1;
            ++i;
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            while (i < n && (is_identifier_char(code[i]) || code[i] == '.')) ++i;
        } else if (is_identifier_start(c)) {
            size_t start = i;
            while (i < n && is_identifier_char(code[i])) ++i;
            out.emplace_back(code.substr(start, i - start));
        } else {
            ++i;
        }
    }
    return out;
}

std::string indent_lines(std::string_view s, std::string_view indent) {
    std::string out;
    auto lines = split_lines(s);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (!trim(lines[i]).empty()) {
            out += indent;
            out += lines[i];
        }
        out += '\n';
    }
    return out;
}

std::string dedent(std::string_view s) {
    auto lines = split_lines(s);
    size_t common = std::numeric_limits<size_t>::max();
    for (const auto& l : lines) {
        if (trim(l).empty()) continue;
        size_t n = 0;
        while (n < l.size() && (l[n] == ' ' || l[n] == '\t')) ++n;
        common = std::min(common, n);
    }
    if (common == std::numeric_limits<size_t>::max()) common = 0;
    std::string out;
    for (size_t i = 0; i < lines.size(); ++i) {
        if (i) out += '\n';
        if (lines[i].size() >= common) out += lines[i].substr(common);
    }
    if (!s.empty() && s.back() == '\n') out += '\n';
    return out;
}

}  // namespace rsmig::text
