#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rsmig::cargo {

struct Span {
    std::string file;
    int line_start = 0;
    int line_end = 0;
    int column_start = 0;
    int column_end = 0;
    bool primary = false;
    std::optional<std::string> label;
    std::optional<std::string> suggested_replacement;

    bool operator==(const Span&) const = default;
};

struct Diagnostic {
    std::string level;  // "error", "warning", ...
    std::string code;   // "E0308", "unused_variables"; may be empty
    std::string message;
    std::vector<Span> spans;
    /// Notes and help attached to the diagnostic, flattened.
    std::vector<std::string> children;
    std::string rendered;

    const Span* primary_span() const;
    bool is_error() const { return level == "error" || level == "error: internal compiler error"; }
};

struct Toolchain {
    std::string cargo = "cargo";
    std::vector<std::string> extra_args;
    bool offline = true;
};

struct BuildResult {
    bool success = false;
    std::vector<Diagnostic> diagnostics;
    /// Anything printed that was not a JSON message (cargo's own errors).
    std::string raw_output;

    std::vector<Diagnostic> errors() const;
    std::vector<Diagnostic> warnings() const;
};

/// Parses `cargo build --message-format=json` output.
BuildResult parse_build_output(const std::string& stdout_text, const std::string& stderr_text, int exit_code);

/// Runs `cargo build` in `workspace` with machine-readable diagnostics.
/// Throws InfrastructureError when cargo cannot be started.
BuildResult build(const std::filesystem::path& workspace, const Toolchain& toolchain = {});

struct TestResult {
    bool built = false;
    int passed = 0;
    int failed = 0;
    int ignored = 0;
    /// At least one "test result:" summary line was found.
    bool parsed = false;
    std::string output;
};

/// Sums every "test result: ... N passed; M failed; K ignored" line.
TestResult parse_test_output(const std::string& output, bool built);

TestResult test(const std::filesystem::path& workspace, const Toolchain& toolchain = {});

}  // namespace rsmig::cargo
