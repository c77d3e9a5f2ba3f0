#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rsmig {

struct ProcessOptions {
    std::filesystem::path cwd;
    /// Added to (or overriding) the inherited environment.
    std::vector<std::pair<std::string, std::string>> env;
    std::optional<std::string> stdin_text;
};

struct ProcessResult {
    int exit_code = -1;
    std::string out;
    std::string err;

    bool ok() const { return exit_code == 0; }
};

/// Runs argv[0] (looked up on PATH) and captures both output streams.
/// Throws InfrastructureError when the process cannot be spawned.
ProcessResult run_process(std::span<const std::string> argv, const ProcessOptions& options = {});

/// True when `name` resolves to an executable on PATH (or is an executable path).
bool executable_available(const std::string& name);

}  // namespace rsmig
