#pragma once

#include "rsmig/support/error.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rsmig::build {

namespace fs = std::filesystem;

/// One entry of a `compile_commands.json` build trace.
struct CompileCommand {
    fs::path directory;
    fs::path source_file;
    std::vector<std::string> arguments;
    std::optional<fs::path> output_file;

    /// source_file resolved against directory.
    fs::path absolute_source() const;

    bool operator==(const CompileCommand&) const = default;
};

struct LoadOptions {
    /// Entries whose source file is missing are dropped (with a warning)
    /// instead of failing the whole load.
    bool skip_missing_sources = false;
};

class BuildTraceError : public Error {
public:
    BuildTraceError(std::string message, std::optional<size_t> index = std::nullopt, std::string field = {});
    std::optional<size_t> index() const { return index_; }
    const std::string& field() const { return field_; }

private:
    std::optional<size_t> index_;
    std::string field_;
};

/// Reads a build trace. Both the `command` string form and the `arguments`
/// array form are normalized to argv lists. A relative `directory` is taken
/// relative to the trace file's own directory.
std::vector<CompileCommand> load_compile_commands(const fs::path& path, const LoadOptions& options = {});

/// Makes directory, source_file and output_file absolute and lexically normal.
/// Idempotent.
CompileCommand normalize(CompileCommand cmd);

struct Define {
    std::string name;
    std::optional<std::string> value;

    bool operator==(const Define&) const = default;
};

struct TranslationUnitContext {
    CompileCommand command;
    std::vector<Define> defines;
    /// Names removed with -U that are not re-defined later.
    std::vector<std::string> undefines;
    /// -I and -isystem paths, in command-line order, as written.
    std::vector<fs::path> include_paths;
    std::vector<fs::path> system_include_paths;
    std::vector<fs::path> quote_include_paths;
    std::vector<fs::path> forced_includes;
    std::optional<std::string> language_standard;
    /// Flags that change predefined macros (-m*, -f*, -O*, ...) and are
    /// forwarded to the preprocessor.
    std::vector<std::string> preprocessor_flags;
    /// Everything else; preserved, never interpreted.
    std::vector<std::string> ignored_flags;

    bool has_define(std::string_view name) const;
};

/// Derives macro and include-path state from the command's argv. Response
/// files (`@file`) are expanded first. Unknown flags are never an error.
TranslationUnitContext derive_unit_context(const CompileCommand& cmd);

struct PreprocessorConfig {
    std::string executable = "cc";
    std::vector<std::string> base_flags;
};

struct LineOrigin {
    std::string file;
    int line = 0;
    /// The line came from a system header (line-marker flag 3).
    bool system = false;

    bool operator==(const LineOrigin&) const = default;
};

struct PreprocessedUnit {
    TranslationUnitContext origin;
    std::string text;
    /// One slot per line of `text`; empty for line-marker lines.
    std::vector<std::optional<LineOrigin>> line_map;
    /// Object- and function-like macros live at the end of the unit, as the
    /// preprocessor reports them (name -> replacement text, params stripped).
    std::map<std::string, std::string> active_macros;
    std::vector<std::string> notes;
};

class PreprocessError : public Error {
public:
    enum class Kind { ExitFailure, UnresolvedInclude };
    PreprocessError(Kind kind, std::string diagnostics);
    Kind kind() const { return kind_; }
    const std::string& diagnostics() const { return diagnostics_; }

private:
    Kind kind_;
    std::string diagnostics_;
};

/// Runs the configured C preprocessor over the unit under its own flags.
PreprocessedUnit preprocess_unit(const TranslationUnitContext& ctx, const PreprocessorConfig& toolchain = {});

/// Parses raw `-E` output (with line markers) into text + line map.
PreprocessedUnit parse_preprocessed_output(const TranslationUnitContext& ctx, std::string_view raw);

}  // namespace rsmig::build
