#pragma once

#include "rsmig/cargo.hpp"
#include "rsmig/repair.hpp"
#include "rsmig/skeleton_graph.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rsmig::metrics {

namespace fs = std::filesystem;

class MetricsError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Incremental compilation rate

struct LedgerEntry {
    std::string node_id;
    /// restored, rolled_back, fallback, missing
    std::string outcome;
    bool restored = false;
    bool fallback = false;
    /// Repair rounds from the translation run, when known.
    std::optional<int> rounds;
    std::vector<std::string> diagnostics;
};

struct ICompResult {
    double rate = 0;
    size_t restored = 0;
    size_t total = 0;
    std::vector<LedgerEntry> ledger;
};

/// Restores `bodies` one at a time into the skeleton at `skeleton_ws` in
/// schedule order, building after each and rolling back failures. Fallback
/// shims and placeholder bodies count as failures without a build. Throws
/// MetricsError when the skeleton does not build to begin with.
ICompResult incremental_comp_rate(const fs::path& skeleton_ws, const std::map<std::string, std::string>& bodies,
                                  const graph::ScheduleLayers& order, const cargo::Toolchain& toolchain = {});

/// Installed body of every schedulable function in a workspace.
std::map<std::string, std::string> installed_bodies(const fs::path& workspace);

/// Copy of `workspace` (build output left out) with every body reset to its placeholder.
void skeleton_copy(const fs::path& workspace, const fs::path& dest);

// ---------------------------------------------------------------------------
// Unsafe ratio

enum class LineClass { Excluded, Safe, Unsafe };

/// `-`, `s`, `u`.
char class_char(LineClass c);

struct FileUnsafe {
    std::string file;
    std::vector<LineClass> lines;
    size_t countable = 0;
    size_t unsafe_lines = 0;
    /// Braces did not balance; the file is left out of the totals.
    bool flagged = false;

    double ratio() const { return countable ? 100.0 * static_cast<double>(unsafe_lines) / static_cast<double>(countable) : 0.0; }
    std::string classes() const;
};

/// Lexical per-line classification of one Rust source file.
FileUnsafe scan_unsafe(std::string_view source, std::string file = {});

struct UnsafeReport {
    double ratio = 0;
    size_t countable = 0;
    size_t unsafe_lines = 0;
    std::vector<FileUnsafe> files;
    std::vector<std::string> flagged;
};

/// Every `.rs` file under `<workspace>/src`.
UnsafeReport unsafe_ratio(const fs::path& workspace);

// ---------------------------------------------------------------------------
// Warnings, tests, repair rounds

/// Distinct (code, span) warnings of a full build; nullopt when it fails.
std::optional<size_t> warning_count(const fs::path& workspace, const cargo::Toolchain& toolchain = {});

struct FcResult {
    std::optional<double> rate;
    int passed = 0;
    int total = 0;
    std::string note;
};

/// Copies the `.rs` files of `tests_dir` into `<workspace>/tests` and runs
/// `cargo test`. Throws MetricsError when the harness output has no result line.
FcResult functional_correctness(const fs::path& workspace, const fs::path& tests_dir,
                                const cargo::Toolchain& toolchain = {});

/// Mean rounds over translated functions; nullopt when none succeeded.
std::optional<double> avg_repair(const std::vector<repair::FunctionOutcome>& outcomes);

// ---------------------------------------------------------------------------
// Report

struct MetricsReport {
    std::optional<double> icomp_rate;
    std::optional<double> fc;
    std::string fc_note;
    double unsafe_ratio = 0;
    std::optional<size_t> warnings;
    std::optional<double> avg_repair;
    std::vector<LedgerEntry> ledger;
    std::vector<std::string> notes;
};

nlohmann::json to_json(const MetricsReport& r);
MetricsReport report_from_json(const nlohmann::json& j);

/// Five columns: ICompRate, FC, Unsafe, Warnings, AvgRepair; `--` when not available.
std::string render_table(const MetricsReport& r);

struct EvaluateOptions {
    /// Clean skeleton to restore into; derived from the workspace when empty.
    fs::path skeleton;
    /// Rust integration tests for FC; FC is not run when empty.
    fs::path tests;
    /// Outcomes of the translation run, for AvgRepair and the ledger.
    std::optional<std::vector<repair::FunctionOutcome>> outcomes;
    /// Scratch space for the restoration copy; a temporary directory when empty.
    fs::path scratch;
    cargo::Toolchain toolchain;
};

/// All five metrics of a translated workspace.
MetricsReport evaluate(const fs::path& workspace, const EvaluateOptions& options = {});

}  // namespace rsmig::metrics
