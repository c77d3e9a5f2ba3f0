#pragma once

#include "rsmig/backend.hpp"
#include "rsmig/knowledge.hpp"
#include "rsmig/metrics.hpp"
#include "rsmig/repair.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace rsmig::cli {

namespace fs = std::filesystem;

/// Bad flags or flag combinations; exit code 2.
class UsageError : public Error {
public:
    using Error::Error;
};

enum ExitCode { kSuccess = 0, kDomainError = 1, kUsageError = 2 };

struct RunConfig {
    fs::path project_root;
    /// Build trace; `<project_root>/compile_commands.json` when empty.
    fs::path trace;
    fs::path kb;
    backend::BackendConfig backend;
    int k = 5;
    int repair_budget = 5;
    int jobs = 1;
    /// Skeleton workspace.
    fs::path out;
    std::string crate_name;
    fs::path runs = "runs";
    std::string run_id;
    fs::path tests;
    fs::path skeleton;
    bool force = false;

    /// Throws UsageError on k < 0, R < 0, jobs < 1 or a backend missing its input.
    void validate() const;
    fs::path run_dir() const { return runs / run_id; }
};

/// Never contains a credential, only the name of the variable holding it.
nlohmann::json to_json(const RunConfig& c);

/// `YYYYMMDD-HHMMSS`, suffixed until no such directory exists under `runs`.
std::string new_run_id(const fs::path& runs);

struct MineRequest {
    std::vector<fs::path> repos;
    knowledge::Regime regime = knowledge::Regime::CoEvolution;
    fs::path kb;
};

knowledge::MineSummary cmd_mine(const MineRequest& req, std::ostream& out);

/// Builds the skeleton into `cfg.out`; `emit_graph` also writes `graph.json` beside it.
fs::path cmd_skeleton(const RunConfig& cfg, bool emit_graph, std::ostream& out);

/// Layer listing of a workspace, plus `graph.json` at `graph_out` when given.
graph::ScheduleLayers cmd_graph(const fs::path& workspace, const fs::path& graph_out, std::ostream& out);

/// Translates `cfg.out` into `runs/<id>`; fills in the run id when empty.
repair::MigrationResult cmd_translate(RunConfig& cfg, std::ostream& out);

/// Evaluates `cfg.out` and writes `runs/<id>/report.json`.
metrics::MetricsReport cmd_evaluate(RunConfig& cfg, std::ostream& out);

/// `table` or `json` rendering of a finished run.
std::string cmd_report(const fs::path& runs, const std::string& run_id, const std::string& format);

}  // namespace rsmig::cli
