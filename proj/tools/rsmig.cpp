// rsmig: build-aware incremental C to Rust migration.

#include "rsmig/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace rsmig;
using rsmig::cli::RunConfig;

void add_run_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--runs", cfg.runs, "Directory holding run results")->capture_default_str();
    cmd->add_option("--run-id", cfg.run_id, "Run id (generated when absent)");
    cmd->add_flag("--force", cfg.force, "Redo an existing result");
}

void add_backend_options(CLI::App* cmd, RunConfig& cfg) {
    auto& b = cfg.backend;
    cmd->add_option("--backend", b.kind, "Model backend")
        ->check(CLI::IsMember({"remote", "replay", "oracle", "script"}))
        ->capture_default_str();
    cmd->add_option("--oracle", b.oracle_file, "Oracle bodies (JSON map of node id to body)");
    cmd->add_option("--script", b.script_file, "Scripted-failure plan");
    cmd->add_option("--replay", b.replay_dir, "Recorded responses");
    cmd->add_option("--record", b.record_dir, "Also store responses here for replay");
    cmd->add_option("--endpoint", b.remote.endpoint, "Chat completion endpoint");
    cmd->add_option("--model", b.remote.model, "Model name sent to the endpoint");
    cmd->add_option("--auth-env", b.remote.auth_env, "Environment variable holding the API token")->capture_default_str();
    cmd->add_option("--max-in-flight", b.max_in_flight, "Concurrent requests")->capture_default_str();
}

int run(int argc, char** argv) {
    CLI::App app{"Build-aware incremental C to Rust migration"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Configuration file (TOML); flags override it");

    RunConfig cfg;

    cli::MineRequest mine;
    std::string regime = "co_evolution";
    auto* c_mine = app.add_subcommand("mine", "Mine C/Rust function pairs and rules from repositories");
    c_mine->add_option("repos", mine.repos, "Git repositories")->required();
    c_mine->add_option("--regime", regime, "general or co_evolution")
        ->check(CLI::IsMember({"general", "co_evolution", "co-evolution"}))
        ->capture_default_str();
    c_mine->add_option("--kb", mine.kb, "Knowledge base directory")->required();

    bool emit_graph = false;
    auto* c_skel = app.add_subcommand("skeleton", "Build a compilable Rust skeleton from a C project");
    c_skel->add_option("project", cfg.project_root, "C project root")->required();
    c_skel->add_option("--trace", cfg.trace, "compile_commands.json (default: in the project root)");
    c_skel->add_option("--out", cfg.out, "Workspace directory")->required();
    c_skel->add_option("--crate", cfg.crate_name, "Crate name (default: project directory name)");
    c_skel->add_flag("--emit-graph", emit_graph, "Also write graph.json into the workspace");
    c_skel->add_flag("--force", cfg.force, "Replace an existing workspace");

    std::filesystem::path graph_out;
    auto* c_graph = app.add_subcommand("graph", "Print the dependency layers of a workspace");
    c_graph->add_option("workspace", cfg.out, "Skeleton workspace")->required();
    c_graph->add_option("--out", graph_out, "Write graph.json here");

    auto* c_tr = app.add_subcommand("translate", "Translate a skeleton bottom-up with compiler feedback");
    c_tr->add_option("workspace", cfg.out, "Skeleton workspace")->required();
    c_tr->add_option("--kb", cfg.kb, "Knowledge base directory (retrieval and accumulation)");
    c_tr->add_option("--k", cfg.k, "Retrieval depth; 0 disables retrieval")->capture_default_str();
    c_tr->add_option("--repair-budget", cfg.repair_budget, "Repair rounds per function")->capture_default_str();
    c_tr->add_option("--jobs", cfg.jobs, "Functions translated in parallel within a layer")->capture_default_str();
    add_backend_options(c_tr, cfg);
    add_run_options(c_tr, cfg);

    auto* c_eval = app.add_subcommand("evaluate", "Compute the metric suite of a translated workspace");
    c_eval->add_option("workspace", cfg.out, "Translated workspace")->required();
    c_eval->add_option("--skeleton", cfg.skeleton, "Clean skeleton (default: derived from the workspace)");
    c_eval->add_option("--tests", cfg.tests, "Directory of Rust integration tests");
    add_run_options(c_eval, cfg);

    std::string format = "table";
    std::string report_id;
    auto* c_report = app.add_subcommand("report", "Show the report of a finished run");
    c_report->add_option("run-id", report_id, "Run id")->required();
    c_report->add_option("--runs", cfg.runs, "Directory holding run results")->capture_default_str();
    c_report->add_option("--format", format, "table or json")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? cli::kSuccess : cli::kUsageError;
    }

    try {
        if (*c_mine) {
            mine.regime = knowledge::parse_regime(regime);
            cli::cmd_mine(mine, std::cout);
        } else if (*c_skel) {
            cli::cmd_skeleton(cfg, emit_graph, std::cout);
        } else if (*c_graph) {
            cli::cmd_graph(cfg.out, graph_out, std::cout);
        } else if (*c_tr) {
            cli::cmd_translate(cfg, std::cout);
        } else if (*c_eval) {
            cli::cmd_evaluate(cfg, std::cout);
        } else if (*c_report) {
            std::cout << cli::cmd_report(cfg.runs, report_id, format);
        }
    } catch (const cli::UsageError& e) {
        std::cerr << "rsmig: " << e.what() << "\n";
        return cli::kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "rsmig: error: " << e.what() << "\n";
        return cli::kDomainError;
    }
    return cli::kSuccess;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
