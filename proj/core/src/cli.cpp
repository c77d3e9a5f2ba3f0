#include "rsmig/cli.hpp"

#include "rsmig/skeleton.hpp"
#include "rsmig/skeleton_graph.hpp"
#include "rsmig/support/files.hpp"

#include <fmt/format.h>

#include <chrono>
#include <ctime>

namespace rsmig::cli {

namespace {

std::string str(const fs::path& p) { return p.empty() ? std::string() : p.string(); }

bool is_workspace(const fs::path& dir) { return fs::exists(dir / ".rsmig" / "project.json"); }

/// Empties `dir` for a fresh result, refusing to touch a previous one without --force.
void claim_output(const fs::path& dir, bool force, bool (*ours)(const fs::path&), const std::string& what) {
    if (!fs::exists(dir) || fs::is_empty(dir)) return;
    if (!ours(dir)) throw Error(fmt::format("{} `{}` exists and was not written by rsmig", what, dir.string()));
    if (!force) throw Error(fmt::format("{} `{}` already exists; pass --force to redo it", what, dir.string()));
    fs::remove_all(dir);
}

bool is_run_dir(const fs::path& dir) {
    return fs::exists(dir / "config.json") || fs::exists(dir / "outcomes.json") || fs::exists(dir / "report.json");
}

fs::path require_workspace(const fs::path& ws) {
    if (ws.empty()) throw UsageError("no workspace given");
    if (!is_workspace(ws)) throw Error(fmt::format("`{}` is not an rsmig skeleton workspace", ws.string()));
    return ws;
}

void write_config(const RunConfig& cfg) { write_file(cfg.run_dir() / "config.json", to_json(cfg).dump(2) + "\n"); }

}  // namespace

void RunConfig::validate() const {
    if (k < 0) throw UsageError("--k must be at least 0");
    if (repair_budget < 0) throw UsageError("--repair-budget must be at least 0");
    if (jobs < 1) throw UsageError("--jobs must be at least 1");
    const auto& b = backend;
    if (b.kind == "oracle" && b.oracle_file.empty()) throw UsageError("--backend oracle needs --oracle FILE");
    if (b.kind == "script" && b.script_file.empty()) throw UsageError("--backend script needs --script FILE");
    if (b.kind == "replay" && b.replay_dir.empty()) throw UsageError("--backend replay needs --replay DIR");
    if (b.kind == "remote" && b.remote.endpoint.empty()) throw UsageError("--backend remote needs --endpoint URL");
    if (b.kind != "oracle" && b.kind != "script" && b.kind != "replay" && b.kind != "remote")
        throw UsageError("unknown backend `" + b.kind + "`");
}

nlohmann::json to_json(const RunConfig& c) {
    return {{"project_root", str(c.project_root)},
            {"trace", str(c.trace)},
            {"kb", str(c.kb)},
            {"backend",
             {{"kind", c.backend.kind},
              {"endpoint", c.backend.remote.endpoint},
              {"model", c.backend.remote.model},
              {"auth_env", c.backend.remote.auth_env},
              {"oracle", str(c.backend.oracle_file)},
              {"script", str(c.backend.script_file)},
              {"replay", str(c.backend.replay_dir)},
              {"record", str(c.backend.record_dir)}}},
            {"k", c.k},
            {"repair_budget", c.repair_budget},
            {"jobs", c.jobs},
            {"workspace", str(c.out)},
            {"run_id", c.run_id},
            {"tests", str(c.tests)},
            {"skeleton", str(c.skeleton)}};
}

std::string new_run_id(const fs::path& runs) {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
    std::string id = buf;
    for (int n = 2; fs::exists(runs / id); ++n) id = fmt::format("{}-{}", buf, n);
    return id;
}

knowledge::MineSummary cmd_mine(const MineRequest& req, std::ostream& out) {
    if (req.repos.empty()) throw UsageError("no repository given");
    if (req.kb.empty()) throw UsageError("mine needs --kb DIR");
    for (const auto& repo : req.repos)
        if (!fs::is_directory(repo)) throw Error(fmt::format("cannot read repository `{}`", repo.string()));

    knowledge::KnowledgeBase kb(req.kb);
    knowledge::OverlapReranker reranker;
    knowledge::DeterministicExtractor extractor;
    knowledge::MineOptions o;
    o.regime = req.regime;
    knowledge::MineSummary total;
    for (const auto& repo : req.repos) {
        auto s = knowledge::mine_repository(repo, kb, reranker, extractor, o);
        out << repo.string() << " (" << knowledge::regime_name(req.regime) << ")\n";
        for (const auto& tag : knowledge::all_tags()) {
            auto it = s.per_heuristic.find(tag);
            size_t n = it == s.per_heuristic.end() ? 0 : it->second;
            out << fmt::format("  {:<14} {}\n", tag, n);
            total.per_heuristic[tag] += n;
        }
        for (const auto& note : s.notes) out << "  note: " << note << "\n";
        total.candidates += s.candidates;
        total.file_pairs += s.file_pairs;
        total.pairs += s.pairs;
        total.notes.insert(total.notes.end(), s.notes.begin(), s.notes.end());
    }
    auto snap = kb.snapshot();
    total.api_rules = snap->api_rules.size();
    total.fragment_rules = snap->fragment_rules.size();
    out << fmt::format("candidates {}  file pairs {}  function pairs {}\n", total.candidates, total.file_pairs,
                       total.pairs);
    out << fmt::format("knowledge base: {} pairs, {} API rules, {} fragment rules\n", snap->pairs.size(),
                       total.api_rules, total.fragment_rules);
    return total;
}

fs::path cmd_skeleton(const RunConfig& cfg, bool emit_graph, std::ostream& out) {
    if (cfg.project_root.empty()) throw UsageError("no project given");
    if (cfg.out.empty()) throw UsageError("skeleton needs --out DIR");
    auto trace = cfg.trace.empty() ? cfg.project_root / "compile_commands.json" : cfg.trace;
    if (!fs::exists(trace)) throw Error(fmt::format("build trace `{}` not found", trace.string()));
    claim_output(cfg.out, cfg.force, is_workspace, "workspace");

    skeleton::BuildSkeletonOptions o;
    o.config.mirror.crate_name = cfg.crate_name.empty() ? fs::absolute(cfg.project_root).lexically_normal().filename().string()
                                                        : cfg.crate_name;
    if (o.config.mirror.crate_name.empty()) o.config.mirror.crate_name = "skeleton";
    auto project = skeleton::skeleton_from_trace(cfg.project_root, trace, o);
    try {
        skeleton::assemble_and_verify(project, cfg.out);
    } catch (const skeleton::SkeletonBuildError& e) {
        for (const auto& d : e.diagnostics()) out << d.rendered << "\n";
        throw;
    }
    out << fmt::format("skeleton: {} functions, {} types, {} statics, {} constants, {} extern declarations\n",
                       project.stubs.size(), project.types.size(), project.statics.size(), project.constants.size(),
                       project.externs.size());
    for (const auto& n : project.notes) out << "note: " << n << "\n";
    if (emit_graph) cmd_graph(cfg.out, cfg.out / "graph.json", out);
    out << "workspace " << cfg.out.string() << " builds\n";
    return cfg.out;
}

graph::ScheduleLayers cmd_graph(const fs::path& workspace, const fs::path& graph_out, std::ostream& out) {
    auto project = skeleton::load_project(require_workspace(workspace));
    auto g = graph::build_graph(project, graph::build_symbol_index(project));
    auto layers = graph::schedule(g);
    for (size_t i = 0; i < layers.layers.size(); ++i) {
        bool cyclic = layers.final_layer_cyclic && i + 1 == layers.layers.size();
        out << fmt::format("layer {}{}:", i, cyclic ? " (cycles)" : "");
        for (const auto& id : layers.layers[i]) out << " " << id;
        out << "\n";
    }
    if (!graph_out.empty()) graph::write_graph_json(graph_out, g, layers);
    return layers;
}

repair::MigrationResult cmd_translate(RunConfig& cfg, std::ostream& out) {
    cfg.validate();
    repair::Workspace ws(require_workspace(cfg.out));
    if (cfg.run_id.empty()) cfg.run_id = new_run_id(cfg.runs);
    claim_output(cfg.run_dir(), cfg.force, is_run_dir, "run");
    write_config(cfg);

    auto backend = backend::make_backend(cfg.backend);
    std::unique_ptr<knowledge::KnowledgeBase> kb;
    if (!cfg.kb.empty()) kb = std::make_unique<knowledge::KnowledgeBase>(cfg.kb);
    knowledge::OverlapReranker reranker;
    knowledge::DeterministicExtractor extractor;

    repair::MigrationOptions o;
    o.k = static_cast<size_t>(cfg.k);
    o.jobs = cfg.jobs;
    o.repair.budget = cfg.repair_budget;
    o.run_dir = cfg.run_dir();
    auto result = repair::migrate(ws, *backend, kb.get(), reranker, extractor, o);

    std::map<repair::FinalState, size_t> by_state;
    for (const auto& oc : result.outcomes) ++by_state[oc.state];
    out << fmt::format("run {}: {} functions in {} layers; translated {}, fallback {}, failed {}\n", cfg.run_id,
                       result.outcomes.size(), result.layers.layers.size(), by_state[repair::FinalState::Translated],
                       by_state[repair::FinalState::Fallback], by_state[repair::FinalState::Failed]);
    if (kb) out << fmt::format("accumulated {} pairs into {}\n", result.accumulated, cfg.kb.string());
    return result;
}

metrics::MetricsReport cmd_evaluate(RunConfig& cfg, std::ostream& out) {
    auto ws = require_workspace(cfg.out);
    if (cfg.run_id.empty()) cfg.run_id = new_run_id(cfg.runs);
    auto report_file = cfg.run_dir() / "report.json";
    if (fs::exists(report_file) && !cfg.force)
        throw Error(fmt::format("run {} already has a report; pass --force to redo it", cfg.run_id));
    if (!fs::exists(cfg.run_dir() / "config.json")) write_config(cfg);

    metrics::EvaluateOptions o;
    o.skeleton = cfg.skeleton;
    o.tests = cfg.tests;
    if (fs::exists(cfg.run_dir() / "outcomes.json")) o.outcomes = repair::load_outcomes(cfg.run_dir());
    auto report = metrics::evaluate(ws, o);
    write_file(report_file, metrics::to_json(report).dump(2) + "\n");
    out << metrics::render_table(report);
    for (const auto& n : report.notes) out << "note: " << n << "\n";
    if (!report.fc_note.empty()) out << "FC: " << report.fc_note << "\n";
    out << "report written to " << report_file.string() << "\n";
    return report;
}

std::string cmd_report(const fs::path& runs, const std::string& run_id, const std::string& format) {
    if (format != "table" && format != "json") throw UsageError("--format must be `table` or `json`");
    if (run_id.empty()) throw UsageError("no run id given");
    auto file = runs / run_id / "report.json";
    if (!fs::exists(file)) throw Error(fmt::format("no report for run `{}` under {}", run_id, runs.string()));
    auto report = metrics::report_from_json(nlohmann::json::parse(read_file(file)));
    if (format == "json") return metrics::to_json(report).dump(2) + "\n";
    return metrics::render_table(report);
}

}  // namespace rsmig::cli
