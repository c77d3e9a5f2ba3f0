#pragma once

#include "rsmig/backend.hpp"
#include "rsmig/cargo.hpp"
#include "rsmig/knowledge.hpp"
#include "rsmig/skeleton.hpp"
#include "rsmig/skeleton_graph.hpp"
#include "rsmig/translate.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace rsmig::repair {

namespace fs = std::filesystem;

class RepairError : public Error {
public:
    using Error::Error;
};

enum class FixSource { Generation, RuleFix, ModelRepair, Fallback };
const char* source_name(FixSource s);
FixSource parse_source(std::string_view s);

enum class FinalState { Translated, Fallback, Failed };
const char* state_name(FinalState s);
FinalState parse_final_state(std::string_view s);

struct DiagnosticRecord {
    std::string code;
    std::string message;
    /// `file:line:column` of the primary span, or empty.
    std::string span;
    std::string rendered;
};

DiagnosticRecord record_of(const cargo::Diagnostic& d);

struct RepairAttempt {
    /// 0 for the initial generation; strictly increasing.
    int round = 0;
    std::string body;
    bool success = false;
    std::vector<DiagnosticRecord> diagnostics;
    FixSource source = FixSource::Generation;
    /// False when no build ran (backend error).
    bool compiled = true;
    /// Whether this attempt used up a repair round.
    bool consumed_round = false;
    std::string note;
};

struct FunctionOutcome {
    std::string node_id;
    FinalState state = FinalState::Failed;
    std::vector<RepairAttempt> attempts;
    int rounds_used = 0;
    bool fallback_installed = false;

    int compile_invocations() const;
};

nlohmann::json to_json(const RepairAttempt& a);
nlohmann::json to_json(const FunctionOutcome& o);
FunctionOutcome outcome_from_json(const nlohmann::json& j);

/// Serializes every workspace build in the process.
std::recursive_mutex& build_lock();

/// A skeleton workspace on disk with the toolchain used to build it.
class Workspace {
public:
    explicit Workspace(fs::path root, cargo::Toolchain toolchain = {});

    const fs::path& root() const { return root_; }
    const cargo::Toolchain& toolchain() const { return toolchain_; }
    const skeleton::SkeletonProject& project() const { return project_; }
    const graph::GlobalSymbolIndex& index() const { return index_; }
    const skeleton::FunctionStub& stub(const std::string& node_id) const;

    /// Full build under the build lock.
    cargo::BuildResult build() const;
    int builds() const;

private:
    fs::path root_;
    cargo::Toolchain toolchain_;
    skeleton::SkeletonProject project_;
    graph::GlobalSymbolIndex index_;
    mutable std::mutex count_mu_;
    mutable int builds_ = 0;
};

struct CompileResult {
    bool ok = false;
    std::vector<cargo::Diagnostic> errors;
    /// Install record of the attempt (already rolled back when !ok).
    translate::InstallRecord record;
};

/// Installs `body`, builds, and rolls back on failure. Throws
/// InfrastructureError when cargo cannot run.
CompileResult compile_and_install(Workspace& ws, const std::string& node_id, std::string_view body);

/// Version of the closed rule-fix set.
inline constexpr int kRuleFixVersion = 1;

struct RuleFix {
    std::string body;
    /// One line per applied fix.
    std::vector<std::string> applied;
};

/// Deterministic rewrites for integer-width casts, raw-pointer
/// dereference/address-of, unique path qualification and `mut` on named
/// locals. Spans are mapped into the body through `record`.
std::optional<RuleFix> rule_based_fix(std::string_view body, const std::vector<cargo::Diagnostic>& diagnostics,
                                      const translate::InstallRecord& record, const fs::path& workspace,
                                      const graph::GlobalSymbolIndex& index);

/// Body that calls the original C symbol through an inline extern block.
std::string fallback_body(const skeleton::FunctionStub& stub);
bool is_fallback_body(std::string_view body);

struct RepairOptions {
    int budget = 5;
    size_t max_diagnostics = 8;
    bool rule_fixes = true;
    translate::PromptTemplates templates = translate::PromptTemplates::defaults();
};

/// Observer hooks for persistence.
struct RepairHooks {
    std::function<void(const std::string& node_id, int round, const backend::GenerationRequest&)> on_prompt;
    std::function<void(const std::string& node_id, const RepairAttempt&)> on_attempt;
};

/// Candidate body from the backend's answer to a repair prompt.
std::string model_repair(backend::Backend& backend, const skeleton::FunctionStub& stub,
                         const translate::Prompt& prompt, std::string_view body,
                         const std::vector<cargo::Diagnostic>& diagnostics, int round, const RepairOptions& options,
                         const RepairHooks& hooks = {}, bool* truncated = nullptr);

/// Compile, then rule fixes and model repairs until the build passes or the
/// budget is spent; the fallback shim goes in after that.
FunctionOutcome repair_loop(Workspace& ws, const std::string& node_id, const translate::Prompt& prompt,
                            const backend::GenerationResponse& initial, backend::Backend& backend,
                            const RepairOptions& options = {}, const RepairHooks& hooks = {});

// ---------------------------------------------------------------------------
// Layer-by-layer translation

struct MigrationOptions {
    /// Retrieval depth; 0 disables retrieval.
    size_t k = 5;
    int jobs = 1;
    bool accumulate = true;
    RepairOptions repair;
    translate::ContextOptions context;
    translate::PromptOptions prompt;
    /// `runs/<id>`; nothing is persisted when empty.
    fs::path run_dir;
};

struct MigrationResult {
    std::vector<FunctionOutcome> outcomes;  // schedule order
    graph::SkeletonGraph graph;
    graph::ScheduleLayers layers;
    size_t accumulated = 0;
};

/// Translates every schedulable function of the workspace bottom-up.
MigrationResult migrate(Workspace& ws, backend::Backend& backend, knowledge::KnowledgeBase* kb,
                        knowledge::Reranker& reranker, knowledge::RuleExtractor& extractor,
                        const MigrationOptions& options = {});

/// `<run_dir>/outcomes.json` as written by migrate.
std::vector<FunctionOutcome> load_outcomes(const fs::path& run_dir);

}  // namespace rsmig::repair
