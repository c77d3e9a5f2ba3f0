#pragma once

#include "rsmig/knowledge.hpp"
#include "rsmig/skeleton.hpp"
#include "rsmig/skeleton_graph.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rsmig::translate {

namespace fs = std::filesystem;

class TranslateError : public Error {
public:
    using Error::Error;
};

/// Rough token count: ceil(chars / 4).
size_t approx_tokens(std::string_view s);

// ---------------------------------------------------------------------------
// Context

struct ContextItem {
    std::string name;  // qualified name, or the C name for declarations kept in C
    std::string text;
};

struct TranslationContext {
    std::string node_id;
    std::string c_source;
    std::string signature;
    std::vector<ContextItem> types;
    /// Statics and constants.
    std::vector<ContextItem> globals;
    std::vector<ContextItem> callees;
    /// Declarations kept in C (extern block of the shared layer).
    std::vector<ContextItem> shared;
    /// Names removed to fit the budget, in removal order.
    std::vector<std::string> truncated;

    std::string render() const;
    size_t tokens() const { return approx_tokens(render()); }
};

struct ContextOptions {
    size_t token_budget = 6000;
};

/// Declarations reached from the stub's signature and its C body, resolved
/// through the index, closed over type references. Over budget, callees go
/// first, then C-side declarations, then globals, then types, each from the
/// end of its (name-sorted) list.
TranslationContext assemble_context(const std::string& node_id, const skeleton::SkeletonProject& project,
                                    const graph::GlobalSymbolIndex& index, const graph::SkeletonGraph& graph,
                                    const ContextOptions& options = {});

// ---------------------------------------------------------------------------
// Prompts

/// Text templates with `{{name}}` placeholders.
struct PromptTemplates {
    std::string system;
    std::string context;   // {{context}}
    std::string examples;  // {{examples}}
    std::string rules;     // {{rules}}
    std::string target;    // {{c_source}} {{signature}}
    std::string repair;    // {{body}} {{diagnostics}}

    static PromptTemplates defaults();
    /// Defaults overridden by `<name>.txt` files present in `dir`.
    static PromptTemplates load(const fs::path& dir);
};

std::string fill(std::string_view tmpl, const std::map<std::string, std::string>& values);

struct Prompt {
    std::string system;
    std::string context;
    std::string examples;  // empty when nothing was retrieved
    std::string rules;
    std::string target;

    /// Non-empty sections in fixed order.
    std::string user() const;
};

struct PromptOptions {
    size_t max_examples = 3;
    size_t max_rules = 8;
};

/// One bullet line: C idiom, double arrow, Rust idiom, dash, hint.
std::string rule_bullet(const knowledge::FragmentRule& r);
std::string rule_bullet(const knowledge::ApiRule& r);

Prompt build_prompt(const TranslationContext& ctx, const knowledge::Retrieved& retrieved,
                    const PromptTemplates& templates = PromptTemplates::defaults(), const PromptOptions& options = {});

/// `original user prompt` + failing body + diagnostics (first `max_diagnostics`).
std::string repair_user_prompt(const Prompt& original, std::string_view failing_body,
                               const std::vector<std::string>& diagnostics, size_t max_diagnostics,
                               const PromptTemplates& templates, bool* truncated = nullptr);

// ---------------------------------------------------------------------------
// Responses and installation

/// Code fences and surrounding prose removed; a full function matching
/// `fn <name>` trimmed to its body; marker lines dropped; dedented.
std::string clean_response(std::string_view response, const std::string& rust_fn_name);

/// Text between the markers, dedented (nullopt when the markers are missing).
std::optional<std::string> installed_body(std::string_view file_text, const std::string& qualified_name);

/// Marker text inside a body is rewritten so it cannot end the region early.
std::string escape_markers(std::string_view body);

struct InstallRecord {
    fs::path file;
    std::string qualified_name;
    std::string previous;  // file bytes before the install
    /// 1-based line of the first body line in the new file.
    int first_body_line = 0;
    int body_lines = 0;
    /// Columns of indentation added in front of each body line.
    int indent = 0;
};

/// Replaces the region between the function's markers with `body`.
/// Throws TranslateError when the markers are missing.
InstallRecord install_body(const fs::path& module_file, const std::string& qualified_name, std::string_view body);
void rollback(const InstallRecord& record);

/// Workspace-relative module file holding the stub.
fs::path module_file(const fs::path& workspace, const skeleton::FunctionStub& stub);

}  // namespace rsmig::translate
