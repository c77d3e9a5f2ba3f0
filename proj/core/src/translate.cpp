#include "rsmig/translate.hpp"

#include "rsmig/support/files.hpp"
#include "rsmig/support/text.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <regex>
#include <set>

namespace rsmig::translate {

namespace embedded {
extern const std::string_view kSystem, kContext, kExamples, kRules, kTarget, kRepair;
}

using skeleton::SkeletonProject;

size_t approx_tokens(std::string_view s) { return (s.size() + 3) / 4; }

// ---------------------------------------------------------------------------
// Context

std::string TranslationContext::render() const {
    std::string out;
    auto section = [&](const char* title, const std::vector<ContextItem>& items, bool as_decl) {
        if (items.empty()) return;
        if (!out.empty()) out += "\n";
        out += fmt::format("// {}\n", title);
        for (const auto& it : items) {
            std::string t = text::trim_copy(it.text);
            out += as_decl ? t + ";\n" : t + "\n";
        }
    };
    section("Types", types, false);
    section("Globals and constants", globals, false);
    section("Functions (signatures)", callees, true);
    section("Declared in C", shared, false);
    return out;
}

namespace {

bool visible_from(const graph::IndexEntry& e, std::string_view module, std::string_view shared) {
    return e.module == module || e.module == shared || e.visibility != skeleton::Visibility::Private;
}

const graph::IndexEntry* type_by_rust_name(const graph::GlobalSymbolIndex& index, const std::string& name,
                                           std::string_view module, std::string_view shared) {
    const graph::IndexEntry* best = nullptr;
    for (const auto* e : index.by_name(name)) {
        if (e->kind != graph::SymbolKind::Type || !visible_from(*e, module, shared)) continue;
        if (e->module == module) return e;
        if (!best || e->module == shared) best = e;
    }
    return best;
}

const skeleton::ExternDecl* extern_named(const SkeletonProject& p, std::string_view c_name) {
    for (const auto& e : p.externs)
        if (e.name == c_name) return &e;
    return nullptr;
}

}  // namespace

TranslationContext assemble_context(const std::string& node_id, const SkeletonProject& project,
                                    const graph::GlobalSymbolIndex& index, const graph::SkeletonGraph& graph,
                                    const ContextOptions& options) {
    const auto* stub = project.stub(node_id);
    if (!stub) throw TranslateError("no function stub `" + node_id + "`");
    TranslationContext ctx;
    ctx.node_id = node_id;
    ctx.c_source = stub->c_source;
    ctx.signature = stub->signature_text;

    const std::string& module = stub->module;
    const std::string& shared = project.shared_layer;
    std::map<std::string, std::string> types, globals, callees, externs;
    std::vector<const skeleton::RustTypeDecl*> type_work;

    auto add_type = [&](size_t slot) {
        const auto& t = project.types.at(slot);
        std::string q = t.module + "::" + t.name;
        if (types.emplace(q, t.emitted_text).second) type_work.push_back(&t);
    };
    auto add_extern = [&](const std::string& c_name) {
        if (const auto* e = extern_named(project, c_name)) externs.emplace(c_name, e->emitted_text);
    };
    auto add_entry = [&](const graph::IndexEntry& e) {
        switch (e.kind) {
        case graph::SymbolKind::Function:
            if (e.qualified_name != node_id) {
                const auto& callee = project.stubs.at(e.slot);
                callees.emplace(e.qualified_name, callee.signature_text);
                for (const auto& id : text::code_identifiers(callee.signature_text))
                    if (const auto* t = type_by_rust_name(index, id, callee.module, shared)) add_type(t->slot);
            }
            break;
        case graph::SymbolKind::Type:
        case graph::SymbolKind::Enumerator: add_type(e.slot); break;
        case graph::SymbolKind::Static: {
            const auto& s = project.statics.at(e.slot);
            globals.emplace(e.qualified_name, s.emitted_text);
            for (const auto& id : text::code_identifiers(s.rust_type))
                if (const auto* t = type_by_rust_name(index, id, s.module, shared)) add_type(t->slot);
            break;
        }
        case graph::SymbolKind::Constant: globals.emplace(e.qualified_name, project.constants.at(e.slot).emitted_text); break;
        }
    };
    auto is_boundary = [&](const std::string& c_name) {
        return index.is_boundary(c_name) || graph.node(graph::boundary_id(c_name)) != nullptr;
    };

    for (const auto& c : stub->c_calls) {
        if (const auto* e = index.resolve_function(c, module)) add_entry(*e);
        else if (is_boundary(c)) add_extern(c);
        else throw TranslateError(fmt::format("{} calls `{}`, which is neither in the symbol index nor kept in C", node_id, c));
    }
    for (const auto& v : stub->c_value_refs) {
        if (const auto* e = index.resolve_value(v, module)) add_entry(*e);
        else if (const auto* f = index.resolve_function(v, module)) add_entry(*f);
        else if (is_boundary(v)) add_extern(v);
        else throw TranslateError(fmt::format("{} references `{}`, which is neither in the symbol index nor kept in C", node_id, v));
    }
    for (const auto& t : stub->c_type_refs)
        if (const auto* e = index.resolve_type(t, module)) add_entry(*e);
    // macro constants and enumerators named in the original text
    for (const auto& id : text::code_identifiers(stub->c_source))
        if (const auto* e = index.resolve_value(id, module))
            if (e->kind == graph::SymbolKind::Constant || e->kind == graph::SymbolKind::Enumerator) add_entry(*e);
    for (const auto& id : text::code_identifiers(stub->signature_text))
        if (const auto* t = type_by_rust_name(index, id, module, shared)) add_type(t->slot);

    // close over types named inside type declarations
    while (!type_work.empty()) {
        const auto* t = type_work.back();
        type_work.pop_back();
        for (const auto& id : text::code_identifiers(t->emitted_text))
            if (const auto* e = type_by_rust_name(index, id, t->module, shared)) add_type(e->slot);
    }

    auto items = [](const std::map<std::string, std::string>& m) {
        std::vector<ContextItem> v;
        for (const auto& [k, t] : m) v.push_back({k, t});
        return v;
    };
    ctx.types = items(types);
    ctx.globals = items(globals);
    ctx.callees = items(callees);
    ctx.shared = items(externs);

    for (auto* list : {&ctx.callees, &ctx.shared, &ctx.globals, &ctx.types}) {
        while (!list->empty() && ctx.tokens() > options.token_budget) {
            ctx.truncated.push_back(list->back().name);
            list->pop_back();
        }
    }
    return ctx;
}

// ---------------------------------------------------------------------------
// Prompts

PromptTemplates PromptTemplates::defaults() {
    auto s = [](std::string_view v) { return std::string(text::trim(v)); };
    return {s(embedded::kSystem), s(embedded::kContext), s(embedded::kExamples),
            s(embedded::kRules),  s(embedded::kTarget),  s(embedded::kRepair)};
}

PromptTemplates PromptTemplates::load(const fs::path& dir) {
    PromptTemplates t = defaults();
    auto over = [&](const char* name, std::string& field) {
        fs::path f = dir / (std::string(name) + ".txt");
        if (fs::exists(f)) field = text::trim_copy(read_file(f));
    };
    over("system", t.system);
    over("context", t.context);
    over("examples", t.examples);
    over("rules", t.rules);
    over("target", t.target);
    over("repair", t.repair);
    return t;
}

std::string fill(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    size_t i = 0;
    while (i < tmpl.size()) {
        size_t open = tmpl.find("{{", i);
        if (open == std::string_view::npos) break;
        size_t close = tmpl.find("}}", open + 2);
        if (close == std::string_view::npos) break;
        out += tmpl.substr(i, open - i);
        std::string key(text::trim(tmpl.substr(open + 2, close - open - 2)));
        auto it = values.find(key);
        if (it == values.end()) throw TranslateError("template placeholder `" + key + "` has no value");
        out += it->second;
        i = close + 2;
    }
    out += tmpl.substr(i);
    return out;
}

std::string Prompt::user() const {
    std::vector<std::string> parts;
    for (const auto* s : {&context, &examples, &rules, &target})
        if (!s->empty()) parts.push_back(*s);
    return text::join(parts, "\n\n");
}

std::string rule_bullet(const knowledge::FragmentRule& r) {
    std::string out = "- C: " + r.c_idiom + " \u21d2 Rust: " + r.rust_idiom;
    if (!r.hint.empty()) out += " (" + r.hint + ")";
    return out;
}

std::string rule_bullet(const knowledge::ApiRule& r) {
    return fmt::format("- C: {} \u21d2 Rust: {} (API correspondence seen in {} pair{})", r.c_interface,
                       r.rust_interface, r.support, r.support == 1 ? "" : "s");
}

Prompt build_prompt(const TranslationContext& ctx, const knowledge::Retrieved& retrieved,
                    const PromptTemplates& templates, const PromptOptions& options) {
    Prompt p;
    p.system = templates.system;
    p.context = fill(templates.context, {{"context", text::trim_copy(ctx.render())}});
    std::vector<std::string> examples;
    for (size_t i = 0; i < retrieved.examples.size() && i < options.max_examples; ++i)
        examples.push_back("```rust\n" + text::trim_copy(retrieved.examples[i].rust_source) + "\n```");
    if (!examples.empty()) p.examples = fill(templates.examples, {{"examples", text::join(examples, "\n\n")}});
    std::vector<std::string> bullets;
    for (const auto& r : retrieved.fragment_rules)
        if (bullets.size() < options.max_rules) bullets.push_back(rule_bullet(r));
    for (const auto& r : retrieved.api_rules)
        if (bullets.size() < options.max_rules) bullets.push_back(rule_bullet(r));
    if (!bullets.empty()) p.rules = fill(templates.rules, {{"rules", text::join(bullets, "\n")}});
    p.target = fill(templates.target, {{"c_source", text::trim_copy(ctx.c_source)}, {"signature", ctx.signature}});
    return p;
}

std::string repair_user_prompt(const Prompt& original, std::string_view failing_body,
                               const std::vector<std::string>& diagnostics, size_t max_diagnostics,
                               const PromptTemplates& templates, bool* truncated) {
    std::vector<std::string> kept;
    for (size_t i = 0; i < diagnostics.size() && i < max_diagnostics; ++i) kept.push_back(text::trim_copy(diagnostics[i]));
    std::string diag = text::join(kept, "\n\n");
    bool cut = diagnostics.size() > max_diagnostics;
    if (cut) diag += fmt::format("\n\n({} more diagnostics omitted)", diagnostics.size() - max_diagnostics);
    if (truncated) *truncated = cut;
    return original.user() + "\n\n" +
           fill(templates.repair, {{"body", text::trim_copy(failing_body)}, {"diagnostics", diag}});
}

// ---------------------------------------------------------------------------
// Responses

namespace {

/// Offset of the brace closing the one at `open`; strings, chars and comments skipped.
size_t match_brace(std::string_view s, size_t open) {
    int depth = 0;
    for (size_t i = open; i < s.size(); ++i) {
        char c = s[i];
        if (c == '/' && i + 1 < s.size() && s[i + 1] == '/') {
            while (i < s.size() && s[i] != '\n') ++i;
        } else if (c == '/' && i + 1 < s.size() && s[i + 1] == '*') {
            size_t e = s.find("*/", i + 2);
            if (e == std::string_view::npos) return std::string_view::npos;
            i = e + 1;
        } else if (c == '"') {
            for (++i; i < s.size() && s[i] != '"'; ++i)
                if (s[i] == '\\') ++i;
        } else if (c == '\'' && i + 2 < s.size() && (s[i + 2] == '\'' || s[i + 1] == '\\')) {
            size_t e = s.find('\'', i + 2);
            if (e != std::string_view::npos) i = e;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return i;
        }
    }
    return std::string_view::npos;
}

bool is_prose(std::string_view line) {
    auto t = text::trim(line);
    if (t.empty()) return false;
    if (t.rfind("//", 0) == 0 || t.rfind("#[", 0) == 0) return false;
    static const std::regex code_start(R"(^(let|return|if|for|while|loop|match|unsafe|use|fn|pub|const|static|struct|impl|else|break|continue)\b)");
    if (std::regex_search(std::string(t), code_start)) return false;
    if (t.find_first_of(";{}()=[]") != std::string_view::npos && t.back() != ':') return false;
    return std::count(t.begin(), t.end(), ' ') >= 1 || t.back() == ':';
}

}  // namespace

std::string clean_response(std::string_view response, const std::string& rust_fn_name) {
    std::string s = text::replace_all(std::string(response), "\r\n", "\n");
    if (auto fence = s.find("```"); fence != std::string::npos) {
        size_t start = s.find('\n', fence);
        start = start == std::string::npos ? s.size() : start + 1;
        size_t end = s.find("```", start);
        s = s.substr(start, end == std::string::npos ? std::string::npos : end - start);
    } else {
        auto lines = text::split_lines(s);
        size_t first = 0, last = lines.size();
        while (first < last && (text::trim(lines[first]).empty() || is_prose(lines[first]))) ++first;
        while (last > first && (text::trim(lines[last - 1]).empty() || is_prose(lines[last - 1]))) --last;
        s = text::join(std::vector<std::string>(lines.begin() + static_cast<std::ptrdiff_t>(first),
                                                lines.begin() + static_cast<std::ptrdiff_t>(last)),
                       "\n");
    }
    // a whole function: keep its body
    std::string name = rust_fn_name.rfind("r#", 0) == 0 ? rust_fn_name.substr(2) : rust_fn_name;
    std::regex sig("\\bfn\\s+(r#)?" + name + "\\s*[<(]");
    std::smatch m;
    if (std::regex_search(s, m, sig)) {
        size_t pos = static_cast<size_t>(m.position(0));
        int paren = 0;
        size_t open = std::string::npos;
        for (size_t i = pos; i < s.size(); ++i) {
            if (s[i] == '(') ++paren;
            else if (s[i] == ')') --paren;
            else if (s[i] == '{' && paren == 0) {
                open = i;
                break;
            }
        }
        if (open != std::string::npos) {
            size_t close = match_brace(s, open);
            if (close != std::string::npos) s = s.substr(open + 1, close - open - 1);
        }
    }
    std::vector<std::string> kept;
    for (auto& l : text::split_lines(s))
        if (l.find("rsmig:begin") == std::string::npos && l.find("rsmig:end") == std::string::npos)
            kept.push_back(l.substr(0, l.find_last_not_of(" \t") + 1));
    while (!kept.empty() && text::trim(kept.back()).empty()) kept.pop_back();
    size_t first = 0;
    while (first < kept.size() && text::trim(kept[first]).empty()) ++first;
    kept.erase(kept.begin(), kept.begin() + static_cast<std::ptrdiff_t>(first));
    return text::dedent(text::join(kept, "\n"));
}

// ---------------------------------------------------------------------------
// Installation

std::string escape_markers(std::string_view body) {
    std::string s(body);
    s = text::replace_all(s, "rsmig:begin", "rsmig\\x3abegin");
    s = text::replace_all(s, "rsmig:end", "rsmig\\x3aend");
    return s;
}

namespace {

struct Region {
    size_t begin_line;  // index of the begin marker line
    size_t end_line;    // index of the end marker line
    std::string indent;
};

std::optional<Region> find_region(const std::vector<std::string>& lines, const std::string& q) {
    const std::string b = skeleton::begin_marker(q), e = skeleton::end_marker(q);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (text::trim(lines[i]) != b) continue;
        for (size_t j = i + 1; j < lines.size(); ++j)
            if (text::trim(lines[j]) == e) {
                std::string indent = lines[i].substr(0, lines[i].find_first_not_of(" \t"));
                return Region{i, j, indent};
            }
        return std::nullopt;
    }
    return std::nullopt;
}

}  // namespace

std::optional<std::string> installed_body(std::string_view file_text, const std::string& qualified_name) {
    auto lines = text::split_lines(file_text);
    auto r = find_region(lines, qualified_name);
    if (!r) return std::nullopt;
    std::vector<std::string> body(lines.begin() + static_cast<std::ptrdiff_t>(r->begin_line + 1),
                                  lines.begin() + static_cast<std::ptrdiff_t>(r->end_line));
    return text::dedent(text::join(body, "\n"));
}

InstallRecord install_body(const fs::path& file, const std::string& qualified_name, std::string_view body) {
    InstallRecord rec;
    rec.file = file;
    rec.qualified_name = qualified_name;
    rec.previous = read_file(file);
    auto lines = text::split_lines(rec.previous);
    auto r = find_region(lines, qualified_name);
    if (!r) throw TranslateError("markers for `" + qualified_name + "` not found in " + file.string());
    std::vector<std::string> out(lines.begin(), lines.begin() + static_cast<std::ptrdiff_t>(r->begin_line + 1));
    auto body_lines = text::split_lines(escape_markers(body));
    while (!body_lines.empty() && text::trim(body_lines.back()).empty()) body_lines.pop_back();
    for (const auto& l : body_lines) out.push_back(l.empty() ? l : r->indent + l);
    out.insert(out.end(), lines.begin() + static_cast<std::ptrdiff_t>(r->end_line), lines.end());
    rec.first_body_line = static_cast<int>(r->begin_line) + 2;
    rec.body_lines = static_cast<int>(body_lines.size());
    rec.indent = static_cast<int>(r->indent.size());
    std::string joined = text::join(out, "\n");
    if (!rec.previous.empty() && rec.previous.back() == '\n') joined += "\n";
    write_file(file, joined);
    return rec;
}

void rollback(const InstallRecord& record) { write_file(record.file, record.previous); }

fs::path module_file(const fs::path& workspace, const skeleton::FunctionStub& stub) {
    return workspace / stub.rust_file;
}

}  // namespace rsmig::translate
