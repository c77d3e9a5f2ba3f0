#include "rsmig/repair.hpp"

#include "rsmig/support/files.hpp"
#include "rsmig/support/text.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <regex>
#include <set>
#include <thread>

namespace rsmig::repair {

using nlohmann::json;

const char* source_name(FixSource s) {
    switch (s) {
    case FixSource::Generation: return "generation";
    case FixSource::RuleFix: return "rule_fix";
    case FixSource::ModelRepair: return "model_repair";
    case FixSource::Fallback: return "fallback";
    }
    return "generation";
}

FixSource parse_source(std::string_view s) {
    for (auto v : {FixSource::Generation, FixSource::RuleFix, FixSource::ModelRepair, FixSource::Fallback})
        if (s == source_name(v)) return v;
    throw RepairError("unknown fix source `" + std::string(s) + "`");
}

const char* state_name(FinalState s) {
    switch (s) {
    case FinalState::Translated: return "translated";
    case FinalState::Fallback: return "fallback";
    case FinalState::Failed: return "failed";
    }
    return "failed";
}

FinalState parse_final_state(std::string_view s) {
    for (auto v : {FinalState::Translated, FinalState::Fallback, FinalState::Failed})
        if (s == state_name(v)) return v;
    throw RepairError("unknown final state `" + std::string(s) + "`");
}

DiagnosticRecord record_of(const cargo::Diagnostic& d) {
    DiagnosticRecord r{d.code, d.message, {}, d.rendered.empty() ? d.message : d.rendered};
    if (const auto* s = d.primary_span()) r.span = fmt::format("{}:{}:{}", s->file, s->line_start, s->column_start);
    return r;
}

int FunctionOutcome::compile_invocations() const {
    return static_cast<int>(std::count_if(attempts.begin(), attempts.end(), [](const RepairAttempt& a) { return a.compiled; }));
}

json to_json(const RepairAttempt& a) {
    json d = json::array();
    for (const auto& r : a.diagnostics)
        d.push_back({{"code", r.code}, {"message", r.message}, {"span", r.span}, {"rendered", r.rendered}});
    return {{"round", a.round},       {"source", source_name(a.source)}, {"success", a.success},
            {"compiled", a.compiled}, {"consumed_round", a.consumed_round}, {"body", a.body},
            {"diagnostics", d},       {"note", a.note}};
}

json to_json(const FunctionOutcome& o) {
    json attempts = json::array();
    for (const auto& a : o.attempts) attempts.push_back(to_json(a));
    return {{"node", o.node_id},
            {"state", state_name(o.state)},
            {"rounds_used", o.rounds_used},
            {"fallback", o.fallback_installed},
            {"compile_invocations", o.compile_invocations()},
            {"attempts", attempts}};
}

FunctionOutcome outcome_from_json(const json& j) {
    FunctionOutcome o;
    o.node_id = j.at("node").get<std::string>();
    o.state = parse_final_state(j.at("state").get<std::string>());
    o.rounds_used = j.at("rounds_used").get<int>();
    o.fallback_installed = j.value("fallback", false);
    for (const auto& a : j.at("attempts")) {
        RepairAttempt r;
        r.round = a.at("round").get<int>();
        r.source = parse_source(a.at("source").get<std::string>());
        r.success = a.at("success").get<bool>();
        r.compiled = a.value("compiled", true);
        r.consumed_round = a.value("consumed_round", false);
        r.body = a.value("body", "");
        r.note = a.value("note", "");
        for (const auto& d : a.at("diagnostics"))
            r.diagnostics.push_back({d.value("code", ""), d.value("message", ""), d.value("span", ""), d.value("rendered", "")});
        o.attempts.push_back(std::move(r));
    }
    return o;
}

std::recursive_mutex& build_lock() {
    static std::recursive_mutex mu;
    return mu;
}

// ---------------------------------------------------------------------------
// Workspace

Workspace::Workspace(fs::path root, cargo::Toolchain toolchain)
    : root_(std::move(root)), toolchain_(std::move(toolchain)), project_(skeleton::load_project(root_)),
      index_(graph::build_symbol_index(project_)) {}

const skeleton::FunctionStub& Workspace::stub(const std::string& node_id) const {
    const auto* s = project_.stub(node_id);
    if (!s) throw RepairError("no function `" + node_id + "` in workspace " + root_.string());
    return *s;
}

cargo::BuildResult Workspace::build() const {
    std::lock_guard lock(build_lock());
    {
        std::lock_guard c(count_mu_);
        ++builds_;
    }
    return cargo::build(root_, toolchain_);
}

int Workspace::builds() const {
    std::lock_guard c(count_mu_);
    return builds_;
}

CompileResult compile_and_install(Workspace& ws, const std::string& node_id, std::string_view body) {
    const auto& stub = ws.stub(node_id);
    std::lock_guard lock(build_lock());
    CompileResult out;
    out.record = translate::install_body(translate::module_file(ws.root(), stub), stub.qualified_name, body);
    cargo::BuildResult built;
    try {
        built = ws.build();
    } catch (...) {
        translate::rollback(out.record);
        throw;
    }
    out.ok = built.success;
    if (!out.ok) {
        translate::rollback(out.record);
        out.errors = built.errors();
        if (out.errors.empty()) {
            cargo::Diagnostic d;
            d.level = "error";
            d.message = text::trim_copy(built.raw_output);
            d.rendered = d.message;
            out.errors.push_back(std::move(d));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rule fixes

namespace {

struct Edit {
    size_t line;
    size_t col_start;  // byte offsets in the body line
    size_t col_end;
    std::string replacement;
    std::string what;
};

bool is_int_type(std::string_view t) {
    static const std::set<std::string_view> ints{"i8",  "i16", "i32", "i64", "i128", "isize",
                                                 "u8",  "u16", "u32", "u64", "u128", "usize"};
    return ints.contains(t);
}

std::vector<std::string> backticked(std::string_view s) {
    std::vector<std::string> out;
    size_t i = 0;
    while ((i = s.find('`', i)) != std::string_view::npos) {
        size_t e = s.find('`', i + 1);
        if (e == std::string_view::npos) break;
        out.emplace_back(s.substr(i + 1, e - i - 1));
        i = e + 1;
    }
    return out;
}

/// Expected and found types of a mismatch, from the span label or notes.
std::optional<std::pair<std::string, std::string>> mismatch_types(const cargo::Diagnostic& d) {
    static const std::regex label(R"(expected `([^`]+)`, found (?:`([^`]+)`|(integer)))");
    std::vector<std::string> texts;
    if (const auto* s = d.primary_span(); s && s->label) texts.push_back(*s->label);
    for (const auto& c : d.children) texts.push_back(c);
    for (const auto& t : texts) {
        std::smatch m;
        if (std::regex_search(t, m, label)) return std::pair{m[1].str(), m[2].matched ? m[2].str() : m[3].str()};
    }
    return std::nullopt;
}

std::optional<std::string> pointee(const std::string& t, const char* prefix) {
    if (t.rfind(prefix, 0) == 0) return t.substr(std::string_view(prefix).size());
    return std::nullopt;
}

class BodyMap {
public:
    BodyMap(std::vector<std::string>& lines, const translate::InstallRecord& rec, const fs::path& workspace)
        : lines_(lines), rec_(rec) {
        std::error_code ec;
        auto rel = fs::relative(rec.file, workspace, ec);
        file_ = ec ? rec.file.generic_string() : rel.generic_string();
    }

    /// Body line and byte range of a single-line span inside the installed body.
    std::optional<Edit> locate(const cargo::Span& s) const {
        if (fs::path(s.file).lexically_normal().generic_string() != file_) return std::nullopt;
        if (s.line_start != s.line_end) return std::nullopt;
        int li = s.line_start - rec_.first_body_line;
        if (li < 0 || li >= static_cast<int>(lines_.size())) return std::nullopt;
        const std::string& line = lines_[static_cast<size_t>(li)];
        int a = s.column_start - 1 - rec_.indent, b = s.column_end - 1 - rec_.indent;
        if (a < 0 || b < a || b > static_cast<int>(line.size())) return std::nullopt;
        return Edit{static_cast<size_t>(li), static_cast<size_t>(a), static_cast<size_t>(b), {}, {}};
    }

    std::string text(const Edit& e) const { return lines_[e.line].substr(e.col_start, e.col_end - e.col_start); }

private:
    std::vector<std::string>& lines_;
    const translate::InstallRecord& rec_;
    std::string file_;
};

std::optional<Edit> fix_mismatch(const cargo::Diagnostic& d, const BodyMap& map) {
    auto types = mismatch_types(d);
    const auto* span = d.primary_span();
    if (!types || !span) return std::nullopt;
    auto e = map.locate(*span);
    if (!e) return std::nullopt;
    const auto& [expected, found] = *types;
    std::string s = map.text(*e);
    if (s.empty()) return std::nullopt;
    if (is_int_type(expected) && (is_int_type(found) || found == "integer") && expected != found) {
        e->replacement = "(" + s + " as " + expected + ")";
        e->what = "cast to " + expected;
    } else if (auto p = pointee(expected, "*const "); p && *p == found) {
        e->replacement = "::core::ptr::addr_of!(" + s + ")";
        e->what = "address-of";
    } else if (auto p = pointee(expected, "*mut "); p && *p == found) {
        e->replacement = "::core::ptr::addr_of_mut!(" + s + ")";
        e->what = "address-of";
    } else if (auto q = pointee(found, "*const "); q && *q == expected) {
        e->replacement = "unsafe { *" + s + " }";
        e->what = "dereference";
    } else if (auto q = pointee(found, "*mut "); q && *q == expected) {
        e->replacement = "unsafe { *" + s + " }";
        e->what = "dereference";
    } else if (auto r = pointee(expected, "&mut "); r && (pointee(found, "*mut ") == r)) {
        e->replacement = "unsafe { &mut *" + s + " }";
        e->what = "reborrow";
    } else if (auto r = pointee(expected, "&"); r && (pointee(found, "*const ") == r || pointee(found, "*mut ") == r)) {
        e->replacement = "unsafe { &*" + s + " }";
        e->what = "reborrow";
    } else {
        return std::nullopt;
    }
    return e;
}

/// `p.f` on a raw pointer becomes `(*p).f`.
std::optional<Edit> fix_field_on_pointer(const cargo::Diagnostic& d, const BodyMap& map,
                                         const std::vector<std::string>& lines) {
    auto names = backticked(d.message);
    if (names.size() < 2 || names[1].rfind('*', 0) != 0) return std::nullopt;
    const auto* span = d.primary_span();
    if (!span) return std::nullopt;
    auto e = map.locate(*span);
    if (!e) return std::nullopt;
    const std::string& line = lines[e->line];
    size_t dot = e->col_start;
    while (dot > 0 && line[dot - 1] == ' ') --dot;
    if (dot == 0 || line[dot - 1] != '.') return std::nullopt;
    size_t end = dot - 1, start = end;
    while (start > 0 && (text::is_identifier_char(line[start - 1]) || line[start - 1] == '.')) --start;
    if (start == end || !text::is_identifier_start(line[start])) return std::nullopt;
    std::string recv = line.substr(start, end - start);
    return Edit{e->line, start, end, "(*" + recv + ")", "dereference `" + recv + "`"};
}

std::optional<Edit> fix_unresolved(const cargo::Diagnostic& d, const BodyMap& map, const graph::GlobalSymbolIndex& index) {
    auto names = backticked(d.message);
    if (names.empty()) return std::nullopt;
    const std::string& name = names.front();
    const auto* span = d.primary_span();
    if (!span) return std::nullopt;
    auto e = map.locate(*span);
    if (!e || map.text(*e) != name) return std::nullopt;
    bool want_type = d.code == "E0412" || d.message.find("undeclared type") != std::string::npos;
    bool want_fn = d.message.find("cannot find function") != std::string::npos;
    std::vector<const graph::IndexEntry*> hits;
    for (const auto* h : index.by_name(name)) {
        bool type = h->kind == graph::SymbolKind::Type;
        if (want_type != type) continue;
        if (want_fn && h->kind != graph::SymbolKind::Function) continue;
        if (h->visibility == skeleton::Visibility::Private) continue;
        hits.push_back(h);
    }
    if (hits.size() != 1) return std::nullopt;
    e->replacement = hits[0]->qualified_name;
    e->what = "qualify `" + name + "`";
    return e;
}

}  // namespace

std::optional<RuleFix> rule_based_fix(std::string_view body, const std::vector<cargo::Diagnostic>& diagnostics,
                                      const translate::InstallRecord& record, const fs::path& workspace,
                                      const graph::GlobalSymbolIndex& index) {
    auto lines = text::split_lines(translate::escape_markers(body));
    while (!lines.empty() && text::trim(lines.back()).empty()) lines.pop_back();
    BodyMap map(lines, record, workspace);
    std::vector<Edit> edits;
    std::set<std::string> mut_names;
    for (const auto& d : diagnostics) {
        if (!d.is_error()) continue;
        std::optional<Edit> e;
        if (d.code == "E0308") e = fix_mismatch(d, map);
        else if (d.code == "E0609") e = fix_field_on_pointer(d, map, lines);
        else if (d.code == "E0425" || d.code == "E0412" || d.code == "E0433") e = fix_unresolved(d, map, index);
        else if (d.code == "E0384" || d.code == "E0596") {
            auto names = backticked(d.message);
            if (!names.empty() && text::is_identifier(names.front())) mut_names.insert(names.front());
        }
        if (e) edits.push_back(std::move(*e));
    }

    RuleFix fix;
    std::sort(edits.begin(), edits.end(), [](const Edit& a, const Edit& b) {
        return std::tie(a.line, a.col_start) > std::tie(b.line, b.col_start);
    });
    std::optional<Edit> last;
    for (const auto& e : edits) {
        if (last && last->line == e.line && e.col_end > last->col_start) continue;  // overlaps
        lines[e.line].replace(e.col_start, e.col_end - e.col_start, e.replacement);
        fix.applied.push_back(fmt::format("{} at body line {}", e.what, e.line + 1));
        last = e;
    }
    std::vector<std::string> prologue;
    for (const auto& n : mut_names) {
        std::regex let("\\blet\\s+" + n + "\\b");
        bool found = false;
        for (auto& l : lines) {
            std::smatch m;
            if (std::regex_search(l, m, let)) {
                l.insert(static_cast<size_t>(m.position(0)) + 3, " mut");
                found = true;
                break;
            }
        }
        if (!found) prologue.push_back("let mut " + n + " = " + n + ";");
        fix.applied.push_back("mut `" + n + "`");
    }
    if (fix.applied.empty()) return std::nullopt;
    std::reverse(fix.applied.begin(), fix.applied.end() - static_cast<std::ptrdiff_t>(mut_names.size()));
    lines.insert(lines.begin(), prologue.begin(), prologue.end());
    fix.body = text::join(lines, "\n");
    return fix;
}

// ---------------------------------------------------------------------------
// Fallback

namespace {
constexpr std::string_view kFallbackAttr = "#[cfg_attr(any(), rsmig_fallback)]";
}

std::string fallback_body(const skeleton::FunctionStub& stub) {
    std::vector<std::string> params, args;
    for (const auto& p : stub.params) {
        params.push_back(p.name + ": " + p.rust_type);
        args.push_back(p.name);
    }
    std::string ret = stub.return_type.empty() ? "" : " -> " + stub.return_type;
    std::string shim = "rsmig_c_" + (stub.c_name);
    return fmt::format("{}\nextern \"C\" {{\n    #[link_name = \"{}\"]\n    fn {}({}){};\n}}\nunsafe {{ {}({}) }}",
                       kFallbackAttr, stub.c_name, shim, text::join(params, ", "), ret, shim, text::join(args, ", "));
}

bool is_fallback_body(std::string_view body) { return body.find(kFallbackAttr) != std::string_view::npos; }

// ---------------------------------------------------------------------------
// Repair loop

std::string model_repair(backend::Backend& backend, const skeleton::FunctionStub& stub, const translate::Prompt& prompt,
                         std::string_view body, const std::vector<cargo::Diagnostic>& diagnostics, int round,
                         const RepairOptions& options, const RepairHooks& hooks, bool* truncated) {
    std::vector<std::string> rendered;
    for (const auto& d : diagnostics) rendered.push_back(d.rendered.empty() ? d.message : d.rendered);
    backend::GenerationRequest req;
    req.system = prompt.system;
    req.user = translate::repair_user_prompt(prompt, body, rendered, options.max_diagnostics, options.templates, truncated);
    req.function_id = stub.qualified_name;
    req.attempt = round;
    if (hooks.on_prompt) hooks.on_prompt(stub.qualified_name, round, req);
    auto resp = backend.generate(req);
    if (!resp.ok()) throw backend::BackendError("backend error: " + resp.error);
    return translate::clean_response(resp.text, stub.name);
}

FunctionOutcome repair_loop(Workspace& ws, const std::string& node_id, const translate::Prompt& prompt,
                            const backend::GenerationResponse& initial, backend::Backend& backend,
                            const RepairOptions& options, const RepairHooks& hooks) {
    const auto& stub = ws.stub(node_id);
    FunctionOutcome out;
    out.node_id = stub.qualified_name;
    int next_round = 0;

    auto record = [&](RepairAttempt a) {
        a.round = next_round++;
        if (hooks.on_attempt) hooks.on_attempt(out.node_id, a);
        out.attempts.push_back(std::move(a));
    };
    auto backend_failure = [&](FixSource src, const std::string& message, bool consumed) {
        RepairAttempt a;
        a.source = src;
        a.compiled = false;
        a.consumed_round = consumed;
        a.diagnostics.push_back({"backend", message, {}, message});
        a.note = "no build: backend error";
        record(std::move(a));
    };
    auto compile = [&](const std::string& body, FixSource src, std::string note) {
        auto cr = compile_and_install(ws, out.node_id, body);
        RepairAttempt a;
        a.source = src;
        a.body = body;
        a.success = cr.ok;
        a.note = std::move(note);
        for (const auto& d : cr.errors) a.diagnostics.push_back(record_of(d));
        a.consumed_round = src == FixSource::ModelRepair || (src == FixSource::RuleFix && !cr.ok);
        record(std::move(a));
        return cr;
    };

    std::string body;
    std::optional<CompileResult> last;
    bool ok = false;
    if (initial.ok()) {
        body = translate::clean_response(initial.text, stub.name);
        last = compile(body, FixSource::Generation, {});
        ok = last->ok;
    } else {
        backend_failure(FixSource::Generation, "backend error: " + initial.error, false);
    }

    FixSource prev = FixSource::Generation;
    while (!ok && out.rounds_used < options.budget) {
        if (options.rule_fixes && prev != FixSource::RuleFix && last && !last->ok) {
            if (auto fix = rule_based_fix(body, last->errors, last->record, ws.root(), ws.index())) {
                prev = FixSource::RuleFix;
                auto cr = compile(fix->body, FixSource::RuleFix, text::join(fix->applied, "; "));
                if (!cr.ok) ++out.rounds_used;
                body = fix->body;
                ok = cr.ok;
                last = std::move(cr);
                continue;
            }
        }
        prev = FixSource::ModelRepair;
        ++out.rounds_used;
        std::string candidate;
        bool truncated = false;
        try {
            std::vector<cargo::Diagnostic> diags = last ? last->errors : std::vector<cargo::Diagnostic>{};
            candidate = model_repair(backend, stub, prompt, body, diags, next_round, options, hooks, &truncated);
        } catch (const Error& e) {
            backend_failure(FixSource::ModelRepair, e.what(), true);
            continue;
        }
        std::string note;
        if (truncated) note = fmt::format("diagnostics truncated to the first {}", options.max_diagnostics);
        auto cr = compile(candidate, FixSource::ModelRepair, note);
        body = candidate;
        ok = cr.ok;
        last = std::move(cr);
    }

    if (ok) {
        out.state = FinalState::Translated;
        return out;
    }
    auto cr = compile(fallback_body(stub), FixSource::Fallback, "budget exhausted");
    out.fallback_installed = cr.ok;
    out.state = cr.ok ? FinalState::Fallback : FinalState::Failed;
    if (!cr.ok) spdlog::warn("{}: fallback shim does not compile, placeholder kept", out.node_id);
    return out;
}

// ---------------------------------------------------------------------------
// Coordinator

namespace {

std::string file_safe(std::string_view id) {
    std::string s(id);
    s = text::replace_all(s, "::", ".");
    for (char& c : s)
        if (!text::is_identifier_char(c) && c != '.' && c != '-') c = '_';
    return s;
}

graph::NodeState node_state(FinalState s) {
    switch (s) {
    case FinalState::Translated: return graph::NodeState::Translated;
    case FinalState::Fallback: return graph::NodeState::Fallback;
    case FinalState::Failed: return graph::NodeState::Failed;
    }
    return graph::NodeState::Failed;
}

/// Body already present in the workspace, when it is not the placeholder.
std::optional<std::string> existing_body(const Workspace& ws, const skeleton::FunctionStub& stub) {
    auto body = translate::installed_body(read_file(translate::module_file(ws.root(), stub)), stub.qualified_name);
    if (!body) throw RepairError("markers for `" + stub.qualified_name + "` missing in " + stub.rust_file);
    if (text::trim(*body) == text::trim(stub.placeholder_body())) return std::nullopt;
    return body;
}

}  // namespace

MigrationResult migrate(Workspace& ws, backend::Backend& backend, knowledge::KnowledgeBase* kb,
                        knowledge::Reranker& reranker, knowledge::RuleExtractor& extractor,
                        const MigrationOptions& options) {
    MigrationResult result;
    const auto& project = ws.project();
    result.graph = graph::build_graph(project, ws.index());
    for (const auto& s : project.stubs) {
        if (!s.schedulable) continue;
        if (auto b = existing_body(ws, s))
            result.graph.set_state(s.qualified_name,
                                   is_fallback_body(*b) ? graph::NodeState::Fallback : graph::NodeState::Translated);
    }
    result.layers = graph::schedule(result.graph);

    auto pre = ws.build();
    if (!pre.success) throw RepairError("workspace " + ws.root().string() + " does not build before translation");

    std::mutex log_mu;
    std::ofstream attempts_log;
    RepairHooks hooks;
    if (!options.run_dir.empty()) {
        fs::create_directories(options.run_dir / "prompts");
        attempts_log.open(options.run_dir / "attempts.jsonl", std::ios::trunc);
        if (!attempts_log) throw RepairError("cannot write " + (options.run_dir / "attempts.jsonl").string());
        hooks.on_prompt = [&](const std::string& id, int round, const backend::GenerationRequest& req) {
            write_file(options.run_dir / "prompts" / fmt::format("{}.{}.txt", file_safe(id), round),
                       "### system\n" + req.system + "\n\n### user\n" + req.user + "\n");
        };
        hooks.on_attempt = [&](const std::string& id, const RepairAttempt& a) {
            json j = to_json(a);
            j["node"] = id;
            std::lock_guard lock(log_mu);
            attempts_log << j.dump() << "\n";
            attempts_log.flush();
        };
    }

    std::map<std::string, FunctionOutcome> outcomes;
    std::mutex state_mu;
    for (const auto& layer : result.layers.layers) {
        std::vector<std::string> work;
        for (const auto& id : layer)
            if (const auto* n = result.graph.node(id); n && n->schedulable && n->state == graph::NodeState::Pending)
                work.push_back(id);

        auto snapshot = kb && options.k > 0 ? kb->snapshot() : nullptr;
        std::atomic<size_t> next{0};
        std::exception_ptr failure;
        auto worker = [&] {
            for (size_t i = next++; i < work.size(); i = next++) {
                const std::string& id = work[i];
                try {
                    const auto& stub = ws.stub(id);
                    graph::SkeletonGraph view;
                    {
                        std::lock_guard lock(state_mu);
                        view = result.graph;
                    }
                    auto ctx = translate::assemble_context(id, project, ws.index(), view, options.context);
                    knowledge::Retrieved retrieved;
                    if (snapshot) retrieved = knowledge::retrieve(*snapshot, stub.c_source, stub.signature_text, options.k, reranker);
                    auto prompt = translate::build_prompt(ctx, retrieved, options.repair.templates, options.prompt);
                    backend::GenerationRequest req;
                    req.system = prompt.system;
                    req.user = prompt.user();
                    req.function_id = id;
                    req.attempt = 0;
                    if (hooks.on_prompt) hooks.on_prompt(id, 0, req);
                    backend::GenerationResponse resp;
                    try {
                        resp = backend.generate(req);
                    } catch (const Error& e) {
                        resp.finish = backend::FinishReason::Error;
                        resp.error = e.what();
                    }
                    auto outcome = repair_loop(ws, id, prompt, resp, backend, options.repair, hooks);
                    std::lock_guard lock(state_mu);
                    result.graph.set_state(id, node_state(outcome.state));
                    outcomes[id] = std::move(outcome);
                } catch (...) {
                    std::lock_guard lock(state_mu);
                    if (!failure) failure = std::current_exception();
                }
            }
        };
        int width = std::max(1, std::min<int>(options.jobs, static_cast<int>(work.size())));
        std::vector<std::thread> pool;
        for (int t = 1; t < width; ++t) pool.emplace_back(worker);
        worker();
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);

        if (kb && options.accumulate) {
            for (const auto& id : work) {
                const auto& o = outcomes.at(id);
                if (o.state != FinalState::Translated) continue;
                const auto& stub = ws.stub(id);
                std::string rust = stub.signature_text + " {\n" + text::indent_lines(o.attempts.back().body, "    ") + "\n}\n";
                kb->accumulate(stub.c_name, stub.c_source, stub.name, rust, extractor,
                               options.run_dir.empty() ? "run" : "run:" + options.run_dir.filename().string());
                ++result.accumulated;
            }
        }
        spdlog::debug("layer done: {} function(s)", work.size());
    }

    for (const auto& layer : result.layers.layers)
        for (const auto& id : layer)
            if (auto it = outcomes.find(id); it != outcomes.end()) result.outcomes.push_back(it->second);

    if (!options.run_dir.empty()) {
        json all = json::array();
        for (const auto& o : result.outcomes) all.push_back(to_json(o));
        write_file(options.run_dir / "outcomes.json", all.dump(2) + "\n");
        graph::write_graph_json(options.run_dir / "graph.json", result.graph, result.layers);
    }
    return result;
}

std::vector<FunctionOutcome> load_outcomes(const fs::path& run_dir) {
    fs::path f = run_dir / "outcomes.json";
    if (!fs::exists(f)) throw RepairError("no outcomes in " + run_dir.string());
    const json j = json::parse(read_file(f));
    std::vector<FunctionOutcome> out;
    for (const auto& o : j) out.push_back(outcome_from_json(o));
    return out;
}

}  // namespace rsmig::repair
