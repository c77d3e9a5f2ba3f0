#include "rsmig/metrics.hpp"

#include "rsmig/support/files.hpp"
#include "rsmig/support/text.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <set>

namespace rsmig::metrics {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Incremental compilation rate

std::map<std::string, std::string> installed_bodies(const fs::path& workspace) {
    auto project = skeleton::load_project(workspace);
    std::map<std::string, std::string> out;
    std::map<std::string, std::string> files;
    for (const auto& s : project.stubs) {
        if (!s.schedulable) continue;
        auto [it, fresh] = files.try_emplace(s.rust_file);
        if (fresh) it->second = read_file(workspace / s.rust_file);
        auto body = translate::installed_body(it->second, s.qualified_name);
        if (!body) throw MetricsError("markers for `" + s.qualified_name + "` missing in " + s.rust_file);
        out[s.qualified_name] = *body;
    }
    return out;
}

void skeleton_copy(const fs::path& workspace, const fs::path& dest) {
    fs::create_directories(dest);
    for (const auto& entry : fs::directory_iterator(workspace)) {
        if (entry.path().filename() == "target") continue;
        fs::copy(entry.path(), dest / entry.path().filename(),
                 fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    }
    auto project = skeleton::load_project(dest);
    for (const auto& s : project.stubs)
        if (s.schedulable) translate::install_body(dest / s.rust_file, s.qualified_name, s.placeholder_body());
}

ICompResult incremental_comp_rate(const fs::path& skeleton_ws, const std::map<std::string, std::string>& bodies,
                                  const graph::ScheduleLayers& order, const cargo::Toolchain& toolchain) {
    repair::Workspace ws(skeleton_ws, toolchain);
    if (!ws.build().success) throw MetricsError("skeleton " + skeleton_ws.string() + " does not build");

    std::vector<std::string> sequence;
    std::set<std::string> seen;
    for (const auto& layer : order.layers)
        for (const auto& id : layer)
            if (bodies.contains(id) && seen.insert(id).second) sequence.push_back(id);
    for (const auto& [id, b] : bodies)
        if (seen.insert(id).second) sequence.push_back(id);

    ICompResult r;
    for (const auto& id : sequence) {
        const auto* stub = ws.project().stub(id);
        if (!stub) throw MetricsError("no function `" + id + "` in skeleton " + skeleton_ws.string());
        const std::string& body = bodies.at(id);
        LedgerEntry e;
        e.node_id = id;
        if (repair::is_fallback_body(body)) {
            e.outcome = "fallback";
            e.fallback = true;
        } else if (text::trim(body) == text::trim(stub->placeholder_body())) {
            e.outcome = "missing";
        } else {
            auto cr = repair::compile_and_install(ws, id, body);
            e.restored = cr.ok;
            e.outcome = cr.ok ? "restored" : "rolled_back";
            for (const auto& d : cr.errors) e.diagnostics.push_back(d.rendered.empty() ? d.message : d.rendered);
        }
        if (e.restored) ++r.restored;
        r.ledger.push_back(std::move(e));
    }
    r.total = r.ledger.size();
    r.rate = r.total ? 100.0 * static_cast<double>(r.restored) / static_cast<double>(r.total) : 0.0;
    return r;
}

// ---------------------------------------------------------------------------
// Unsafe ratio

char class_char(LineClass c) {
    switch (c) {
    case LineClass::Excluded: return '-';
    case LineClass::Safe: return 's';
    case LineClass::Unsafe: return 'u';
    }
    return '-';
}

std::string FileUnsafe::classes() const {
    std::string s;
    for (auto c : lines) s += class_char(c);
    return s;
}

namespace {

enum class TokKind { Ident, Punct, Literal };

struct Tok {
    TokKind kind;
    std::string text;
    size_t line;
};

struct Lexed {
    std::vector<Tok> toks;
    std::vector<bool> code;  // per line
    bool broken = false;     // unterminated comment or literal
};

Lexed lex_rust(std::string_view s) {
    Lexed L;
    size_t nlines = static_cast<size_t>(std::count(s.begin(), s.end(), '\n'));
    if (!s.empty() && s.back() != '\n') ++nlines;
    L.code.assign(nlines + 1, false);
    size_t line = 0, i = 0, n = s.size();
    auto at = [&](size_t k) { return k < n ? s[k] : '\0'; };
    auto mark = [&] { L.code[line] = true; };

    // body of a quoted literal starting after the opening quote
    auto quoted = [&](char q) {
        while (i < n && s[i] != q) {
            if (s[i] == '\\') {
                if (at(i + 1) == '\n') ++line;
                i += 2;
                continue;
            }
            if (s[i] == '\n') ++line;
            ++i;
        }
        if (i >= n) L.broken = true;
        ++i;
    };

    while (i < n) {
        char c = s[i];
        if (c == '\n') {
            ++line;
            ++i;
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (c == '/' && at(i + 1) == '/') {
            while (i < n && s[i] != '\n') ++i;
        } else if (c == '/' && at(i + 1) == '*') {
            int depth = 1;
            i += 2;
            while (i < n && depth > 0) {
                if (s[i] == '/' && at(i + 1) == '*') {
                    ++depth;
                    i += 2;
                } else if (s[i] == '*' && at(i + 1) == '/') {
                    --depth;
                    i += 2;
                } else {
                    if (s[i] == '\n') ++line;
                    ++i;
                }
            }
            if (depth > 0) L.broken = true;
        } else if ((c == 'r' || ((c == 'b' || c == 'c') && at(i + 1) == 'r')) &&
                   (at(i + (c == 'r' ? 1 : 2)) == '"' || at(i + (c == 'r' ? 1 : 2)) == '#')) {
            size_t j = i + (c == 'r' ? 1 : 2);
            size_t hashes = 0;
            while (at(j) == '#') ++hashes, ++j;
            if (at(j) != '"') {
                // `r#ident`: a raw identifier
                size_t k = i + 2;
                while (k < n && text::is_identifier_char(s[k])) ++k;
                L.toks.push_back({TokKind::Ident, std::string(s.substr(i, k - i)), line});
                mark();
                i = k;
                continue;
            }
            L.toks.push_back({TokKind::Literal, "\"", line});
            std::string close = "\"" + std::string(hashes, '#');
            size_t end = s.find(close, j + 1);
            if (end == std::string_view::npos) {
                L.broken = true;
                end = n;
            }
            line += static_cast<size_t>(std::count(s.begin() + static_cast<std::ptrdiff_t>(j), s.begin() + static_cast<std::ptrdiff_t>(std::min(end, n)), '\n'));
            i = std::min(n, end + close.size());
        } else if (c == '"' || ((c == 'b' || c == 'c') && at(i + 1) == '"')) {
            L.toks.push_back({TokKind::Literal, "\"", line});
            i += c == '"' ? 1 : 2;
            quoted('"');
        } else if (c == '\'' || (c == 'b' && at(i + 1) == '\'')) {
            size_t q = c == '\'' ? i : i + 1;
            bool is_char = at(q + 1) == '\\' || at(q + 2) == '\'';
            if (static_cast<unsigned char>(at(q + 1)) >= 0x80)
                for (size_t k = q + 2; k <= q + 5 && !is_char; ++k) is_char = at(k) == '\'';
            mark();
            if (is_char) {
                L.toks.push_back({TokKind::Literal, "'", line});
                i = q + 1;
                quoted('\'');
            } else {
                // lifetime or label
                size_t k = q + 1;
                while (k < n && text::is_identifier_char(s[k])) ++k;
                L.toks.push_back({TokKind::Ident, std::string(s.substr(q, k - q)), line});
                i = k;
            }
        } else if (text::is_identifier_start(c)) {
            size_t k = i;
            while (k < n && text::is_identifier_char(s[k])) ++k;
            L.toks.push_back({TokKind::Ident, std::string(s.substr(i, k - i)), line});
            mark();
            i = k;
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            while (i < n && (text::is_identifier_char(s[i]) || (s[i] == '.' && std::isdigit(static_cast<unsigned char>(at(i + 1))))))
                ++i;
            mark();
        } else {
            std::string p(1, c);
            if ((c == '-' || c == '=') && at(i + 1) == '>') p += '>';
            L.toks.push_back({TokKind::Punct, p, line});
            mark();
            i += p.size();
        }
    }
    return L;
}

}  // namespace

FileUnsafe scan_unsafe(std::string_view source, std::string file) {
    FileUnsafe f;
    f.file = std::move(file);
    auto L = lex_rust(source);
    size_t nlines = L.code.size() - 1;
    std::vector<bool> in_unsafe(nlines + 1, false);

    // brace partner of every `{`
    std::vector<size_t> partner(L.toks.size(), SIZE_MAX), stack;
    bool balanced = !L.broken;
    for (size_t k = 0; k < L.toks.size(); ++k) {
        if (L.toks[k].kind != TokKind::Punct) continue;
        if (L.toks[k].text == "{") stack.push_back(k);
        else if (L.toks[k].text == "}") {
            if (stack.empty()) {
                balanced = false;
                continue;
            }
            partner[stack.back()] = k;
            stack.pop_back();
        }
    }
    if (!stack.empty()) balanced = false;

    for (size_t k = 0; k < L.toks.size(); ++k) {
        if (L.toks[k].kind != TokKind::Ident || L.toks[k].text != "unsafe") continue;
        size_t first = L.toks[k].line, last = first;
        int paren = 0, bracket = 0, angle = 0;
        for (size_t j = k + 1; j < L.toks.size(); ++j) {
            const auto& t = L.toks[j];
            if (t.kind != TokKind::Punct) continue;
            const std::string& p = t.text;
            bool top = paren == 0 && bracket == 0 && angle == 0;
            if (p == "(") ++paren;
            else if (p == "[") ++bracket;
            else if (p == "<") ++angle;
            else if (p == ")") {
                if (paren == 0) break;
                --paren;
            } else if (p == "]") {
                if (bracket == 0) break;
                --bracket;
            } else if (p == ">") {
                if (angle == 0) break;
                --angle;
            } else if (p == "{" && paren == 0 && bracket == 0) {
                if (partner[j] == SIZE_MAX) balanced = false;
                else last = L.toks[partner[j]].line;
                break;
            } else if (top && (p == ";" || p == "," || p == "=" || p == "=>" || p == "}")) {
                break;
            }
        }
        for (size_t l = first; l <= last && l < nlines; ++l) in_unsafe[l] = true;
    }

    f.flagged = !balanced;
    for (size_t l = 0; l < nlines; ++l) {
        LineClass c = !L.code[l] ? LineClass::Excluded : in_unsafe[l] ? LineClass::Unsafe : LineClass::Safe;
        f.lines.push_back(c);
        if (c != LineClass::Excluded) ++f.countable;
        if (c == LineClass::Unsafe) ++f.unsafe_lines;
    }
    return f;
}

UnsafeReport unsafe_ratio(const fs::path& workspace) {
    UnsafeReport r;
    fs::path src = workspace / "src";
    if (!fs::exists(src)) throw MetricsError("no src directory in " + workspace.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(src))
        if (e.is_regular_file() && e.path().extension() == ".rs") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& p : files) {
        auto f = scan_unsafe(read_file(p), fs::relative(p, workspace).generic_string());
        if (f.flagged) r.flagged.push_back(f.file);
        else {
            r.countable += f.countable;
            r.unsafe_lines += f.unsafe_lines;
        }
        r.files.push_back(std::move(f));
    }
    r.ratio = r.countable ? 100.0 * static_cast<double>(r.unsafe_lines) / static_cast<double>(r.countable) : 0.0;
    return r;
}

// ---------------------------------------------------------------------------
// Warnings, tests, repair rounds

std::optional<size_t> warning_count(const fs::path& workspace, const cargo::Toolchain& toolchain) {
    auto b = cargo::build(workspace, toolchain);
    if (!b.success) return std::nullopt;
    std::set<std::string> distinct;
    for (const auto& w : b.warnings()) {
        std::string where;
        if (const auto* s = w.primary_span()) where = fmt::format("{}:{}:{}", s->file, s->line_start, s->column_start);
        distinct.insert(w.code + "@" + where + (where.empty() ? "#" + w.message : ""));
    }
    return distinct.size();
}

FcResult functional_correctness(const fs::path& workspace, const fs::path& tests_dir, const cargo::Toolchain& toolchain) {
    FcResult r;
    if (!fs::is_directory(tests_dir)) throw MetricsError("test directory " + tests_dir.string() + " not found");
    fs::create_directories(workspace / "tests");
    for (const auto& e : fs::directory_iterator(tests_dir))
        if (e.is_regular_file() && e.path().extension() == ".rs")
            fs::copy_file(e.path(), workspace / "tests" / e.path().filename(), fs::copy_options::overwrite_existing);
    auto t = cargo::test(workspace, toolchain);
    if (!t.built) {
        r.note = "workspace does not build with its tests";
        return r;
    }
    if (!t.parsed) throw MetricsError("no test result line in cargo test output:\n" + t.output);
    r.passed = t.passed;
    r.total = t.passed + t.failed;
    if (r.total == 0) {
        r.note = "no tests discovered";
        return r;
    }
    r.rate = 100.0 * r.passed / r.total;
    return r;
}

std::optional<double> avg_repair(const std::vector<repair::FunctionOutcome>& outcomes) {
    double sum = 0;
    size_t n = 0;
    for (const auto& o : outcomes)
        if (o.state == repair::FinalState::Translated) {
            sum += o.rounds_used;
            ++n;
        }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Report

namespace {

template <class T>
json opt(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> get_opt(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<T>();
}

}  // namespace

json to_json(const MetricsReport& r) {
    json ledger = json::array();
    for (const auto& e : r.ledger)
        ledger.push_back({{"node", e.node_id},
                          {"outcome", e.outcome},
                          {"restored", e.restored},
                          {"fallback", e.fallback},
                          {"rounds", opt(e.rounds)},
                          {"diagnostics", e.diagnostics}});
    return {{"icomp_rate", opt(r.icomp_rate)}, {"fc", opt(r.fc)},     {"fc_note", r.fc_note},
            {"unsafe_ratio", r.unsafe_ratio},   {"warnings", opt(r.warnings)}, {"avg_repair", opt(r.avg_repair)},
            {"ledger", ledger},                 {"notes", r.notes}};
}

MetricsReport report_from_json(const json& j) {
    MetricsReport r;
    r.icomp_rate = get_opt<double>(j, "icomp_rate");
    r.fc = get_opt<double>(j, "fc");
    r.fc_note = j.value("fc_note", "");
    r.unsafe_ratio = j.value("unsafe_ratio", 0.0);
    r.warnings = get_opt<size_t>(j, "warnings");
    r.avg_repair = get_opt<double>(j, "avg_repair");
    if (j.contains("ledger"))
        for (const auto& e : j["ledger"]) {
            LedgerEntry l;
            l.node_id = e.value("node", "");
            l.outcome = e.value("outcome", "");
            l.restored = e.value("restored", false);
            l.fallback = e.value("fallback", false);
            l.rounds = get_opt<int>(e, "rounds");
            if (e.contains("diagnostics")) l.diagnostics = e["diagnostics"].get<std::vector<std::string>>();
            r.ledger.push_back(std::move(l));
        }
    if (j.contains("notes")) r.notes = j["notes"].get<std::vector<std::string>>();
    return r;
}

std::string render_table(const MetricsReport& r) {
    auto pct = [](const std::optional<double>& v) { return v ? fmt::format("{:.2f}", *v) : std::string("--"); };
    std::vector<std::string> head{"ICompRate", "FC", "Unsafe", "Warnings", "AvgRepair"};
    std::vector<std::string> row{pct(r.icomp_rate), pct(r.fc), fmt::format("{:.2f}", r.unsafe_ratio),
                                 r.warnings ? std::to_string(*r.warnings) : "--", pct(r.avg_repair)};
    std::string out = "|", rule = "|", cells = "|";
    for (size_t i = 0; i < head.size(); ++i) {
        size_t w = std::max(head[i].size(), row[i].size());
        out += fmt::format(" {:<{}} |", head[i], w);
        rule += std::string(w + 2, '-') + "|";
        cells += fmt::format(" {:>{}} |", row[i], w);
    }
    return out + "\n" + rule + "\n" + cells + "\n";
}

MetricsReport evaluate(const fs::path& workspace, const EvaluateOptions& options) {
    MetricsReport r;
    auto project = skeleton::load_project(workspace);
    auto index = graph::build_symbol_index(project);
    auto g = graph::build_graph(project, index);
    auto layers = graph::schedule(g);

    auto bodies = installed_bodies(workspace);
    fs::path scratch = options.scratch;
    if (scratch.empty())
        scratch = fs::temp_directory_path() / fmt::format("rsmig-icomp-{}", std::hash<std::string>{}(fs::absolute(workspace).string()));
    fs::remove_all(scratch);
    skeleton_copy(options.skeleton.empty() ? workspace : options.skeleton, scratch);
    auto ic = incremental_comp_rate(scratch, bodies, layers, options.toolchain);
    if (options.scratch.empty()) fs::remove_all(scratch);
    r.icomp_rate = ic.rate;
    r.ledger = ic.ledger;

    if (options.outcomes) {
        std::map<std::string, const repair::FunctionOutcome*> by;
        for (const auto& o : *options.outcomes) by[o.node_id] = &o;
        for (auto& e : r.ledger)
            if (auto it = by.find(e.node_id); it != by.end()) e.rounds = it->second->rounds_used;
        r.avg_repair = avg_repair(*options.outcomes);
    }

    auto u = unsafe_ratio(workspace);
    r.unsafe_ratio = u.ratio;
    for (const auto& f : u.flagged) r.notes.push_back("unbalanced braces, left out of the unsafe ratio: " + f);

    r.warnings = warning_count(workspace, options.toolchain);
    if (!r.warnings) r.notes.push_back("workspace does not build; warnings not available");

    if (!options.tests.empty()) {
        if (!r.warnings) {
            r.fc_note = "workspace does not build";
        } else {
            auto fc = functional_correctness(workspace, options.tests, options.toolchain);
            r.fc = fc.rate;
            r.fc_note = fc.rate ? fmt::format("{} of {} tests passed", fc.passed, fc.total) : fc.note;
        }
    } else {
        r.fc_note = "no test command configured";
    }
    return r;
}

}  // namespace rsmig::metrics
