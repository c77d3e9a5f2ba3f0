#include "rsmig/knowledge.hpp"

#include "rsmig/support/digest.hpp"
#include "rsmig/support/files.hpp"
#include "rsmig/support/process.hpp"
#include "rsmig/support/text.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <regex>
#include <sstream>

namespace rsmig::knowledge {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Scanning

namespace {

enum class TokKind { Ident, String, Char, Number, Punct };

struct Tok {
    TokKind kind;
    std::string text;  // string literals: contents without quotes
    size_t offset;
};

bool is_digit(char c) { return c >= '0' && c <= '9'; }

/// C-ish and Rust-ish source alike: comments skipped, lifetimes read as
/// punctuation plus identifier.
std::vector<Tok> scan(std::string_view s) {
    std::vector<Tok> out;
    size_t i = 0, n = s.size();
    while (i < n) {
        char c = s[i];
        if (c == '/' && i + 1 < n && s[i + 1] == '/') {
            while (i < n && s[i] != '\n') ++i;
        } else if (c == '/' && i + 1 < n && s[i + 1] == '*') {
            size_t e = s.find("*/", i + 2);
            i = e == std::string_view::npos ? n : e + 2;
        } else if (c == '"' || ((c == 'c' || c == 'b') && i + 1 < n && s[i + 1] == '"' &&
                                (i == 0 || !text::is_identifier_char(s[i - 1])))) {
            size_t start = i;
            if (c != '"') ++i;
            ++i;
            std::string body;
            while (i < n && s[i] != '"') {
                if (s[i] == '\\' && i + 1 < n) {
                    body += s[i];
                    ++i;
                }
                body += s[i++];
            }
            ++i;
            out.push_back({TokKind::String, body, start});
        } else if (c == '\'') {
            // char literal or lifetime
            if (i + 2 < n && s[i + 1] == '\\') {
                size_t e = s.find('\'', i + 2);
                e = e == std::string_view::npos ? n : e + 1;
                out.push_back({TokKind::Char, std::string(s.substr(i, e - i)), i});
                i = e;
            } else if (i + 2 < n && s[i + 2] == '\'') {
                out.push_back({TokKind::Char, std::string(s.substr(i, 3)), i});
                i += 3;
            } else {
                out.push_back({TokKind::Punct, "'", i});
                ++i;
            }
        } else if (text::is_identifier_start(c)) {
            size_t start = i;
            while (i < n && text::is_identifier_char(s[i])) ++i;
            out.push_back({TokKind::Ident, std::string(s.substr(start, i - start)), start});
        } else if (is_digit(c)) {
            size_t start = i;
            while (i < n && (text::is_identifier_char(s[i]) || s[i] == '.')) {
                if (s[i] == '.' && i + 1 < n && s[i + 1] == '.') break;
                ++i;
            }
            out.push_back({TokKind::Number, std::string(s.substr(start, i - start)), start});
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else {
            static const char* two[] = {"::", "->", "=>", "==", "!=", "<=", ">=", "&&", "||", "++", "--", "+=", "-="};
            std::string p(1, c);
            for (const char* t : two)
                if (s.substr(i, 2) == t) p = t;
            out.push_back({TokKind::Punct, p, i});
            i += p.size();
        }
    }
    return out;
}

const std::set<std::string, std::less<>>& c_keywords() {
    static const std::set<std::string, std::less<>> k = {
        "if", "else", "while", "for", "do", "switch", "case", "default", "return", "break", "continue", "goto",
        "sizeof", "_Alignof", "alignof", "defined", "struct", "union", "enum", "typedef", "static", "const",
        "volatile", "extern", "inline", "register", "unsigned", "signed", "int", "char", "short", "long", "float",
        "double", "void", "_Bool", "bool", "restrict", "__attribute__", "asm", "__asm__", "typeof", "__typeof__"};
    return k;
}

const std::set<std::string, std::less<>>& rust_keywords() {
    static const std::set<std::string, std::less<>> k = {
        "as", "break", "const", "continue", "crate", "else", "enum", "extern", "false", "fn", "for", "if", "impl",
        "in", "let", "loop", "match", "mod", "move", "mut", "pub", "ref", "return", "self", "Self", "static",
        "struct", "super", "trait", "true", "type", "unsafe", "use", "where", "while", "dyn", "Some", "None", "Ok",
        "Err"};
    return k;
}

}  // namespace

std::vector<std::string> tokenize_code(std::string_view source) {
    std::vector<std::string> out;
    for (const auto& t : scan(source)) {
        switch (t.kind) {
        case TokKind::Ident:
            for (auto& w : text::identifier_subwords(t.text)) out.push_back(std::move(w));
            break;
        case TokKind::String: {
            std::string word;
            for (char c : t.text + " ") {
                if (std::isalnum(static_cast<unsigned char>(c))) {
                    word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
                } else if (!word.empty()) {
                    out.push_back(word);
                    word.clear();
                }
            }
            break;
        }
        case TokKind::Number: out.push_back(text::to_lower(t.text)); break;
        default: break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// BM25

Bm25Index::Bm25Index(std::vector<Bm25Doc> docs, Bm25Params params) : docs_(std::move(docs)), params_(params) {
    size_t total = 0;
    for (size_t i = 0; i < docs_.size(); ++i) {
        std::unordered_map<std::string_view, int> tf;
        for (const auto& t : docs_[i].tokens) ++tf[t];
        for (const auto& [t, f] : tf) postings_[std::string(t)].emplace_back(i, f);
        total += docs_[i].tokens.size();
    }
    avgdl_ = docs_.empty() ? 0 : static_cast<double>(total) / static_cast<double>(docs_.size());
}

std::vector<double> Bm25Index::scores(const std::vector<std::string>& query) const {
    std::vector<double> out(docs_.size(), 0.0);
    const double n = static_cast<double>(docs_.size());
    for (const auto& q : query) {
        auto p = postings_.find(q);
        if (p == postings_.end()) continue;
        const double df = static_cast<double>(p->second.size());
        const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
        for (const auto& [i, f] : p->second) {
            const double tf = f;
            const double dl = static_cast<double>(docs_[i].tokens.size());
            const double norm = avgdl_ > 0 ? dl / avgdl_ : 1.0;
            out[i] += idf * tf * (params_.k1 + 1) / (tf + params_.k1 * (1 - params_.b + params_.b * norm));
        }
    }
    return out;
}

std::vector<Ranked> Bm25Index::top_n(const std::vector<std::string>& query, size_t n) const {
    auto s = scores(query);
    std::vector<Ranked> all;
    for (size_t i = 0; i < docs_.size(); ++i) all.push_back({i, docs_[i].key, s[i]});
    std::sort(all.begin(), all.end(), [](const Ranked& a, const Ranked& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.key != b.key) return a.key < b.key;
        return a.index < b.index;
    });
    if (all.size() > n) all.resize(n);
    return all;
}

std::vector<Ranked> bm25_top_n(const std::vector<std::string>& query, std::vector<Bm25Doc> candidates, size_t n,
                               Bm25Params params) {
    return Bm25Index(std::move(candidates), params).top_n(query, n);
}

// ---------------------------------------------------------------------------
// Reranking

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 0.0;
    size_t inter = 0;
    for (const auto& x : a) inter += b.count(x);
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

std::set<std::string> identifier_subword_set(std::string_view code) {
    std::set<std::string> out;
    for (const auto& t : scan(code)) {
        if (t.kind != TokKind::Ident) continue;
        if (c_keywords().count(t.text) || rust_keywords().count(t.text)) continue;
        for (auto& w : text::identifier_subwords(t.text)) out.insert(std::move(w));
    }
    return out;
}

std::set<std::string> long_string_literals(std::string_view code, size_t min_length) {
    std::set<std::string> out;
    for (const auto& t : scan(code))
        if (t.kind == TokKind::String && t.text.size() >= min_length) out.insert(t.text);
    return out;
}

std::vector<double> OverlapReranker::score(const std::vector<RerankItem>& items) {
    std::vector<double> out;
    for (const auto& it : items) {
        double s = jaccard(identifier_subword_set(it.left), identifier_subword_set(it.right));
        auto la = long_string_literals(it.left), lb = long_string_literals(it.right);
        size_t shared = 0;
        for (const auto& l : la) shared += lb.count(l);
        s += 0.1 * static_cast<double>(std::min<size_t>(shared, 5));
        out.push_back(s);
    }
    return out;
}

std::vector<double> BackendReranker::score(const std::vector<RerankItem>& items) {
    backend::GenerationRequest req;
    req.system = "You rate how likely each Rust candidate is a translation of the C code. Answer with a JSON array "
                 "of numbers between 0 and 1, one per candidate, in order, and nothing else.";
    std::string user;
    for (size_t i = 0; i < items.size(); ++i)
        user += fmt::format("## Candidate {}\n### C\n{}\n### Rust\n{}\n\n", i, items[i].left, items[i].right);
    req.user = user;
    req.function_id = "rerank";
    auto r = backend_.generate(req);
    if (!r.ok()) throw KnowledgeError("reranker backend failed: " + r.error);
    auto start = r.text.find('['), end = r.text.rfind(']');
    if (start == std::string::npos || end == std::string::npos || end < start)
        throw KnowledgeError("reranker answer has no JSON array");
    auto arr = json::parse(r.text.substr(start, end - start + 1));
    std::vector<double> out;
    for (const auto& v : arr) out.push_back(v.get<double>());
    if (out.size() != items.size()) throw KnowledgeError("reranker returned the wrong number of scores");
    return out;
}

std::vector<size_t> rerank_top_n(const std::vector<RerankItem>& items, size_t n, Reranker& reranker,
                                 std::vector<double>* scores_out) {
    std::vector<double> scores;
    try {
        scores = reranker.score(items);
        if (scores.size() != items.size()) throw KnowledgeError("score count mismatch");
    } catch (const std::exception& e) {
        spdlog::warn("reranker failed ({}), keeping lexical order", e.what());
        scores.clear();
        for (size_t i = 0; i < items.size(); ++i) scores.push_back(static_cast<double>(items.size() - i));
    }
    std::vector<size_t> idx(items.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });
    if (idx.size() > n) idx.resize(n);
    if (scores_out) {
        scores_out->clear();
        for (size_t i : idx) scores_out->push_back(scores[i]);
    }
    return idx;
}

// ---------------------------------------------------------------------------
// Git

namespace {

ProcessResult git(const fs::path& repo, std::vector<std::string> args) {
    std::vector<std::string> argv = {"git", "-C", repo.string(), "-c", "core.quotepath=off"};
    argv.insert(argv.end(), args.begin(), args.end());
    return run_process(argv);
}

}  // namespace

std::vector<Commit> read_history(const fs::path& repo) {
    if (!executable_available("git")) throw KnowledgeError("git is not available");
    ProcessResult r;
    try {
        r = git(repo, {"log", "--reverse", "--no-renames", "--numstat", "--summary",
                       "--format=%x1e%H%x1f%an%x1f%ae%x1f%at%x1f%B%x1f"});
    } catch (const InfrastructureError& e) {
        throw KnowledgeError(std::string("cannot read history: ") + e.what());
    }
    if (!r.ok()) throw KnowledgeError("cannot read history of " + repo.string() + ": " + text::trim_copy(r.err));
    std::vector<Commit> out;
    std::string_view all = r.out;
    size_t pos = 0;
    while ((pos = all.find('\x1e', pos)) != std::string_view::npos) {
        size_t next = all.find('\x1e', pos + 1);
        std::string_view rec = all.substr(pos + 1, next == std::string_view::npos ? std::string_view::npos : next - pos - 1);
        pos = next == std::string_view::npos ? all.size() : next;
        std::vector<std::string_view> f;
        size_t p = 0;
        for (int k = 0; k < 5; ++k) {
            size_t q = rec.find('\x1f', p);
            if (q == std::string_view::npos) throw KnowledgeError("unexpected git log output");
            f.push_back(rec.substr(p, q - p));
            p = q + 1;
        }
        Commit c;
        c.hash = std::string(f[0]);
        c.author_name = std::string(f[1]);
        c.author_email = std::string(f[2]);
        c.time = std::stoll(std::string(f[3]));
        c.message = text::trim_copy(f[4]);
        std::map<std::string, size_t> by_path;
        for (auto& line : text::split_lines(rec.substr(p))) {
            if (line.empty()) continue;
            if (line[0] == ' ') {
                static const std::regex mode(R"(^ (create|delete) mode \d+ (.+)$)");
                std::smatch m;
                if (std::regex_match(line, m, mode)) {
                    std::string path = m[2];
                    auto it = by_path.find(path);
                    if (it == by_path.end()) {
                        by_path[path] = c.changes.size();
                        c.changes.push_back({path, 'M', 0, 0});
                        it = by_path.find(path);
                    }
                    c.changes[it->second].status = m[1] == "create" ? 'A' : 'D';
                }
                continue;
            }
            auto t1 = line.find('\t'), t2 = line.find('\t', t1 + 1);
            if (t1 == std::string::npos || t2 == std::string::npos) continue;
            FileChange fc;
            fc.path = line.substr(t2 + 1);
            std::string a = line.substr(0, t1), d = line.substr(t1 + 1, t2 - t1 - 1);
            fc.added = a == "-" ? 0 : std::stoi(a);
            fc.deleted = d == "-" ? 0 : std::stoi(d);
            by_path[fc.path] = c.changes.size();
            c.changes.push_back(fc);
        }
        out.push_back(std::move(c));
    }
    return out;
}

std::string commit_patch(const fs::path& repo, const std::string& hash, const std::vector<std::string>& paths) {
    std::vector<std::string> args = {"show", "--format=", "--no-renames", "--unified=0", "--no-color", hash};
    if (!paths.empty()) {
        args.push_back("--");
        args.insert(args.end(), paths.begin(), paths.end());
    }
    auto r = git(repo, args);
    if (!r.ok()) throw KnowledgeError("git show " + hash + " failed: " + text::trim_copy(r.err));
    return r.out;
}

std::optional<std::string> file_at(const fs::path& repo, const std::string& hash, const std::string& path) {
    auto r = git(repo, {"show", hash + ":" + path});
    if (!r.ok()) return std::nullopt;
    return r.out;
}

// ---------------------------------------------------------------------------
// Function splitting

namespace {

/// Index of the token closing the bracket opened at `open`.
size_t match_close(const std::vector<Tok>& toks, size_t open) {
    const std::string& o = toks[open].text;
    const std::string c = o == "{" ? "}" : o == "(" ? ")" : "]";
    int depth = 0;
    for (size_t i = open; i < toks.size(); ++i) {
        if (toks[i].kind != TokKind::Punct) continue;
        if (toks[i].text == o) ++depth;
        else if (toks[i].text == c && --depth == 0) return i;
    }
    return toks.size() - 1;
}

size_t line_of(std::string_view s, size_t offset) {
    return static_cast<size_t>(std::count(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(offset), '\n')) + 1;
}

size_t line_start(std::string_view s, size_t offset) {
    size_t p = s.rfind('\n', offset == 0 ? 0 : offset - 1);
    return offset == 0 || p == std::string_view::npos ? 0 : p + 1;
}

}  // namespace

std::vector<SourceFunction> split_c_functions(std::string_view source) {
    std::vector<SourceFunction> out;
    auto toks = scan(source);
    size_t stmt_start = 0;  // first token of the current top-level declaration
    for (size_t i = 0; i < toks.size(); ++i) {
        const auto& t = toks[i];
        if (t.kind == TokKind::Punct && t.text == "#") {
            // preprocessor line: skip tokens on the same line (with continuations)
            size_t line_end = source.find('\n', t.offset);
            while (line_end != std::string_view::npos && line_end > 0 && source[line_end - 1] == '\\')
                line_end = source.find('\n', line_end + 1);
            if (line_end == std::string_view::npos) line_end = source.size();
            while (i + 1 < toks.size() && toks[i + 1].offset < line_end) ++i;
            stmt_start = i + 1;
            continue;
        }
        if (t.kind != TokKind::Punct) continue;
        if (t.text == ";") {
            stmt_start = i + 1;
        } else if (t.text == "(" || t.text == "[") {
            i = match_close(toks, i);
        } else if (t.text == "{") {
            size_t close = match_close(toks, i);
            // function when preceded by `name ( ... )` and no `=` in the declaration
            bool fn = i > 0 && toks[i - 1].text == ")";
            std::string name;
            for (size_t k = stmt_start; k < i && fn; ++k) {
                if (toks[k].text == "=") fn = false;
                if (toks[k].kind == TokKind::Ident && k + 1 < i && toks[k + 1].text == "(" && name.empty() &&
                    !c_keywords().count(toks[k].text))
                    name = toks[k].text;
            }
            if (fn && !name.empty() && stmt_start < toks.size()) {
                size_t begin = line_start(source, toks[stmt_start].offset);
                size_t end = toks[close].offset + 1;
                out.push_back({name, std::string(source.substr(begin, end - begin)),
                               static_cast<int>(line_of(source, toks[stmt_start].offset))});
            }
            i = close;
            // `struct x {...} v;` continues to the semicolon
            if (fn) stmt_start = i + 1;
        }
    }
    return out;
}

std::vector<SourceFunction> split_rust_functions(std::string_view source) {
    std::vector<SourceFunction> out;
    auto toks = scan(source);
    for (size_t i = 0; i + 1 < toks.size(); ++i) {
        if (toks[i].kind != TokKind::Ident || toks[i].text != "fn" || toks[i + 1].kind != TokKind::Ident) continue;
        // find the body brace at depth 0 of parens, or `;` for a declaration
        size_t j = i + 2;
        for (; j < toks.size(); ++j) {
            if (toks[j].text == "(" || toks[j].text == "[") j = match_close(toks, j);
            else if (toks[j].text == "{" || toks[j].text == ";") break;
        }
        if (j >= toks.size() || toks[j].text == ";") continue;
        size_t close = match_close(toks, j);
        // include attributes and qualifiers on the same item
        size_t first = i;
        while (first > 0) {
            const auto& p = toks[first - 1];
            if (p.kind == TokKind::Ident && (p.text == "pub" || p.text == "unsafe" || p.text == "extern" ||
                                             p.text == "const" || p.text == "async")) {
                --first;
            } else if (p.kind == TokKind::String && first >= 2 && toks[first - 2].text == "extern") {
                --first;
            } else if (p.text == ")" && first >= 3 && toks[first - 3].text == "pub") {
                first -= 3;  // pub(crate)
            } else {
                break;
            }
        }
        size_t begin = line_start(source, toks[first].offset);
        // attribute lines directly above
        while (begin > 0) {
            size_t prev = line_start(source, begin - 1);
            auto l = text::trim(source.substr(prev, begin - 1 - prev));
            if (l.rfind("#[", 0) == 0 || l.rfind("///", 0) == 0) begin = prev;
            else break;
        }
        size_t end = toks[close].offset + 1;
        out.push_back({toks[i + 1].text, std::string(source.substr(begin, end - begin)),
                       static_cast<int>(line_of(source, toks[i].offset))});
        i = close;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Mining

const char* regime_name(Regime r) { return r == Regime::General ? "general" : "co_evolution"; }

Regime parse_regime(std::string_view s) {
    if (s == "general") return Regime::General;
    if (s == "co_evolution" || s == "co-evolution") return Regime::CoEvolution;
    throw KnowledgeError("unknown regime `" + std::string(s) + "`");
}

const std::vector<std::string>& all_tags() {
    static const std::vector<std::string> t = {tag::kKeyword,     tag::kBuildSwitch, tag::kInterface, tag::kChurn,
                                               tag::kDeleteCreate, tag::kCoupling,    tag::kIdentity,  tag::kColocation,
                                               tag::kTokenOverlap, tag::kLiterals};
    return t;
}

namespace {

bool has_ext(const std::string& p, std::string_view ext) {
    return p.size() > ext.size() && p.compare(p.size() - ext.size(), ext.size(), ext) == 0;
}
bool is_c(const std::string& p) { return has_ext(p, ".c"); }
bool is_rust(const std::string& p) { return has_ext(p, ".rs"); }

bool is_build_file(const std::string& p) {
    std::string base = fs::path(p).filename().string();
    static const std::set<std::string> names = {"Makefile", "makefile", "GNUmakefile", "CMakeLists.txt", "BUILD.gn",
                                                "BUILD", "BUILD.bazel", "meson.build", "Android.bp", "Kbuild",
                                                "Cargo.toml", "SConscript", "SConstruct"};
    return names.count(base) || has_ext(base, ".mk") || has_ext(base, ".gn") || has_ext(base, ".gni") ||
           has_ext(base, ".bp") || has_ext(base, ".cmake") || has_ext(base, ".bzl");
}

std::vector<std::string> working_tree_files(const fs::path& repo) {
    std::vector<std::string> out;
    if (!fs::is_directory(repo)) throw KnowledgeError("not a directory: " + repo.string());
    for (auto it = fs::recursive_directory_iterator(repo); it != fs::recursive_directory_iterator(); ++it) {
        std::string name = it->path().filename().string();
        if (it->is_directory() && (name == ".git" || name == "target" || name == "node_modules")) {
            it.disable_recursion_pending();
            continue;
        }
        if (it->is_regular_file()) out.push_back(fs::relative(it->path(), repo).generic_string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Source paths referenced by a build file line set, resolved against known paths.
std::vector<std::string> resolve_refs(const std::string& text, const std::string& ext, const std::string& build_dir,
                                      const std::set<std::string>& known) {
    std::vector<std::string> out;
    const std::regex re("([A-Za-z0-9_./+-]+\\" + ext + ")(?![A-Za-z0-9_])");
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
        std::string ref = (*it)[1];
        std::string joined = (fs::path(build_dir) / ref).lexically_normal().generic_string();
        if (known.count(joined)) {
            out.push_back(joined);
            continue;
        }
        if (known.count(ref)) {
            out.push_back(ref);
            continue;
        }
        for (const auto& k : known)
            if (k.size() > ref.size() && k.compare(k.size() - ref.size() - 1, ref.size() + 1, "/" + ref) == 0)
                out.push_back(k);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

bool is_key_token(const std::string& id) {
    static const std::set<std::string> stop = {
        "size_t", "ssize_t", "uint8_t", "uint16_t", "uint32_t", "uint64_t", "int8_t", "int16_t", "int32_t",
        "int64_t", "uintptr_t", "intptr_t", "ptrdiff_t", "NULL", "EOF", "FILE", "offset_of", "size_of",
        "align_of", "c_int", "c_char", "c_void", "c_uint", "c_long", "c_ulong", "Self", "TRUE", "FALSE",
        "__attribute__", "no_mangle", "repr", "allow", "derive", "cfg", "extern", "unsafe"};
    if (stop.count(id)) return false;
    bool underscore = id.find('_') != std::string::npos && id.find_first_not_of('_') != std::string::npos;
    bool all_caps = id.size() >= 3 && std::none_of(id.begin(), id.end(), [](char c) { return std::islower(static_cast<unsigned char>(c)); }) &&
                    std::any_of(id.begin(), id.end(), [](char c) { return std::isupper(static_cast<unsigned char>(c)); });
    return underscore || all_caps;
}

std::set<std::string> key_tokens(std::string_view code) {
    std::set<std::string> out;
    for (const auto& t : scan(code))
        if (t.kind == TokKind::Ident && is_key_token(t.text) && !c_keywords().count(t.text) &&
            !rust_keywords().count(t.text))
            out.insert(t.text);
    return out;
}

/// Identifiers directly followed by `(` (macros and turbofish included).
std::set<std::string> called_names(std::string_view code) {
    std::set<std::string> out;
    auto toks = scan(code);
    for (size_t i = 0; i + 1 < toks.size(); ++i) {
        if (toks[i].kind != TokKind::Ident) continue;
        if (toks[i + 1].text == "(" && !c_keywords().count(toks[i].text) && !rust_keywords().count(toks[i].text))
            out.insert(toks[i].text);
    }
    return out;
}

std::set<std::string> defined_functions(const std::string& path, std::string_view content) {
    std::set<std::string> out;
    if (is_c(path))
        for (auto& f : split_c_functions(content)) out.insert(f.name);
    else if (is_rust(path))
        for (auto& f : split_rust_functions(content)) out.insert(f.name);
    return out;
}

/// Per-file unified diff sections keyed by b/ path (or a/ path for deletions).
std::map<std::string, std::pair<std::vector<std::string>, std::vector<std::string>>> split_patch(const std::string& patch) {
    std::map<std::string, std::pair<std::vector<std::string>, std::vector<std::string>>> out;
    std::string current;
    for (auto& line : text::split_lines(patch)) {
        if (line.rfind("diff --git ", 0) == 0) {
            auto b = line.rfind(" b/");
            current = b == std::string::npos ? "" : line.substr(b + 3);
            continue;
        }
        if (line.rfind("--- ", 0) == 0 || line.rfind("+++ ", 0) == 0 || current.empty()) continue;
        if (line.rfind("-", 0) == 0) out[current].first.push_back(line.substr(1));
        else if (line.rfind("+", 0) == 0) out[current].second.push_back(line.substr(1));
    }
    return out;
}

struct CandidateSet {
    std::map<std::pair<std::string, std::string>, FilePairCandidate> pairs;
    std::map<std::string, std::set<std::pair<std::string, std::string>>> by_tag;

    void add(const std::string& c, const std::string& r, const std::string& tag, double score) {
        auto& p = pairs[{c, r}];
        p.c_path = c;
        p.rust_path = r;
        p.evidence.insert(tag);
        auto it = p.scores.find(tag);
        p.scores[tag] = it == p.scores.end() ? score : std::max(it->second, score);
        by_tag[tag].insert({c, r});
    }
};

void history_heuristics(const fs::path& repo, const std::vector<Commit>& commits, const MiningConfig& cfg,
                        CandidateSet& out, std::map<std::string, std::string>& last_rev) {
    auto enabled = [&](const char* t) { return !cfg.disabled.count(t); };
    std::vector<std::regex> keyword_res;
    for (const auto& k : cfg.keywords) keyword_res.emplace_back("\\b" + k + "\\b", std::regex::icase);

    std::set<std::string> known_sources;
    for (const auto& c : commits)
        for (const auto& ch : c.changes)
            if (is_c(ch.path) || is_rust(ch.path)) known_sources.insert(ch.path);

    std::map<std::string, std::set<std::string>> defs_by_file;  // current function definitions
    std::map<std::pair<std::string, std::string>, int> cochange;
    std::vector<std::pair<std::string, std::int64_t>> c_deletions;
    std::map<std::string, std::vector<std::string>> authors_of;  // C file -> authors, oldest first

    for (const auto& commit : commits) {
        std::vector<const FileChange*> cs, rs;
        for (const auto& ch : commit.changes) {
            if (is_c(ch.path)) cs.push_back(&ch);
            if (is_rust(ch.path)) rs.push_back(&ch);
        }
        const std::string author = commit.author_email.empty() ? commit.author_name : commit.author_email;

        // keyword
        if (enabled(tag::kKeyword) && !cs.empty() && !rs.empty()) {
            bool hit = std::any_of(keyword_res.begin(), keyword_res.end(),
                                   [&](const std::regex& re) { return std::regex_search(commit.message, re); });
            if (hit)
                for (auto* c : cs)
                    for (auto* r : rs)
                        if (r->status != 'D') out.add(c->path, r->path, tag::kKeyword, 1);
        }

        // churn balance
        if (enabled(tag::kChurn))
            for (auto* c : cs)
                for (auto* r : rs) {
                    if (c->deleted <= 0 || r->added <= 0) continue;
                    double ratio = std::abs(c->deleted - r->added) / static_cast<double>(std::max(c->deleted, r->added));
                    if (ratio <= cfg.churn_ratio) out.add(c->path, r->path, tag::kChurn, 1.0 - ratio);
                }

        // evolutionary coupling counts
        for (auto* c : cs)
            for (auto* r : rs) ++cochange[{c->path, r->path}];

        // build configuration switch
        std::vector<std::string> builds;
        for (const auto& ch : commit.changes)
            if (is_build_file(ch.path) && ch.status != 'D') builds.push_back(ch.path);
        if (enabled(tag::kBuildSwitch) && !builds.empty()) {
            auto sections = split_patch(commit_patch(repo, commit.hash, builds));
            for (const auto& [path, lines] : sections) {
                std::string removed = text::join(lines.first, "\n"), added = text::join(lines.second, "\n");
                std::string dir = fs::path(path).parent_path().generic_string();
                auto gone = resolve_refs(removed, ".c", dir, known_sources);
                auto came = resolve_refs(added, ".rs", dir, known_sources);
                for (const auto& c : gone)
                    for (const auto& r : came) out.add(c, r, tag::kBuildSwitch, 1);
            }
        }

        // interface migration: removed calls into C definitions, added calls into Rust ones
        bool touches_source = !cs.empty() || !rs.empty() ||
                              std::any_of(commit.changes.begin(), commit.changes.end(),
                                          [](const FileChange& ch) { return has_ext(ch.path, ".h"); });
        std::map<std::string, std::set<std::string>> defs_before;
        if (enabled(tag::kInterface) && touches_source) defs_before = defs_by_file;
        for (const auto& ch : commit.changes) {
            if (!is_c(ch.path) && !is_rust(ch.path)) continue;
            if (ch.status == 'D') {
                defs_by_file.erase(ch.path);
            } else if (auto content = file_at(repo, commit.hash, ch.path)) {
                defs_by_file[ch.path] = defined_functions(ch.path, *content);
            }
        }
        if (enabled(tag::kInterface) && touches_source) {
            std::string patch = commit_patch(repo, commit.hash);
            std::set<std::string> removed_calls, added_calls;
            for (const auto& [path, lines] : split_patch(patch)) {
                auto minus = called_names(text::join(lines.first, "\n"));
                auto plus = called_names(text::join(lines.second, "\n"));
                for (const auto& m : minus)
                    if (!plus.count(m)) removed_calls.insert(m);
                for (const auto& p : plus)
                    if (!minus.count(p)) added_calls.insert(p);
            }
            std::set<std::string> c_targets, r_targets;
            for (const auto& [file, names] : defs_before)
                if (is_c(file))
                    for (const auto& n : removed_calls)
                        if (names.count(n)) c_targets.insert(file);
            for (const auto& [file, names] : defs_by_file)
                if (is_rust(file))
                    for (const auto& n : added_calls)
                        if (names.count(n)) r_targets.insert(file);
            for (const auto& c : c_targets)
                for (const auto& r : r_targets) out.add(c, r, tag::kInterface, 1);
        }

        // delete-then-create and developer identity
        for (auto* r : rs) {
            if (r->status != 'A') continue;
            if (enabled(tag::kDeleteCreate))
                for (const auto& [c, t] : c_deletions) {
                    double days = static_cast<double>(commit.time - t) / 86400.0;
                    if (days >= 0 && days <= cfg.delete_create_window_days) out.add(c, r->path, tag::kDeleteCreate, days);
                }
            if (enabled(tag::kIdentity))
                for (const auto& [c, authors] : authors_of) {
                    size_t from = authors.size() > static_cast<size_t>(cfg.identity_recent_commits)
                                      ? authors.size() - static_cast<size_t>(cfg.identity_recent_commits)
                                      : 0;
                    if (std::find(authors.begin() + static_cast<std::ptrdiff_t>(from), authors.end(), author) != authors.end())
                        out.add(c, r->path, tag::kIdentity, 1);
                }
        }
        for (auto* c : cs) {
            if (c->status == 'D') c_deletions.emplace_back(c->path, commit.time);
            authors_of[c->path].push_back(author);
        }

        for (const auto& ch : commit.changes)
            last_rev[ch.path] = ch.status == 'D' ? commit.hash + "^" : commit.hash;
    }
    if (enabled(tag::kCoupling))
        for (const auto& [pair, n] : cochange)
            if (n >= cfg.coupling_min_commits) out.add(pair.first, pair.second, tag::kCoupling, n);
}

void snapshot_heuristics(const fs::path& repo, const std::vector<std::string>& files, const MiningConfig& cfg,
                         CandidateSet& out) {
    auto enabled = [&](const char* t) { return !cfg.disabled.count(t); };
    std::set<std::string> known(files.begin(), files.end());
    std::vector<std::string> cs, rs;
    for (const auto& f : files) {
        if (is_c(f)) cs.push_back(f);
        if (is_rust(f)) rs.push_back(f);
    }
    if (enabled(tag::kColocation))
        for (const auto& f : files) {
            if (!is_build_file(f)) continue;
            std::string content = read_file(repo / f);
            std::string dir = fs::path(f).parent_path().generic_string();
            auto cref = resolve_refs(content, ".c", dir, known);
            auto rref = resolve_refs(content, ".rs", dir, known);
            for (const auto& c : cref)
                for (const auto& r : rref) out.add(c, r, tag::kColocation, 1);
        }
    std::map<std::string, std::set<std::string>> keys, lits;
    for (const auto& f : cs) {
        std::string content = read_file(repo / f);
        keys[f] = key_tokens(content);
        lits[f] = long_string_literals(content, cfg.min_literal_length);
    }
    for (const auto& f : rs) {
        std::string content = read_file(repo / f);
        keys[f] = key_tokens(content);
        lits[f] = long_string_literals(content, cfg.min_literal_length);
    }
    for (const auto& c : cs)
        for (const auto& r : rs) {
            if (enabled(tag::kTokenOverlap)) {
                size_t shared = 0;
                for (const auto& k : keys[c]) shared += keys[r].count(k);
                if (shared >= cfg.min_key_tokens) out.add(c, r, tag::kTokenOverlap, static_cast<double>(shared));
            }
            if (enabled(tag::kLiterals)) {
                size_t shared = 0;
                for (const auto& l : lits[c]) shared += lits[r].count(l);
                if (shared >= 1) out.add(c, r, tag::kLiterals, static_cast<double>(shared));
            }
        }
}

}  // namespace

MiningReport get_file_candidates(const fs::path& repo, Regime regime, const MiningConfig& config) {
    MiningReport report;
    auto files = working_tree_files(repo);
    std::set<std::string> present(files.begin(), files.end());
    CandidateSet set;
    std::map<std::string, std::string> last_rev;

    if (regime == Regime::CoEvolution) {
        try {
            auto commits = read_history(repo);
            report.history_available = true;
            history_heuristics(repo, commits, config, set, last_rev);
        } catch (const KnowledgeError& e) {
            report.notes.push_back(std::string("history unavailable, snapshot heuristics only: ") + e.what());
            spdlog::warn("{}", report.notes.back());
        }
    }
    snapshot_heuristics(repo, files, config, set);

    if (regime == Regime::General) {
        for (const auto& c : files)
            for (const auto& r : files)
                if (is_c(c) && is_rust(r)) {
                    auto& p = set.pairs[{c, r}];
                    p.c_path = c;
                    p.rust_path = r;
                }
    }
    for (auto& [key, cand] : set.pairs) {
        cand.regime = regime;
        cand.c_commit = present.count(cand.c_path) ? "" : last_rev[cand.c_path];
        cand.rust_commit = present.count(cand.rust_path) ? "" : last_rev[cand.rust_path];
        report.candidates.push_back(cand);
    }
    for (const auto& t : all_tags()) {
        auto it = set.by_tag.find(t);
        report.per_heuristic[t] = it == set.by_tag.end() ? 0 : it->second.size();
    }
    return report;
}

// ---------------------------------------------------------------------------
// Function alignment and rules

std::string pair_id(std::string_view c_source, std::string_view rust_source) {
    return sha256_hex(std::string(c_source) + "\n\x1f\n" + std::string(rust_source)).substr(0, 24);
}

std::vector<AlignedFunctionPair> align_functions(const FilePair& files, Reranker& reranker, size_t n) {
    auto cf = split_c_functions(files.c_text);
    auto rf = split_rust_functions(files.rust_text);
    std::vector<RerankItem> items;
    std::vector<std::pair<size_t, size_t>> which;
    for (size_t i = 0; i < cf.size(); ++i)
        for (size_t j = 0; j < rf.size(); ++j) {
            items.push_back({cf[i].name + "->" + rf[j].name, cf[i].text, rf[j].text});
            which.emplace_back(i, j);
        }
    std::vector<double> scores;
    auto top = rerank_top_n(items, n, reranker, &scores);
    std::vector<AlignedFunctionPair> out;
    for (size_t k = 0; k < top.size(); ++k) {
        if (scores[k] <= 0) continue;
        auto [i, j] = which[top[k]];
        AlignedFunctionPair p;
        p.c_name = cf[i].name;
        p.c_source = cf[i].text;
        p.rust_name = rf[j].name;
        p.rust_source = rf[j].text;
        p.id = pair_id(p.c_source, p.rust_source);
        p.c_file = files.c_path;
        p.rust_file = files.rust_path;
        p.repo = files.repo;
        p.commit = files.commit;
        p.score = scores[k];
        out.push_back(std::move(p));
    }
    return out;
}

size_t approx_tokens(std::string_view s) {
    size_t n = 0;
    bool in = false;
    for (char c : s) {
        bool ws = std::isspace(static_cast<unsigned char>(c));
        if (!ws && !in) ++n;
        in = !ws;
    }
    return n;
}

namespace {

std::string_view body_of(std::string_view fn) {
    auto b = fn.find('{');
    return b == std::string_view::npos ? fn : fn.substr(b);
}

}  // namespace

std::vector<std::pair<std::string, double>> c_callees(std::string_view fn) {
    std::vector<std::pair<std::string, double>> out;
    auto body = body_of(fn);
    auto toks = scan(body);
    std::set<std::string> seen;
    for (size_t i = 0; i + 1 < toks.size(); ++i) {
        if (toks[i].kind != TokKind::Ident || toks[i + 1].text != "(" || c_keywords().count(toks[i].text)) continue;
        if (seen.insert(toks[i].text).second)
            out.emplace_back(toks[i].text, static_cast<double>(toks[i].offset) / std::max<size_t>(1, body.size()));
    }
    return out;
}

std::vector<std::pair<std::string, double>> rust_callees(std::string_view fn) {
    std::vector<std::pair<std::string, double>> out;
    auto body = body_of(fn);
    auto toks = scan(body);
    std::set<std::string> seen;
    for (size_t i = 0; i < toks.size(); ++i) {
        if (toks[i].kind != TokKind::Ident || rust_keywords().count(toks[i].text)) continue;
        if (i > 0 && toks[i - 1].text == "::") continue;  // handled from the path head
        // path a::b::c
        std::string name = toks[i].text;
        size_t j = i + 1;
        while (j + 1 < toks.size() && toks[j].text == "::" && toks[j + 1].kind == TokKind::Ident) {
            name += "::" + toks[j + 1].text;
            j += 2;
        }
        if (j + 1 < toks.size() && toks[j].text == "::" && toks[j + 1].text == "<") {
            int depth = 0;
            size_t k = j + 1;
            for (; k < toks.size(); ++k) {
                if (toks[k].text == "<") ++depth;
                else if (toks[k].text == ">" && --depth == 0) break;
            }
            j = k + 1;
        }
        bool macro = j + 1 < toks.size() && toks[j].text == "!" && (toks[j + 1].text == "(" || toks[j + 1].text == "[");
        bool call = j < toks.size() && toks[j].text == "(";
        if (!call && !macro) continue;
        if (macro) name += "!";
        // constructors of tuple structs and variants look like calls
        if (!macro && std::isupper(static_cast<unsigned char>(name.back() == '!' ? name[0] : fs::path(name).filename().string()[0])) &&
            name.find("::") == std::string::npos)
            continue;
        if (seen.insert(name).second)
            out.emplace_back(name, static_cast<double>(toks[i].offset) / std::max<size_t>(1, body.size()));
    }
    return out;
}

namespace {

struct IdiomEntry {
    std::regex c_re;
    std::regex rust_re;
    const char* c_idiom;
    const char* rust_idiom;
    const char* hint;
};

const std::vector<IdiomEntry>& idiom_catalog() {
    static const std::vector<IdiomEntry> catalog = [] {
        std::vector<IdiomEntry> v;
        auto add = [&](const char* c, const char* r, const char* ci, const char* ri, const char* h) {
            v.push_back({std::regex(c), std::regex(r), ci, ri, h});
        };
        add(R"(\boffsetof\s*\(|&\s*\(\s*\(\s*[\w\s]+\*\s*\)\s*0\s*\)\s*->)", R"(\boffset_of!\s*\()",
            "offsetof(T, field)", "core::mem::offset_of!(T, field)", "take field offsets from offset_of!");
        add(R"(\bmemcpy\s*\()", R"(\bcopy_nonoverlapping\s*\()", "memcpy(dst, src, n)",
            "core::ptr::copy_nonoverlapping(src, dst, n)", "source comes first in copy_nonoverlapping");
        add(R"(\bmemcpy\s*\()", R"(\.copy_from_slice\s*\()", "memcpy(dst, src, n)", "dst[..n].copy_from_slice(&src[..n])",
            "copy between slices of equal length");
        add(R"(\bmemset\s*\()", R"(\bwrite_bytes\s*\(|\.fill\s*\()", "memset(p, 0, n)", "core::ptr::write_bytes(p, 0, n)",
            "write_bytes counts elements, not bytes");
        add(R"([!=]=\s*NULL\b|\bNULL\s*[!=]=)", R"(\.is_null\s*\(\s*\))", "p == NULL", "p.is_null()",
            "test raw pointers with is_null()");
        add(R"(\bfor\s*\(\s*(?:\w+\s+)?\w+\s*=\s*0\s*;\s*\w+\s*<)", R"(\bfor\s+\w+\s+in\s+0\s*\.\.)",
            "for (i = 0; i < n; i++)", "for i in 0..n", "iterate with a range");
        add(R"(\bsizeof\s*\()", R"(\bsize_of\s*::\s*<)", "sizeof(T)", "core::mem::size_of::<T>()",
            "sizes come from size_of");
        add(R"(\bswitch\s*\()", R"(\bmatch\b)", "switch (x) { case A: ... }", "match x { A => ... }",
            "a switch becomes a match with a wildcard arm");
        add(R"(\+\+|\+=)", R"(\.wrapping_add\s*\()", "x += 1", "x = x.wrapping_add(1)",
            "C unsigned arithmetic wraps; use wrapping_add");
        add(R"(\w\s*->\s*\w)", R"(\(\s*\*\s*\w+\s*\)\s*\.)", "p->field", "(*p).field",
            "dereference raw pointers explicitly");
        add(R"(\bmalloc\s*\()", R"(\bBox::new\s*\()", "malloc(sizeof(T))", "Box::into_raw(Box::new(value))",
            "heap objects handed to C stay raw pointers");
        add(R"(\bfree\s*\()", R"(\bBox::from_raw\s*\()", "free(p)", "drop(Box::from_raw(p))",
            "release boxed allocations through from_raw");
        add(R"("[^"\n]*")", R"(\bc"[^"\n]*")", "\"text\"", "c\"text\"", "C strings become c-string literals");
        return v;
    }();
    return catalog;
}

std::string strip_comments(std::string_view s) {
    std::string out;
    size_t i = 0;
    while (i < s.size()) {
        if (s.substr(i, 2) == "//") {
            while (i < s.size() && s[i] != '\n') ++i;
        } else if (s.substr(i, 2) == "/*") {
            auto e = s.find("*/", i + 2);
            i = e == std::string_view::npos ? s.size() : e + 2;
        } else {
            out += s[i++];
        }
    }
    return out;
}

std::string last_segment(const std::string& path) {
    auto p = path.rfind("::");
    std::string s = p == std::string::npos ? path : path.substr(p + 2);
    if (!s.empty() && s.back() == '!') s.pop_back();
    return s;
}

}  // namespace

MinedRules DeterministicExtractor::extract(const AlignedFunctionPair& pair) {
    MinedRules out;
    auto cc = c_callees(pair.c_source);
    auto rc = rust_callees(pair.rust_source);
    std::set<std::string> c_names, r_names;
    for (auto& [n, _] : cc) c_names.insert(text::to_lower(n));
    for (auto& [n, _] : rc) r_names.insert(text::to_lower(last_segment(n)));
    std::vector<std::pair<std::string, double>> cu, ru;
    for (auto& e : cc)
        if (!r_names.count(text::to_lower(e.first)) && e.first != pair.c_name) cu.push_back(e);
    for (auto& e : rc)
        if (!c_names.count(text::to_lower(last_segment(e.first))) && last_segment(e.first) != pair.rust_name)
            ru.push_back(e);
    std::vector<bool> used(ru.size(), false);
    for (const auto& [c, cpos] : cu) {
        size_t best = ru.size();
        double gap = 0.35;
        for (size_t j = 0; j < ru.size(); ++j) {
            if (used[j]) continue;
            double d = std::abs(ru[j].second - cpos);
            if (d <= gap) {
                gap = d;
                best = j;
            }
        }
        if (best == ru.size()) continue;
        used[best] = true;
        if (approx_tokens(c) > budget_ || approx_tokens(ru[best].first) > budget_) continue;
        out.api.push_back({c, ru[best].first, 1, {pair.id}});
    }
    std::string c_code = strip_comments(pair.c_source), r_code = strip_comments(pair.rust_source);
    std::set<std::string> seen;
    for (const auto& e : idiom_catalog()) {
        if (!std::regex_search(c_code, e.c_re) || !std::regex_search(r_code, e.rust_re)) continue;
        FragmentRule f{e.c_idiom, e.rust_idiom, e.hint, 1, {pair.id}};
        if (approx_tokens(f.c_idiom) > budget_ || approx_tokens(f.rust_idiom) > budget_) continue;
        if (seen.insert(f.key()).second) out.fragments.push_back(std::move(f));
    }
    return out;
}

MinedRules BackendExtractor::extract(const AlignedFunctionPair& pair) {
    backend::GenerationRequest req;
    req.system = "Extract reusable C to Rust migration rules from the aligned pair. Answer with JSON only: "
                 "{\"api\": [{\"c\": ..., \"rust\": ...}], \"fragments\": [{\"c\": ..., \"rust\": ..., \"hint\": ...}]}. "
                 "Each idiom is at most three lines.";
    req.user = "### C\n" + pair.c_source + "\n### Rust\n" + pair.rust_source + "\n";
    req.function_id = "rules:" + pair.id;
    auto r = backend_.generate(req);
    if (!r.ok()) throw KnowledgeError("rule extraction failed: " + r.error);
    auto start = r.text.find('{'), end = r.text.rfind('}');
    if (start == std::string::npos || end == std::string::npos) throw KnowledgeError("rule answer has no JSON");
    auto j = json::parse(r.text.substr(start, end - start + 1));
    MinedRules out;
    const json api = j.value("api", json::array());
    for (const auto& a : api) {
        std::string c = a.at("c"), rust = a.at("rust");
        if (approx_tokens(c) > budget_ || approx_tokens(rust) > budget_) continue;
        if (pair.rust_source.find(last_segment(rust)) == std::string::npos) continue;
        if (pair.c_source.find(c) == std::string::npos) continue;
        out.api.push_back({c, rust, 1, {pair.id}});
    }
    const json frags = j.value("fragments", json::array());
    for (const auto& f : frags) {
        FragmentRule rule{f.at("c"), f.at("rust"), f.value("hint", ""), 1, {pair.id}};
        if (approx_tokens(rule.c_idiom) > budget_ || approx_tokens(rule.rust_idiom) > budget_) continue;
        out.fragments.push_back(std::move(rule));
    }
    return out;
}

MinedRules mine_rules(const AlignedFunctionPair& pair, RuleExtractor& extractor) {
    try {
        return extractor.extract(pair);
    } catch (const std::exception& e) {
        spdlog::warn("no rules mined from pair {}: {}", pair.id, e.what());
        return {};
    }
}

// ---------------------------------------------------------------------------
// Serialization

json to_json(const AlignedFunctionPair& p) {
    return {{"id", p.id},         {"c_name", p.c_name}, {"c_source", p.c_source}, {"rust_name", p.rust_name},
            {"rust_source", p.rust_source}, {"c_file", p.c_file}, {"rust_file", p.rust_file}, {"repo", p.repo},
            {"commit", p.commit}, {"score", p.score},   {"origin", p.origin}};
}

json to_json(const ApiRule& r) {
    return {{"c_interface", r.c_interface}, {"rust_interface", r.rust_interface}, {"support", r.support},
            {"provenance", r.provenance}};
}

json to_json(const FragmentRule& r) {
    return {{"c_idiom", r.c_idiom}, {"rust_idiom", r.rust_idiom}, {"hint", r.hint}, {"support", r.support},
            {"provenance", r.provenance}};
}

json to_json(const FilePairCandidate& c) {
    return {{"c_path", c.c_path},
            {"rust_path", c.rust_path},
            {"evidence", c.evidence},
            {"scores", c.scores},
            {"regime", regime_name(c.regime)},
            {"c_commit", c.c_commit},
            {"rust_commit", c.rust_commit}};
}

namespace {

constexpr int kFormatVersion = 1;

AlignedFunctionPair pair_from_json(const json& j) {
    AlignedFunctionPair p;
    p.id = j.at("id");
    p.c_name = j.value("c_name", "");
    p.c_source = j.at("c_source");
    p.rust_name = j.value("rust_name", "");
    p.rust_source = j.at("rust_source");
    p.c_file = j.value("c_file", "");
    p.rust_file = j.value("rust_file", "");
    p.repo = j.value("repo", "");
    p.commit = j.value("commit", "");
    p.score = j.value("score", 0.0);
    p.origin = j.value("origin", "mined");
    return p;
}

std::string header(const char* kind) {
    return json{{"format", "rsmig-kb"}, {"kind", kind}, {"version", kFormatVersion}}.dump() + "\n";
}

std::vector<json> read_records(const fs::path& file, const char* kind) {
    std::vector<json> out;
    if (!fs::exists(file)) return out;
    auto lines = text::split_lines(read_file(file));
    bool first = true;
    for (const auto& line : lines) {
        if (text::trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw KnowledgeError("corrupt KB file " + file.string() + ": " + e.what());
        }
        if (first) {
            first = false;
            if (!j.is_object() || j.value("format", "") != "rsmig-kb" || j.value("kind", "") != kind)
                throw KnowledgeError("KB file " + file.string() + " lacks a format header");
            if (j.value("version", 0) != kFormatVersion)
                throw KnowledgeError(fmt::format("KB file {} has version {}, expected {}", file.string(),
                                                 j.value("version", 0), kFormatVersion));
            continue;
        }
        out.push_back(std::move(j));
    }
    return out;
}

template <class Rule>
void merge_rule(std::vector<Rule>& rules, const Rule& r) {
    for (auto& existing : rules) {
        if (existing.key() != r.key()) continue;
        for (const auto& p : r.provenance)
            if (std::find(existing.provenance.begin(), existing.provenance.end(), p) == existing.provenance.end())
                existing.provenance.push_back(p);
        existing.support = static_cast<int>(existing.provenance.size());
        if constexpr (std::is_same_v<Rule, FragmentRule>)
            if (existing.hint.empty()) existing.hint = r.hint;
        return;
    }
    Rule copy = r;
    copy.support = static_cast<int>(copy.provenance.size());
    rules.push_back(std::move(copy));
}

}  // namespace

const AlignedFunctionPair* KnowledgeSnapshot::pair(std::string_view id) const {
    for (const auto& p : pairs)
        if (p.id == id) return &p;
    return nullptr;
}

KnowledgeBase::KnowledgeBase() : snap_(std::make_shared<KnowledgeSnapshot>()) {}

KnowledgeBase::KnowledgeBase(fs::path dir) : dir_(std::move(dir)) {
    auto s = std::make_shared<KnowledgeSnapshot>();
    fs::create_directories(dir_);
    const fs::path pairs = dir_ / "pairs.jsonl";
    if (!fs::exists(pairs)) write_file(pairs, header("pairs"));
    std::set<std::string> ids;
    for (const auto& j : read_records(pairs, "pairs")) {
        ++s->journal_entries;
        auto p = pair_from_json(j);
        if (ids.insert(p.id).second) s->pairs.push_back(std::move(p));
    }
    for (const auto& j : read_records(dir_ / "api_rules.jsonl", "api_rules"))
        merge_rule(s->api_rules, ApiRule{j.at("c_interface"), j.at("rust_interface"), j.value("support", 1),
                                         j.value("provenance", std::vector<std::string>{})});
    for (const auto& j : read_records(dir_ / "fragment_rules.jsonl", "fragment_rules"))
        merge_rule(s->fragment_rules, FragmentRule{j.at("c_idiom"), j.at("rust_idiom"), j.value("hint", ""),
                                                   j.value("support", 1),
                                                   j.value("provenance", std::vector<std::string>{})});
    snap_ = s;
    persist_rules(*s);
}

std::shared_ptr<const KnowledgeSnapshot> KnowledgeBase::snapshot() const {
    std::lock_guard lock(snap_mu_);
    return snap_;
}

void KnowledgeBase::persist_rules(const KnowledgeSnapshot& s) const {
    if (dir_.empty()) return;
    std::string api = header("api_rules"), frag = header("fragment_rules");
    for (const auto& r : s.api_rules) api += to_json(r).dump() + "\n";
    for (const auto& r : s.fragment_rules) frag += to_json(r).dump() + "\n";
    write_file(dir_ / "api_rules.jsonl", api);
    write_file(dir_ / "fragment_rules.jsonl", frag);
}

void KnowledgeBase::insert(const std::vector<AlignedFunctionPair>& pairs, const std::vector<MinedRules>& rules) {
    std::lock_guard writer(write_mu_);
    auto next = std::make_shared<KnowledgeSnapshot>(*snapshot());
    std::string journal;
    for (const auto& p : pairs) {
        journal += to_json(p).dump() + "\n";
        ++next->journal_entries;
        if (!next->pair(p.id)) next->pairs.push_back(p);
    }
    for (const auto& r : rules) {
        for (const auto& a : r.api) merge_rule(next->api_rules, a);
        for (const auto& f : r.fragments) merge_rule(next->fragment_rules, f);
    }
    if (!dir_.empty()) {
        append_file(dir_ / "pairs.jsonl", journal);
        persist_rules(*next);
    }
    std::lock_guard lock(snap_mu_);
    snap_ = next;
}

AlignedFunctionPair KnowledgeBase::accumulate(const std::string& c_name, const std::string& c_source,
                                              const std::string& rust_name, const std::string& rust_source,
                                              RuleExtractor& extractor, const std::string& provenance) {
    AlignedFunctionPair p;
    p.c_name = c_name;
    p.c_source = c_source;
    p.rust_name = rust_name;
    p.rust_source = rust_source;
    p.id = pair_id(c_source, rust_source);
    p.repo = provenance;
    p.score = 1.0;
    p.origin = "accumulated";
    auto rules = mine_rules(p, extractor);
    insert({p}, {rules});
    return p;
}

Retrieved retrieve(const KnowledgeSnapshot& kb, std::string_view query_c_source, std::string_view query_signature,
                   size_t k, Reranker& reranker) {
    Retrieved out;
    if (kb.pairs.empty() || k == 0) return out;
    std::vector<Bm25Doc> docs;
    for (const auto& p : kb.pairs) docs.push_back({p.id, tokenize_code(p.c_source)});
    auto query = tokenize_code(std::string(query_c_source) + "\n" + std::string(query_signature));
    auto top = bm25_top_n(query, std::move(docs), 20);
    std::vector<RerankItem> items;
    for (const auto& r : top)
        if (r.score > 0) items.push_back({r.key, std::string(query_c_source), kb.pairs[r.index].c_source});
    std::vector<double> scores;
    auto best = rerank_top_n(items, k, reranker, &scores);
    std::set<std::string> ids;
    for (size_t i = 0; i < best.size(); ++i) {
        const auto* p = kb.pair(items[best[i]].key);
        out.examples.push_back(*p);
        out.scores.push_back(scores[i]);
        ids.insert(p->id);
    }
    auto touches = [&](const std::vector<std::string>& prov) {
        return std::any_of(prov.begin(), prov.end(), [&](const std::string& id) { return ids.count(id) > 0; });
    };
    for (const auto& r : kb.api_rules)
        if (touches(r.provenance)) out.api_rules.push_back(r);
    for (const auto& r : kb.fragment_rules)
        if (touches(r.provenance)) out.fragment_rules.push_back(r);
    auto by_support = [](const auto& a, const auto& b) {
        return a.support != b.support ? a.support > b.support : a.key() < b.key();
    };
    std::stable_sort(out.api_rules.begin(), out.api_rules.end(), by_support);
    std::stable_sort(out.fragment_rules.begin(), out.fragment_rules.end(), by_support);
    return out;
}

// ---------------------------------------------------------------------------
// Offline construction

MineSummary mine_repository(const fs::path& repo, KnowledgeBase& kb, Reranker& reranker, RuleExtractor& extractor,
                            const MineOptions& options) {
    MineSummary summary;
    auto report = get_file_candidates(repo, options.regime, options.mining);
    summary.per_heuristic = report.per_heuristic;
    summary.candidates = report.candidates.size();
    summary.notes = report.notes;

    auto content = [&](const std::string& path, const std::string& rev) -> std::optional<std::string> {
        if (rev.empty()) {
            if (!fs::exists(repo / path)) return std::nullopt;
            return read_file(repo / path);
        }
        return file_at(repo, rev, path);
    };

    std::map<std::string, std::vector<const FilePairCandidate*>> by_c;
    for (const auto& c : report.candidates) by_c[c.c_path].push_back(&c);

    std::vector<AlignedFunctionPair> pairs;
    std::vector<MinedRules> rules;
    for (const auto& [c_path, cands] : by_c) {
        auto c_text = content(c_path, cands.front()->c_commit);
        if (!c_text) continue;
        std::vector<Bm25Doc> docs;
        std::vector<std::string> texts;
        std::vector<const FilePairCandidate*> kept;
        for (const auto* cand : cands) {
            auto r = content(cand->rust_path, cand->rust_commit);
            if (!r) continue;
            docs.push_back({cand->rust_path, tokenize_code(*r)});
            texts.push_back(*r);
            kept.push_back(cand);
        }
        auto top = bm25_top_n(tokenize_code(*c_text), docs, options.bm25_n);
        std::vector<RerankItem> items;
        for (const auto& t : top) items.push_back({t.key, *c_text, texts[t.index]});
        auto best = rerank_top_n(items, options.file_n, reranker);
        for (size_t b : best) {
            const auto* cand = kept[top[b].index];
            ++summary.file_pairs;
            FilePair fp{c_path, *c_text, cand->rust_path, texts[top[b].index], repo.string(),
                        cand->rust_commit.empty() ? cand->c_commit : cand->rust_commit};
            for (auto& p : align_functions(fp, reranker, options.function_n)) {
                rules.push_back(mine_rules(p, extractor));
                pairs.push_back(std::move(p));
            }
        }
    }
    kb.insert(pairs, rules);
    auto s = kb.snapshot();
    summary.pairs = pairs.size();
    summary.api_rules = s->api_rules.size();
    summary.fragment_rules = s->fragment_rules.size();
    return summary;
}

}  // namespace rsmig::knowledge
