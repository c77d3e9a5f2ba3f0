#include "rsmig/symbol_extract.hpp"

#include "rsmig/support/text.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <filesystem>
#include <limits>
#include <map>

namespace rsmig::symbols {

using c::CEnumerator;
using c::CMember;
using c::CParam;
using c::CType;

const CFunctionDecl* SymbolTable::find_function(std::string_view name) const {
    for (const auto& f : functions)
        if (f.name == name) return &f;
    return nullptr;
}

const CGlobalDecl* SymbolTable::find_global(std::string_view name) const {
    for (const auto& g : globals)
        if (g.name == name) return &g;
    return nullptr;
}

namespace {

// ---------------------------------------------------------------------------
// Lexer

enum class Tok { Ident, Number, String, Char, Punct, End };

struct Token {
    Tok kind = Tok::End;
    std::string text;
    size_t line = 0;
    size_t begin = 0;
    size_t end = 0;
};

bool is_line_start(std::string_view s, size_t i) {
    while (i > 0) {
        char c = s[i - 1];
        if (c == '\n') return true;
        if (c != ' ' && c != '\t') return false;
        --i;
    }
    return true;
}

std::vector<Token> lex(std::string_view s) {
    static const char* kPuncts[] = {"...", "<<=", ">>=", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=",
                                    "&&",  "||",  "+=",  "-=", "*=", "/=", "%=", "&=", "|=", "^=", "##"};
    std::vector<Token> out;
    size_t i = 0, line = 0;
    auto push = [&](Tok k, size_t b, size_t e) { out.push_back({k, std::string(s.substr(b, e - b)), line, b, e}); };
    while (i < s.size()) {
        char c = s[i];
        if (c == '\n') {
            ++line;
            ++i;
            continue;
        }
        if (c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v') {
            ++i;
            continue;
        }
        if (c == '#' && is_line_start(s, i)) {
            // Line markers, pragmas, and (in bare text) directives.
            while (i < s.size() && s[i] != '\n') {
                if (s[i] == '\\' && i + 1 < s.size() && s[i + 1] == '\n') {
                    ++line;
                    ++i;
                }
                ++i;
            }
            continue;
        }
        if (c == '/' && i + 1 < s.size() && s[i + 1] == '/') {
            while (i < s.size() && s[i] != '\n') ++i;
            continue;
        }
        if (c == '/' && i + 1 < s.size() && s[i + 1] == '*') {
            i += 2;
            while (i + 1 < s.size() && !(s[i] == '*' && s[i + 1] == '/')) {
                if (s[i] == '\n') ++line;
                ++i;
            }
            i += 2;
            continue;
        }
        size_t b = i;
        auto quoted = [&](char q) {
            ++i;
            while (i < s.size() && s[i] != q && s[i] != '\n') {
                if (s[i] == '\\') ++i;
                ++i;
            }
            if (i < s.size() && s[i] == q) ++i;
        };
        if (text::is_identifier_start(c)) {
            while (i < s.size() && text::is_identifier_char(s[i])) ++i;
            std::string_view word = s.substr(b, i - b);
            if (i < s.size() && (s[i] == '"' || s[i] == '\'') &&
                (word == "L" || word == "u" || word == "U" || word == "u8")) {
                char q = s[i];
                quoted(q);
                push(q == '"' ? Tok::String : Tok::Char, b, i);
                continue;
            }
            push(Tok::Ident, b, i);
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
            ++i;
            while (i < s.size()) {
                char d = s[i];
                if ((d == '+' || d == '-') && (s[i - 1] == 'e' || s[i - 1] == 'E' || s[i - 1] == 'p' || s[i - 1] == 'P')) {
                    ++i;
                } else if (std::isalnum(static_cast<unsigned char>(d)) || d == '.' || d == '_') {
                    ++i;
                } else {
                    break;
                }
            }
            push(Tok::Number, b, i);
            continue;
        }
        if (c == '"' || c == '\'') {
            quoted(c);
            push(c == '"' ? Tok::String : Tok::Char, b, i);
            continue;
        }
        size_t len = 1;
        for (const char* p : kPuncts) {
            size_t n = std::char_traits<char>::length(p);
            if (s.substr(i, n) == p) {
                len = n;
                break;
            }
        }
        i += len;
        push(Tok::Punct, b, i);
    }
    out.push_back({Tok::End, "", line, s.size(), s.size()});
    return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

const std::set<std::string, std::less<>>& c_keywords() {
    static const std::set<std::string, std::less<>> k = {
        "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else", "enum", "extern",
        "float", "for", "goto", "if", "inline", "int", "long", "register", "restrict", "return", "short", "signed",
        "sizeof", "static", "struct", "switch", "typedef", "union", "unsigned", "void", "volatile", "while", "_Bool",
        "_Complex", "_Imaginary", "_Alignas", "_Alignof", "_Atomic", "_Generic", "_Noreturn", "_Static_assert",
        "_Thread_local", "__attribute__", "__attribute", "__asm__", "__asm", "asm", "__extension__", "__inline",
        "__inline__", "__restrict", "__restrict__", "__const", "__const__", "__volatile__", "__volatile",
        "__typeof__", "__typeof", "typeof", "__alignof__", "__alignof", "__signed__", "__signed", "__label__",
        "__thread", "__int128", "_Float16", "_Float32", "_Float64", "_Float128", "_Float32x", "_Float64x",
        "__float128", "__complex__", "__real__", "__imag__", "__auto_type"};
    return k;
}

bool is_builtin_type_word(std::string_view w) {
    static const std::set<std::string, std::less<>> k = {
        "void",     "char",     "short",    "int",      "long",      "float",     "double",    "signed",
        "unsigned", "_Bool",    "__int128", "_Float16", "_Float32",  "_Float64",  "_Float128", "_Float32x",
        "_Float64x", "__float128", "__signed__", "__signed", "__builtin_va_list"};
    return k.contains(w);
}

bool is_qualifier_word(std::string_view w) {
    return w == "volatile" || w == "restrict" || w == "__restrict" || w == "__restrict__" || w == "__volatile__" ||
           w == "__volatile" || w == "inline" || w == "__inline" || w == "__inline__" || w == "_Noreturn" ||
           w == "__extension__" || w == "register" || w == "auto" || w == "_Thread_local" || w == "__thread";
}

bool is_const_word(std::string_view w) { return w == "const" || w == "__const" || w == "__const__"; }
bool is_attribute_word(std::string_view w) { return w == "__attribute__" || w == "__attribute"; }
bool is_asm_word(std::string_view w) { return w == "__asm__" || w == "__asm" || w == "asm"; }

std::string file_stem(const std::string& file) {
    std::string stem = std::filesystem::path(file).stem().string();
    for (char& c : stem)
        if (!text::is_identifier_char(c)) c = '_';
    return stem.empty() ? "unit" : stem;
}

struct ParseFailure {
    std::string construct;
    std::string message;
    size_t token = 0;
};

struct NotConstant {};

struct DeclSpec {
    CTypePtr type;
    enum class Sc { None, Typedef, Extern, Static } storage = Sc::None;
    bool is_const = false;
    bool any = false;
    bool packed = false;
    std::optional<std::uint64_t> aligned;
};

struct Declarator {
    std::string name;
    CTypePtr type;
    size_t name_token = 0;
};

std::uint64_t mask_bits(std::uint64_t bytes) { return bytes >= 8 ? ~0ULL : ((1ULL << (bytes * 8)) - 1); }

bool is_unsigned_builtin(const std::string& n) {
    return n.rfind("unsigned", 0) == 0 || n == "_Bool";
}

// ---------------------------------------------------------------------------
// Parser

class Parser {
public:
    Parser(std::string_view text, const build::PreprocessedUnit* unit, std::string unit_name, const SourceLoader* loader)
        : text_(text), unit_(unit), loader_(loader), toks_(lex(text)) {
        table_.unit = std::move(unit_name);
    }

    SymbolTable run();
    /// Parses the whole input as one type name; null when it is not one.
    CTypePtr standalone_type();

private:
    // --- token helpers
    const Token& peek(size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
    const Token& next() {
        const Token& t = toks_[pos_];
        if (pos_ + 1 < toks_.size()) ++pos_;
        return t;
    }
    bool at(std::string_view p) const { return peek().kind != Tok::String && peek().kind != Tok::Char && peek().text == p; }
    bool accept(std::string_view p) {
        if (!at(p)) return false;
        next();
        return true;
    }
    void expect(std::string_view p, const char* construct) {
        if (!accept(p)) fail(construct, "expected '" + std::string(p) + "' before '" + peek().text + "'");
    }
    [[noreturn]] void fail(std::string construct, std::string message) const {
        throw ParseFailure{std::move(construct), std::move(message), pos_};
    }
    size_t match_close(size_t open) const;
    void skip_balanced();

    SourceLoc loc_of(size_t token) const;
    bool is_system(size_t token) const { return loc_of(token).system; }

    // --- symbol lookups over committed and pending state
    std::optional<CTypePtr> typedef_ref(std::string_view name) const;
    std::optional<std::int64_t> enumerator(std::string_view name) const;
    bool tag_defined(std::string_view name) const;
    c::TypeLookup current_lookup() const;
    bool starts_type(size_t k = 0) const;

    // --- declarations
    void parse_external_declaration();
    DeclSpec parse_decl_specs(bool allow_implicit_name_types = true);
    CTypePtr parse_tag(DeclSpec& spec);
    void parse_record_body(CTypeDef& def);
    void parse_enum_body(CTypeDef& def);
    void skip_attributes(DeclSpec* spec = nullptr);
    void skip_asm_labels();
    Declarator parse_declarator(CTypePtr base, bool abstract_ok);
    CTypePtr parse_suffixes(CTypePtr base);
    CTypePtr parse_params(CTypePtr ret);
    CTypePtr parse_type_name();
    std::string capture_initializer(size_t& begin_tok, size_t& end_tok);
    void handle_function_definition(const Declarator& d, const DeclSpec& spec, size_t start);
    void add_function(CFunctionDecl f, bool definition);
    void add_global(CGlobalDecl g);
    void note_tag_ref(CType::Kind kind, const std::string& name, size_t token);
    std::string anon_name(size_t token);

    // --- constant expressions
    std::int64_t const_expr();
    std::int64_t cexpr(int min_prec);
    std::int64_t cunary();
    std::int64_t cast_to(std::int64_t v, const CTypePtr& t) const;

    // --- bodies
    void harvest_body(CFunctionDecl& f, size_t open, size_t close, const std::set<std::string>& params);
    std::vector<std::string> idents_in(size_t begin, size_t end, bool* takes_address_of_functions);

    // --- commit
    void begin_decl();
    void commit();
    void rollback();
    void clear_pending();
    void finish();
    std::string original_span(size_t first_tok, size_t last_tok) const;

    std::string_view text_;
    const build::PreprocessedUnit* unit_;
    const SourceLoader* loader_;
    std::vector<Token> toks_;
    size_t pos_ = 0;
    SymbolTable table_;

    // committed state
    std::deque<CTypeDef> types_;
    c::TypeLookup lookup_;
    std::map<std::string, CTypePtr, std::less<>> typedefs_;
    std::map<std::string, std::int64_t, std::less<>> enums_;
    std::map<std::string, size_t, std::less<>> fn_index_;
    std::map<std::string, size_t, std::less<>> gl_index_;
    std::map<std::string, std::pair<CType::Kind, SourceLoc>, std::less<>> tag_refs_;
    std::map<std::string, int> anon_counters_;
    std::set<std::string> unknown_types_;
    std::set<std::string> referenced_;

    // pending state for the declaration being parsed
    std::vector<CTypeDef> p_types_;
    std::vector<std::pair<std::string, CTypePtr>> p_typedefs_;
    std::vector<std::pair<std::string, std::int64_t>> p_enums_;
    std::vector<std::pair<CFunctionDecl, bool>> p_funcs_;
    std::vector<CGlobalDecl> p_globals_;
    std::vector<std::tuple<std::string, CType::Kind, SourceLoc>> p_tag_refs_;
    std::set<std::string> p_unknown_types_;
    std::set<std::string> p_referenced_;
    std::set<std::string> p_address_taken_;
    std::map<std::string, int> saved_counters_;
    std::string pending_typedef_tag_name_;
};

size_t Parser::match_close(size_t open) const {
    int depth = 0;
    for (size_t i = open; i < toks_.size(); ++i) {
        const auto& t = toks_[i];
        if (t.kind != Tok::Punct) continue;
        if (t.text == "(" || t.text == "[" || t.text == "{") ++depth;
        if (t.text == ")" || t.text == "]" || t.text == "}") {
            if (--depth == 0) return i;
        }
    }
    return toks_.size() - 1;
}

void Parser::skip_balanced() {
    size_t close = match_close(pos_);
    pos_ = std::min(close + 1, toks_.size() - 1);
}

SourceLoc Parser::loc_of(size_t token) const {
    const Token& t = toks_[std::min(token, toks_.size() - 1)];
    if (unit_ && !unit_->line_map.empty()) {
        for (size_t l = std::min(t.line, unit_->line_map.size() - 1);; --l) {
            if (const auto& o = unit_->line_map[l]) return {o->file, o->line + static_cast<int>(t.line - l), o->system};
            if (l == 0) break;
        }
        return {unit_->origin.command.source_file, static_cast<int>(t.line + 1), false};
    }
    return {table_.unit, static_cast<int>(t.line + 1), false};
}

std::optional<CTypePtr> Parser::typedef_ref(std::string_view name) const {
    for (auto it = p_typedefs_.rbegin(); it != p_typedefs_.rend(); ++it)
        if (it->first == name) return it->second;
    auto it = typedefs_.find(name);
    if (it != typedefs_.end()) return it->second;
    if (name == "__builtin_va_list") return CType::builtin("__builtin_va_list");
    return std::nullopt;
}

std::optional<std::int64_t> Parser::enumerator(std::string_view name) const {
    for (auto it = p_enums_.rbegin(); it != p_enums_.rend(); ++it)
        if (it->first == name) return it->second;
    auto it = enums_.find(name);
    if (it != enums_.end()) return it->second;
    return std::nullopt;
}

bool Parser::tag_defined(std::string_view name) const {
    for (const auto& t : p_types_)
        if (t.name == name && t.is_tag() && !t.opaque) return true;
    const CTypeDef* d = lookup_.tag(name);
    return d && !d->opaque;
}

c::TypeLookup Parser::current_lookup() const {
    c::TypeLookup l = lookup_;
    for (const auto& t : p_types_) l.add(t);
    return l;
}

bool Parser::starts_type(size_t k) const {
    const Token& t = peek(k);
    if (t.kind != Tok::Ident) return false;
    if (is_builtin_type_word(t.text) || is_const_word(t.text) || is_qualifier_word(t.text)) return true;
    if (t.text == "struct" || t.text == "union" || t.text == "enum") return true;
    if (t.text == "_Atomic" || t.text == "__typeof__" || t.text == "__typeof" || t.text == "typeof" ||
        t.text == "_Complex" || t.text == "__complex__")
        return true;
    return typedef_ref(t.text).has_value();
}

void Parser::note_tag_ref(CType::Kind kind, const std::string& name, size_t token) {
    p_tag_refs_.emplace_back(name, kind, loc_of(token));
}

std::string Parser::anon_name(size_t token) {
    std::string stem = file_stem(loc_of(token).file);
    int n = ++anon_counters_[stem];
    return "Anon_" + stem + "_" + std::to_string(n);
}

void Parser::skip_attributes(DeclSpec* spec) {
    for (;;) {
        if (peek().kind == Tok::Ident && is_attribute_word(peek().text)) {
            next();
            if (!at("(")) return;
            size_t open = pos_, close = match_close(open);
            for (size_t i = open; i < close; ++i) {
                std::string_view w = toks_[i].text;
                if (!spec || toks_[i].kind != Tok::Ident) continue;
                if (w == "packed" || w == "__packed__") spec->packed = true;
                if (w == "aligned" || w == "__aligned__") {
                    if (toks_[i + 1].text == "(") {
                        size_t save = pos_;
                        pos_ = i + 2;
                        try {
                            spec->aligned = static_cast<std::uint64_t>(const_expr());
                        } catch (const NotConstant&) {
                        }
                        pos_ = save;
                    } else {
                        spec->aligned = 16;
                    }
                }
            }
            pos_ = close + 1;
            continue;
        }
        if (peek().kind == Tok::Ident && peek().text == "_Alignas") {
            next();
            size_t open = pos_;
            if (spec) {
                next();
                try {
                    if (starts_type()) {
                        auto t = parse_type_name();
                        if (auto l = c::layout_of(*t, current_lookup())) spec->aligned = l->align;
                    } else {
                        spec->aligned = static_cast<std::uint64_t>(const_expr());
                    }
                } catch (const NotConstant&) {
                }
            }
            pos_ = match_close(open) + 1;
            continue;
        }
        return;
    }
}

void Parser::skip_asm_labels() {
    for (;;) {
        if (peek().kind == Tok::Ident && is_asm_word(peek().text)) {
            next();
            while (peek().kind == Tok::Ident && (is_qualifier_word(peek().text) || peek().text == "goto")) next();
            if (at("(")) skip_balanced();
            continue;
        }
        if (peek().kind == Tok::Ident && is_attribute_word(peek().text)) {
            skip_attributes();
            continue;
        }
        return;
    }
}

DeclSpec Parser::parse_decl_specs(bool allow_implicit_name_types) {
    DeclSpec spec;
    std::map<std::string, int> words;
    bool named = false;
    for (;;) {
        const Token& t = peek();
        if (t.kind != Tok::Ident) break;
        const std::string& w = t.text;
        if (w == "typedef") {
            spec.storage = DeclSpec::Sc::Typedef;
        } else if (w == "extern") {
            spec.storage = DeclSpec::Sc::Extern;
        } else if (w == "static") {
            spec.storage = DeclSpec::Sc::Static;
        } else if (is_const_word(w)) {
            spec.is_const = true;
        } else if (is_qualifier_word(w)) {
        } else if (is_attribute_word(w) || w == "_Alignas") {
            skip_attributes(&spec);
            spec.any = true;
            continue;
        } else if (w == "__typeof__" || w == "__typeof" || w == "typeof") {
            fail("typeof", "typeof specifiers are not supported");
        } else if (w == "_Complex" || w == "__complex__") {
            fail("_Complex", "complex types are not supported");
        } else if (w == "_Atomic") {
            fail("_Atomic", "atomic types are not supported");
        } else if (w == "struct" || w == "union" || w == "enum") {
            if (spec.type || !words.empty()) fail("declaration", "conflicting type specifiers");
            spec.type = parse_tag(spec);
            spec.any = true;
            continue;
        } else if (is_builtin_type_word(w) && w != "__builtin_va_list") {
            if (spec.type) break;
            ++words[w == "__signed__" || w == "__signed" ? "signed" : w];
        } else if (!spec.type && words.empty() && !named) {
            if (auto td = typedef_ref(w)) {
                spec.type = *td;
                named = true;
            } else if (allow_implicit_name_types && !c_keywords().contains(w) &&
                       (peek(1).kind == Tok::Ident ? !c_keywords().contains(peek(1).text) ||
                                                         is_const_word(peek(1).text) ||
                                                         is_qualifier_word(peek(1).text) || is_attribute_word(peek(1).text)
                                                   : peek(1).text == "*")) {
                // Unknown type name, e.g. from a header the unit does not see.
                spec.type = CType::named(CType::Kind::Typedef, w);
                p_unknown_types_.insert(w);
                named = true;
            } else {
                break;
            }
        } else {
            break;
        }
        spec.any = true;
        next();
    }
    if (!words.empty()) {
        auto n = [&](const char* k) { return words.contains(k) ? words[k] : 0; };
        int longs = n("long");
        bool uns = n("unsigned") > 0;
        std::string name;
        if (n("void")) name = "void";
        else if (n("_Bool")) name = "_Bool";
        else if (n("char")) name = uns ? "unsigned char" : (n("signed") ? "signed char" : "char");
        else if (n("short")) name = uns ? "unsigned short" : "short";
        else if (n("__int128")) name = uns ? "unsigned __int128" : "__int128";
        else if (n("float")) name = "float";
        else if (n("double")) name = longs ? "long double" : "double";
        else if (n("_Float128") || n("__float128")) name = n("_Float128") ? "_Float128" : "__float128";
        else if (n("_Float16")) name = "_Float16";
        else if (n("_Float32")) name = "_Float32";
        else if (n("_Float64")) name = "_Float64";
        else if (n("_Float32x")) name = "_Float32x";
        else if (n("_Float64x")) name = "_Float64x";
        else if (longs >= 2) name = uns ? "unsigned long long" : "long long";
        else if (longs == 1) name = uns ? "unsigned long" : "long";
        else name = uns ? "unsigned int" : "int";
        spec.type = name == "void" ? CType::make_void() : CType::builtin(name);
    }
    if (!spec.type && spec.any) spec.type = CType::builtin("int");  // implicit int, e.g. `unsigned` alone handled above
    if (spec.type && spec.is_const) spec.type = c::with_const(spec.type, true);
    return spec;
}

CTypePtr Parser::parse_tag(DeclSpec& spec) {
    size_t kw_tok = pos_;
    std::string kw = next().text;
    CType::Kind kind = kw == "struct" ? CType::Kind::Record : kw == "union" ? CType::Kind::Union : CType::Kind::Enum;
    DeclSpec attrs;
    skip_attributes(&attrs);
    std::string name;
    bool synthesized = false;
    if (peek().kind == Tok::Ident && !c_keywords().contains(peek().text)) name = next().text;
    skip_attributes(&attrs);
    if (!at("{")) {
        if (name.empty()) fail(kw, "anonymous " + kw + " without a body");
        if (kind == CType::Kind::Enum && at(":")) fail("enum", "enums with a fixed underlying type are not supported");
        note_tag_ref(kind, name, kw_tok);
        return CType::named(kind, name);
    }
    if (name.empty()) {
        // `typedef struct { ... } Foo;` names the record after the typedef.
        if (spec.storage == DeclSpec::Sc::Typedef) {
            size_t j = match_close(pos_) + 1;
            while (toks_[j].kind == Tok::Ident && is_attribute_word(toks_[j].text)) j = match_close(j + 1) + 1;
            if (toks_[j].kind == Tok::Ident && (toks_[j + 1].text == ";" || toks_[j + 1].text == "," ||
                                                is_attribute_word(toks_[j + 1].text)) &&
                !tag_defined(toks_[j].text) && !typedef_ref(toks_[j].text))
                name = toks_[j].text;
        }
        if (name.empty()) {
            name = anon_name(kw_tok);
            synthesized = true;
        }
    }
    if (tag_defined(name)) fail(kw, "redefinition of " + kw + " " + name);
    CTypeDef def;
    def.name = name;
    def.kind = kind == CType::Kind::Record  ? CTypeDef::Kind::Record
               : kind == CType::Kind::Union ? CTypeDef::Kind::Union
                                            : CTypeDef::Kind::Enumeration;
    def.source_loc = loc_of(kw_tok);
    def.synthesized_name = synthesized;
    if (kind == CType::Kind::Enum) parse_enum_body(def);
    else parse_record_body(def);
    DeclSpec trailing;
    skip_attributes(&trailing);
    def.packed = attrs.packed || trailing.packed;
    def.aligned = attrs.aligned ? attrs.aligned : trailing.aligned;
    if (def.packed || def.aligned) def.layout_sensitive = true;
    p_types_.push_back(std::move(def));
    return CType::named(kind, name);
}

void Parser::parse_record_body(CTypeDef& def) {
    expect("{", "record");
    int anon_members = 0;
    while (!at("}")) {
        if (peek().kind == Tok::End) fail("record", "unterminated record body");
        if (accept(";")) continue;
        if (peek().text == "_Static_assert") {
            next();
            skip_balanced();
            expect(";", "_Static_assert");
            continue;
        }
        size_t before = p_types_.size();
        DeclSpec spec = parse_decl_specs();
        if (!spec.type) fail("record member", "expected a member declaration before '" + peek().text + "'");
        if (spec.packed || spec.aligned) def.layout_sensitive = true;
        if (at(";")) {
            bool anon_record = p_types_.size() > before && p_types_.back().synthesized_name &&
                               (spec.type->kind == CType::Kind::Record || spec.type->kind == CType::Kind::Union);
            if (anon_record) {
                CMember m;
                m.name = "__anon" + std::to_string(anon_members++);
                m.type = spec.type;
                m.c_type_text = c::to_c_string(*m.type);
                def.members.push_back(std::move(m));
            }
            next();
            continue;
        }
        for (;;) {
            CMember m;
            if (at(":")) {
                m.type = spec.type;
            } else {
                Declarator d = parse_declarator(spec.type, false);
                m.name = d.name;
                m.type = d.type;
            }
            if (accept(":")) {
                try {
                    m.bit_width = static_cast<int>(const_expr());
                } catch (const NotConstant&) {
                    fail("bit-field", "bit-field width is not a constant expression");
                }
                def.layout_sensitive = true;
            }
            DeclSpec member_attrs;
            skip_attributes(&member_attrs);
            if (member_attrs.packed || member_attrs.aligned) def.layout_sensitive = true;
            m.c_type_text = c::to_c_string(*m.type);
            def.members.push_back(std::move(m));
            if (accept(",")) continue;
            expect(";", "record member");
            break;
        }
    }
    expect("}", "record");
}

void Parser::parse_enum_body(CTypeDef& def) {
    expect("{", "enum");
    std::int64_t value = 0;
    while (!at("}")) {
        if (peek().kind != Tok::Ident) fail("enum", "expected an enumerator before '" + peek().text + "'");
        std::string name = next().text;
        skip_attributes();
        if (accept("=")) {
            try {
                value = const_expr();
            } catch (const NotConstant&) {
                fail("enum", "enumerator " + name + " has a non-constant value");
            }
        }
        def.enumerators.push_back({name, value});
        p_enums_.emplace_back(name, value);
        ++value;
        if (!accept(",")) break;
    }
    expect("}", "enum");
}

Declarator Parser::parse_declarator(CTypePtr base, bool abstract_ok) {
    skip_attributes();
    while (at("*") || (peek().kind == Tok::Punct && peek().text == "^")) {
        next();
        bool is_const = false;
        while (peek().kind == Tok::Ident &&
               (is_const_word(peek().text) || is_qualifier_word(peek().text) || is_attribute_word(peek().text))) {
            if (is_const_word(peek().text)) is_const = true;
            if (is_attribute_word(peek().text)) skip_attributes();
            else next();
        }
        base = CType::pointer_to(base, is_const);
    }
    Declarator d;
    if (at("(") && (peek(1).text == "*" || peek(1).text == "(" || peek(1).text == "^" ||
                    is_attribute_word(peek(1).text) ||
                    (peek(1).kind == Tok::Ident && !starts_type(1) && !c_keywords().contains(peek(1).text)))) {
        size_t open = pos_, close = match_close(open);
        pos_ = close + 1;
        CTypePtr outer = parse_suffixes(base);
        size_t after = pos_;
        pos_ = open + 1;
        d = parse_declarator(outer, abstract_ok);
        if (pos_ != close) fail("declarator", "unexpected '" + peek().text + "' in declarator");
        pos_ = after;
        return d;
    }
    if (peek().kind == Tok::Ident && !c_keywords().contains(peek().text)) {
        d.name_token = pos_;
        d.name = next().text;
    } else if (!abstract_ok) {
        fail("declarator", "expected a name before '" + peek().text + "'");
    }
    d.type = parse_suffixes(base);
    return d;
}

CTypePtr Parser::parse_suffixes(CTypePtr base) {
    struct Suffix {
        bool is_array;
        std::optional<std::uint64_t> size;
        size_t at;
    };
    std::vector<Suffix> suffixes;
    for (;;) {
        if (at("[")) {
            next();
            while (peek().kind == Tok::Ident && (is_const_word(peek().text) || is_qualifier_word(peek().text) ||
                                                 peek().text == "static"))
                next();
            Suffix s{true, std::nullopt, pos_};
            if (!at("]")) {
                size_t open = pos_ - 1;
                try {
                    s.size = static_cast<std::uint64_t>(const_expr());
                } catch (const NotConstant&) {
                    s.size = std::numeric_limits<std::uint64_t>::max();
                }
                pos_ = match_close(open);
            }
            expect("]", "array declarator");
            suffixes.push_back(s);
        } else if (at("(")) {
            suffixes.push_back({false, std::nullopt, pos_});
            skip_balanced();
        } else {
            break;
        }
    }
    size_t resume = pos_;
    for (auto it = suffixes.rbegin(); it != suffixes.rend(); ++it) {
        if (it->is_array) {
            if (it->size == std::numeric_limits<std::uint64_t>::max()) {
                pos_ = it->at;
                fail("array declarator", "array size is not a constant expression");
            }
            base = CType::array_of(base, it->size);
        } else {
            pos_ = it->at;
            base = parse_params(base);
        }
    }
    pos_ = resume;
    return base;
}

CTypePtr Parser::parse_params(CTypePtr ret) {
    expect("(", "parameter list");
    std::vector<CParam> params;
    bool variadic = false;
    if (accept(")")) return CType::function(ret, {}, false, true);
    if (peek().text == "void" && peek(1).text == ")") {
        next();
        next();
        return CType::function(ret, {}, false, false);
    }
    for (;;) {
        if (accept("...")) {
            variadic = true;
            break;
        }
        DeclSpec spec = parse_decl_specs();
        if (!spec.type) fail("parameter", "K&R-style parameter lists are not supported");
        Declarator d = parse_declarator(spec.type, true);
        skip_attributes();
        CTypePtr t = d.type;
        if (t->kind == CType::Kind::Array) t = CType::pointer_to(t->inner, t->is_const);
        else if (t->kind == CType::Kind::Function) t = CType::pointer_to(t);
        params.push_back({d.name, t});
        if (!accept(",")) break;
    }
    expect(")", "parameter list");
    return CType::function(ret, std::move(params), variadic, false);
}

CTypePtr Parser::parse_type_name() {
    DeclSpec spec = parse_decl_specs(false);
    if (!spec.type) throw NotConstant{};
    return parse_declarator(spec.type, true).type;
}

CTypePtr Parser::standalone_type() {
    if (peek().kind == Tok::Ident && !c_keywords().contains(peek().text) && !typedef_ref(peek().text))
        p_typedefs_.emplace_back(peek().text, CType::named(CType::Kind::Typedef, peek().text));
    try {
        CTypePtr t = parse_type_name();
        return peek().kind == Tok::End ? t : nullptr;
    } catch (const ParseFailure&) {
    } catch (const NotConstant&) {
    }
    return nullptr;
}

// --- constant expressions --------------------------------------------------

std::int64_t Parser::const_expr() { return cexpr(0); }

int binary_prec(const std::string& op) {
    static const std::map<std::string, int> k = {
        {"||", 1}, {"&&", 2}, {"|", 3},  {"^", 4},  {"&", 5},  {"==", 6}, {"!=", 6}, {"<", 7},  {">", 7},
        {"<=", 7}, {">=", 7}, {"<<", 8}, {">>", 8}, {"+", 9},  {"-", 9},  {"*", 10}, {"/", 10}, {"%", 10}};
    auto it = k.find(op);
    return it == k.end() ? -1 : it->second;
}

std::int64_t Parser::cexpr(int min_prec) {
    std::int64_t lhs = cunary();
    for (;;) {
        if (peek().kind == Tok::Punct && peek().text == "?" && min_prec == 0) {
            next();
            std::int64_t a = cexpr(0);
            if (!accept(":")) throw NotConstant{};
            std::int64_t b = cexpr(0);
            lhs = lhs ? a : b;
            continue;
        }
        if (peek().kind != Tok::Punct) return lhs;
        std::string op = peek().text;
        int prec = binary_prec(op);
        if (prec < 0 || prec <= min_prec - 1 || prec < min_prec) return lhs;
        next();
        std::int64_t rhs = cexpr(prec + 1);
        auto u = [](std::int64_t v) { return static_cast<std::uint64_t>(v); };
        if (op == "||") lhs = lhs || rhs;
        else if (op == "&&") lhs = lhs && rhs;
        else if (op == "|") lhs |= rhs;
        else if (op == "^") lhs ^= rhs;
        else if (op == "&") lhs &= rhs;
        else if (op == "==") lhs = lhs == rhs;
        else if (op == "!=") lhs = lhs != rhs;
        else if (op == "<") lhs = lhs < rhs;
        else if (op == ">") lhs = lhs > rhs;
        else if (op == "<=") lhs = lhs <= rhs;
        else if (op == ">=") lhs = lhs >= rhs;
        else if (op == "<<") lhs = (rhs < 0 || rhs > 63) ? 0 : static_cast<std::int64_t>(u(lhs) << rhs);
        else if (op == ">>") lhs = (rhs < 0 || rhs > 63) ? 0 : lhs >> rhs;
        else if (op == "+") lhs = static_cast<std::int64_t>(u(lhs) + u(rhs));
        else if (op == "-") lhs = static_cast<std::int64_t>(u(lhs) - u(rhs));
        else if (op == "*") lhs = static_cast<std::int64_t>(u(lhs) * u(rhs));
        else if (op == "/" || op == "%") {
            if (rhs == 0) throw NotConstant{};
            lhs = op == "/" ? lhs / rhs : lhs % rhs;
        }
    }
}

std::int64_t Parser::cast_to(std::int64_t v, const CTypePtr& t) const {
    CTypePtr r = current_lookup().resolve(t);
    if (!r) return v;
    if (r->kind == CType::Kind::Pointer) return v;
    if (r->kind == CType::Kind::Builtin) {
        if (r->name == "_Bool") return v != 0;
        auto l = c::layout_of(*r, current_lookup());
        if (!l || l->size >= 8) return v;
        std::uint64_t m = mask_bits(l->size);
        std::uint64_t bits = static_cast<std::uint64_t>(v) & m;
        if (!is_unsigned_builtin(r->name) && (bits >> (l->size * 8 - 1)) & 1) bits |= ~m;
        return static_cast<std::int64_t>(bits);
    }
    if (r->kind == CType::Kind::Enum) return static_cast<std::int32_t>(v);
    throw NotConstant{};
}

std::int64_t Parser::cunary() {
    const Token& t = peek();
    if (t.kind == Tok::Number) {
        next();
        auto lit = parse_literal(t.text);
        if (!lit) throw NotConstant{};
        return lit->int_value;
    }
    if (t.kind == Tok::Char) {
        next();
        auto lit = parse_literal(t.text);
        if (!lit) throw NotConstant{};
        return lit->int_value;
    }
    if (t.kind == Tok::Punct) {
        if (t.text == "(") {
            if (starts_type(1)) {
                next();
                CTypePtr ty = parse_type_name();
                if (!accept(")")) throw NotConstant{};
                return cast_to(cunary(), ty);
            }
            next();
            std::int64_t v = cexpr(0);
            if (!accept(")")) throw NotConstant{};
            return v;
        }
        if (t.text == "-") {
            next();
            return static_cast<std::int64_t>(0ULL - static_cast<std::uint64_t>(cunary()));
        }
        if (t.text == "+") {
            next();
            return cunary();
        }
        if (t.text == "~") {
            next();
            return ~cunary();
        }
        if (t.text == "!") {
            next();
            return !cunary();
        }
        throw NotConstant{};
    }
    if (t.kind == Tok::Ident) {
        if (t.text == "sizeof" || t.text == "_Alignof" || t.text == "__alignof__" || t.text == "__alignof") {
            bool is_size = t.text == "sizeof";
            next();
            if (!at("(") || !starts_type(1)) throw NotConstant{};
            next();
            CTypePtr ty = parse_type_name();
            if (!accept(")")) throw NotConstant{};
            auto l = c::layout_of(*ty, current_lookup());
            if (!l) throw NotConstant{};
            return static_cast<std::int64_t>(is_size ? l->size : l->align);
        }
        if (t.text == "__builtin_offsetof") {
            next();
            if (!accept("(")) throw NotConstant{};
            CTypePtr ty = parse_type_name();
            if (!accept(",") || peek().kind != Tok::Ident) throw NotConstant{};
            std::string member = next().text;
            if (!accept(")")) throw NotConstant{};
            auto lookup = current_lookup();
            CTypePtr r = lookup.resolve(ty);
            const CTypeDef* def = r ? lookup.tag(r->name) : nullptr;
            if (!def) throw NotConstant{};
            auto rl = c::record_layout(*def, lookup);
            if (!rl) throw NotConstant{};
            for (const auto& f : rl->fields)
                if (f.name == member && f.bit_width == 0) return static_cast<std::int64_t>(f.bit_offset / 8);
            throw NotConstant{};
        }
        if (auto v = enumerator(t.text)) {
            next();
            return *v;
        }
    }
    throw NotConstant{};
}

// --- declarations ------------------------------------------------------------

std::string Parser::capture_initializer(size_t& begin_tok, size_t& end_tok) {
    begin_tok = pos_;
    int depth = 0;
    while (peek().kind != Tok::End) {
        const Token& t = peek();
        if (t.kind == Tok::Punct) {
            if (t.text == "(" || t.text == "[" || t.text == "{") ++depth;
            else if (t.text == ")" || t.text == "]" || t.text == "}") --depth;
            else if (depth == 0 && (t.text == "," || t.text == ";")) break;
        }
        next();
    }
    end_tok = pos_;
    if (end_tok == begin_tok) fail("initializer", "empty initializer");
    return std::string(text_.substr(toks_[begin_tok].begin, toks_[end_tok - 1].end - toks_[begin_tok].begin));
}

void Parser::add_function(CFunctionDecl f, bool definition) { p_funcs_.emplace_back(std::move(f), definition); }

void Parser::add_global(CGlobalDecl g) { p_globals_.push_back(std::move(g)); }

std::string Parser::original_span(size_t first_tok, size_t last_tok) const {
    if (!unit_ || unit_->line_map.empty() || !loader_ || !*loader_) return {};
    const auto& a = unit_->line_map[std::min(toks_[first_tok].line, unit_->line_map.size() - 1)];
    const auto& b = unit_->line_map[std::min(toks_[last_tok].line, unit_->line_map.size() - 1)];
    if (!a || !b || a->file != b->file || b->line < a->line) return {};
    auto content = (*loader_)(a->file);
    if (!content) return {};
    auto lines = text::split_lines(*content);
    if (static_cast<size_t>(b->line) > lines.size()) return {};
    std::vector<std::string> span(lines.begin() + (a->line - 1), lines.begin() + b->line);
    return text::join(span, "\n");
}

std::vector<std::string> Parser::idents_in(size_t begin, size_t end, bool*) {
    std::vector<std::string> out;
    for (size_t i = begin; i < end; ++i) {
        const Token& t = toks_[i];
        if (t.kind != Tok::Ident || c_keywords().contains(t.text)) continue;
        if (i > 0 && (toks_[i - 1].text == "." || toks_[i - 1].text == "->")) continue;
        if (i > 0 && (toks_[i - 1].text == "struct" || toks_[i - 1].text == "union" || toks_[i - 1].text == "enum"))
            continue;
        if (typedef_ref(t.text) || t.text.rfind("__builtin_", 0) == 0) continue;
        if (std::find(out.begin(), out.end(), t.text) == out.end()) out.push_back(t.text);
    }
    return out;
}

void Parser::harvest_body(CFunctionDecl& f, size_t open, size_t close, const std::set<std::string>& params) {
    std::set<std::string> locals = params;
    auto push_unique = [](std::vector<std::string>& v, const std::string& s) {
        if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
    };

    // Pass 1: local declarations at statement starts.
    size_t saved = pos_;
    for (size_t i = open + 1; i < close; ++i) {
        const std::string& prev = toks_[i - 1].text;
        bool stmt_start = toks_[i - 1].kind == Tok::Punct && (prev == "{" || prev == "}" || prev == ";");
        bool for_init = prev == "(" && i >= 2 && toks_[i - 2].text == "for";
        if (!(stmt_start || for_init)) continue;
        const Token& t = toks_[i];
        if (t.kind != Tok::Ident) continue;
        bool storage = t.text == "static" || t.text == "extern" || t.text == "register" || t.text == "typedef";
        pos_ = i;
        bool candidate = storage || starts_type() ||
                         (!c_keywords().contains(t.text) && !locals.contains(t.text) &&
                          ((peek(1).kind == Tok::Ident && !c_keywords().contains(peek(1).text)) ||
                           (peek(1).text == "*" && peek(2).kind == Tok::Ident && peek(3).text != ")" &&
                            binary_prec(peek(3).text) < 0)));
        if (!candidate) continue;
        size_t types_before = p_types_.size(), enums_before = p_enums_.size(), td_before = p_typedefs_.size();
        auto refs_before = p_tag_refs_.size();
        try {
            DeclSpec spec = parse_decl_specs();
            if (!spec.type) continue;
            if (spec.type->kind == CType::Kind::Typedef) push_unique(f.type_refs, spec.type->name);
            if (spec.type->kind == CType::Kind::Record || spec.type->kind == CType::Kind::Union ||
                spec.type->kind == CType::Kind::Enum)
                push_unique(f.type_refs, spec.type->name);
            if (at(";")) continue;
            for (;;) {
                Declarator d = parse_declarator(spec.type, false);
                locals.insert(d.name);
                if (spec.storage == DeclSpec::Sc::Typedef) p_typedefs_.emplace_back(d.name, CType::named(CType::Kind::Typedef, d.name));
                skip_asm_labels();
                if (accept("=")) {
                    size_t b, e;
                    capture_initializer(b, e);
                }
                if (!accept(",")) break;
            }
        } catch (const ParseFailure&) {
            p_types_.resize(types_before);
            p_enums_.resize(enums_before);
            p_typedefs_.resize(td_before);
            p_tag_refs_.resize(refs_before);
        } catch (const NotConstant&) {
        }
    }
    pos_ = saved;

    // Pass 2: references.
    for (size_t i = open + 1; i < close; ++i) {
        const Token& t = toks_[i];
        if (t.kind != Tok::Ident || c_keywords().contains(t.text)) continue;
        const std::string& prev = toks_[i - 1].text;
        const std::string& nxt = toks_[i + 1].text;
        if (prev == "." || prev == "->") continue;
        if (prev == "struct" || prev == "union" || prev == "enum") {
            push_unique(f.type_refs, t.text);
            continue;
        }
        if (prev == "goto") continue;
        if (nxt == ":" && (prev == ";" || prev == "{" || prev == "}")) continue;
        if (locals.contains(t.text)) continue;
        if (typedef_ref(t.text)) {
            push_unique(f.type_refs, t.text);
            continue;
        }
        if (t.text.rfind("__builtin_", 0) == 0 || t.text == "__func__" || t.text == "__FUNCTION__" ||
            t.text == "__PRETTY_FUNCTION__")
            continue;
        bool is_global = gl_index_.contains(t.text);
        for (const auto& g : p_globals_)
            if (g.name == t.text) is_global = true;
        bool is_function = fn_index_.contains(t.text) || t.text == f.name;
        for (const auto& [pf, def] : p_funcs_)
            if (pf.name == t.text) is_function = true;
        if (nxt == "(" && !is_global) {
            push_unique(f.calls, t.text);
            p_referenced_.insert(t.text);
            continue;
        }
        if (is_function) {
            p_address_taken_.insert(t.text);
            push_unique(f.value_refs, t.text);
        } else if (is_global || enumerator(t.text)) {
            push_unique(f.value_refs, t.text);
        } else {
            push_unique(f.value_refs, t.text);
        }
        p_referenced_.insert(t.text);
    }
}

void Parser::handle_function_definition(const Declarator& d, const DeclSpec& spec, size_t start) {
    size_t open = pos_, close = match_close(open);
    if (toks_[close].text != "}") fail("function definition", "unterminated body of " + d.name);
    CFunctionDecl f;
    f.name = d.name;
    f.return_ctype = d.type->inner;
    f.return_type = c::to_c_string(*f.return_ctype);
    f.variadic = d.type->variadic;
    f.storage = spec.storage == DeclSpec::Sc::Static ? Storage::Internal : Storage::External;
    f.source_loc = loc_of(d.name_token);
    std::set<std::string> params;
    for (const auto& p : d.type->params) {
        CParamDecl pd;
        if (!p.name.empty()) pd.name = p.name, params.insert(p.name);
        pd.type = p.type;
        pd.c_type_text = c::to_c_string(*p.type);
        f.params.push_back(std::move(pd));
    }
    // Inline definitions in system headers stay declarations of the library.
    f.defined_here = !f.source_loc.system;
    if (f.defined_here) {
        harvest_body(f, open, close, params);
        f.preprocessed_text = std::string(text_.substr(toks_[start].begin, toks_[close].end - toks_[start].begin));
        f.source_text = original_span(start, close);
        if (f.source_text.empty()) f.source_text = f.preprocessed_text;
    }
    pos_ = close + 1;
    add_function(std::move(f), true);
}

void Parser::parse_external_declaration() {
    size_t start = pos_;
    if (accept(";")) return;
    if (peek().text == "_Static_assert") {
        next();
        skip_balanced();
        expect(";", "_Static_assert");
        return;
    }
    if (peek().kind == Tok::Ident && is_asm_word(peek().text)) {
        next();
        skip_balanced();
        expect(";", "asm");
        return;
    }
    DeclSpec spec = parse_decl_specs();
    if (!spec.type) {
        if (peek().kind == Tok::Ident && peek(1).text == "(")
            fail("function definition", "implicit int return type is not supported");
        fail("declaration", "expected a declaration before '" + peek().text + "'");
    }
    if (accept(";")) return;  // tag declaration or definition only

    bool first = true;
    for (;;) {
        Declarator d = parse_declarator(spec.type, false);
        skip_asm_labels();
        CTypePtr resolved = current_lookup().resolve(d.type);
        bool is_function = resolved && resolved->kind == CType::Kind::Function;

        if (spec.storage == DeclSpec::Sc::Typedef) {
            if (!typedef_ref(d.name)) {
                CTypeDef alias;
                alias.name = d.name;
                alias.kind = CTypeDef::Kind::Alias;
                alias.aliased = d.type;
                alias.source_loc = loc_of(d.name_token);
                p_types_.push_back(std::move(alias));
                p_typedefs_.emplace_back(d.name, CType::named(CType::Kind::Typedef, d.name));
            }
        } else if (is_function) {
            if (first && at("{")) {
                if (d.type->kind != CType::Kind::Function)
                    fail("function definition", "definition through a function typedef");
                handle_function_definition(d, spec, start);
                return;
            }
            CFunctionDecl f;
            f.name = d.name;
            f.return_ctype = resolved->inner;
            f.return_type = c::to_c_string(*f.return_ctype);
            f.variadic = resolved->variadic;
            f.storage = spec.storage == DeclSpec::Sc::Static ? Storage::Internal : Storage::External;
            f.source_loc = loc_of(d.name_token);
            for (const auto& p : resolved->params) {
                CParamDecl pd;
                if (!p.name.empty()) pd.name = p.name;
                pd.type = p.type;
                pd.c_type_text = c::to_c_string(*p.type);
                f.params.push_back(std::move(pd));
            }
            add_function(std::move(f), false);
        } else {
            CGlobalDecl g;
            g.name = d.name;
            g.type = d.type;
            g.storage = spec.storage == DeclSpec::Sc::Static ? Storage::Internal : Storage::External;
            g.source_loc = loc_of(d.name_token);
            g.defined_here = spec.storage != DeclSpec::Sc::Extern && !g.source_loc.system;
            CTypePtr top = resolved;
            while (top && top->kind == CType::Kind::Array) top = current_lookup().resolve(top->inner);
            g.is_mutable = !(top && top->is_const);
            if (accept("=")) {
                size_t b, e;
                g.initializer_text = capture_initializer(b, e);
                g.defined_here = !g.source_loc.system;
                g.initializer_refs = idents_in(b, e, nullptr);
                for (const auto& r : g.initializer_refs) {
                    p_referenced_.insert(r);
                    bool fn = fn_index_.contains(r);
                    for (const auto& [pf, def] : p_funcs_)
                        if (pf.name == r) fn = true;
                    if (fn) p_address_taken_.insert(r);
                }
                // `int a[] = {1, 2, 3}` and `char s[] = "abc"` complete the array type.
                if (g.type->kind == CType::Kind::Array && !g.type->array_size) {
                    std::optional<std::uint64_t> n;
                    if (toks_[b].text == "{" && toks_[e - 1].text == "}") {
                        std::uint64_t count = 0;
                        int depth = 0;
                        bool designated = false, any = false;
                        for (size_t i = b + 1; i + 1 < e; ++i) {
                            const auto& tt = toks_[i].text;
                            if (toks_[i].kind == Tok::Punct && (tt == "(" || tt == "[" || tt == "{")) {
                                if (depth == 0 && tt == "[") designated = true;
                                ++depth;
                            } else if (toks_[i].kind == Tok::Punct && (tt == ")" || tt == "]" || tt == "}")) {
                                --depth;
                            } else if (depth == 0 && tt == ",") {
                                ++count;
                                any = false;
                                continue;
                            }
                            any = true;
                        }
                        if (any) ++count;
                        if (!designated) n = count;
                    } else if (e == b + 1 && toks_[b].kind == Tok::String) {
                        std::string_view lit = toks_[b].text;
                        std::uint64_t len = 0;
                        for (size_t i = lit.find('"') + 1; i + 1 < lit.size(); ++i, ++len) {
                            if (lit[i] != '\\') continue;
                            ++i;
                            if (lit[i] == 'x') {
                                while (i + 1 < lit.size() - 1 && std::isxdigit(static_cast<unsigned char>(lit[i + 1]))) ++i;
                            } else if (lit[i] >= '0' && lit[i] <= '7') {
                                for (int k = 0; k < 2 && lit[i + 1] >= '0' && lit[i + 1] <= '7'; ++k) ++i;
                            }
                        }
                        n = len + 1;
                    }
                    if (n) g.type = CType::array_of(g.type->inner, n);
                }
            }
            g.c_type_text = c::to_c_string(*g.type);
            add_global(std::move(g));
        }
        first = false;
        if (accept(",")) continue;
        expect(";", "declaration");
        return;
    }
}

// --- commit / rollback -------------------------------------------------------

void Parser::begin_decl() { saved_counters_ = anon_counters_; }

void Parser::rollback() {
    anon_counters_ = saved_counters_;
    clear_pending();
}

void Parser::clear_pending() {
    p_types_.clear();
    p_typedefs_.clear();
    p_enums_.clear();
    p_funcs_.clear();
    p_globals_.clear();
    p_tag_refs_.clear();
    p_unknown_types_.clear();
    p_referenced_.clear();
    p_address_taken_.clear();
}

void Parser::commit() {
    for (auto& t : p_types_) {
        const CTypeDef* existing = t.is_tag() ? lookup_.tag(t.name) : lookup_.alias(t.name);
        if (existing) {
            if (existing->opaque && !t.opaque) {
                auto it = std::find_if(types_.begin(), types_.end(), [&](const CTypeDef& d) { return &d == existing; });
                *it = std::move(t);
            }
            continue;
        }
        types_.push_back(std::move(t));
        lookup_.add(types_.back());
    }
    for (auto& [n, t] : p_typedefs_) typedefs_.emplace(n, t);
    for (auto& [n, v] : p_enums_) enums_.emplace(n, v);
    for (auto& [n, k, l] : p_tag_refs_) tag_refs_.emplace(n, std::make_pair(k, l));
    unknown_types_.insert(p_unknown_types_.begin(), p_unknown_types_.end());
    referenced_.insert(p_referenced_.begin(), p_referenced_.end());
    table_.address_taken.insert(p_address_taken_.begin(), p_address_taken_.end());

    for (auto& [f, definition] : p_funcs_) {
        auto it = fn_index_.find(f.name);
        if (it == fn_index_.end()) {
            fn_index_.emplace(f.name, table_.functions.size());
            table_.functions.push_back(std::move(f));
            continue;
        }
        CFunctionDecl& cur = table_.functions[it->second];
        bool internal = cur.storage == Storage::Internal || f.storage == Storage::Internal;
        if (definition && !cur.defined_here) {
            cur = std::move(f);
        } else if (!cur.defined_here) {
            // Prefer named parameters from a later prototype.
            for (size_t i = 0; i < cur.params.size() && i < f.params.size(); ++i)
                if (!cur.params[i].name && f.params[i].name) cur.params[i].name = f.params[i].name;
        } else if (definition) {
            table_.notes.push_back("duplicate definition of " + f.name + " ignored");
        }
        if (internal) cur.storage = Storage::Internal;
    }
    for (auto& g : p_globals_) {
        auto it = gl_index_.find(g.name);
        if (it == gl_index_.end()) {
            gl_index_.emplace(g.name, table_.globals.size());
            table_.globals.push_back(std::move(g));
            continue;
        }
        CGlobalDecl& cur = table_.globals[it->second];
        bool internal = cur.storage == Storage::Internal || g.storage == Storage::Internal;
        if ((g.defined_here && !cur.defined_here) || (g.initializer_text && !cur.initializer_text)) {
            cur = std::move(g);
        }
        if (internal) cur.storage = Storage::Internal;
    }
    clear_pending();
}

void Parser::finish() {
    for (auto& t : types_) table_.types.push_back(std::move(t));
    std::set<std::string> tags;
    for (const auto& t : table_.types)
        if (t.is_tag()) tags.insert(t.name);
    for (const auto& [name, kl] : tag_refs_) {
        if (tags.contains(name)) continue;
        CTypeDef def;
        def.name = name;
        def.kind = kl.first == CType::Kind::Union ? CTypeDef::Kind::Union
                   : kl.first == CType::Kind::Enum ? CTypeDef::Kind::Enumeration
                                                   : CTypeDef::Kind::Record;
        def.opaque = true;
        def.source_loc = kl.second;
        table_.types.push_back(std::move(def));
        tags.insert(name);
    }

    std::set<std::string> defined;
    for (const auto& f : table_.functions)
        if (f.defined_here) defined.insert(f.name);
    for (const auto& g : table_.globals)
        if (g.defined_here) defined.insert(g.name);
    for (const auto& [n, v] : enums_) defined.insert(n);
    for (const auto& [n, t] : typedefs_) defined.insert(n);
    for (const auto& t : table_.types)
        if (!t.opaque) defined.insert(t.name);
    std::set<std::string> refs = referenced_;
    refs.insert(unknown_types_.begin(), unknown_types_.end());
    for (const auto& r : refs)
        if (!defined.contains(r)) table_.external_refs.insert(r);
}

SymbolTable Parser::run() {
    while (peek().kind != Tok::End) {
        size_t start = pos_;
        begin_decl();
        try {
            parse_external_declaration();
            commit();
        } catch (const ParseFailure& e) {
            rollback();
            // Resynchronize after the broken declaration.
            pos_ = start;
            int depth = 0;
            bool body = false;
            while (peek().kind != Tok::End) {
                const Token& t = next();
                if (t.kind != Tok::Punct) continue;
                if (t.text == "{") {
                    if (depth == 0 && pos_ >= 2 && toks_[pos_ - 2].text == ")") body = true;
                    ++depth;
                } else if (t.text == "}") {
                    if (--depth <= 0 && body) break;
                } else if (t.text == ";" && depth <= 0) {
                    break;
                }
            }
            if (pos_ == start) next();
            SourceLoc loc = loc_of(std::min(e.token, toks_.size() - 1));
            SourceLoc first = loc_of(start);
            if (first.system || loc.system) {
                ++table_.skipped_system;
            } else {
                table_.partial = true;
                table_.issues.push_back({e.construct, loc, e.message});
            }
        } catch (const NotConstant&) {
            rollback();
            pos_ = start;
            while (peek().kind != Tok::End && !at(";")) next();
            next();
            SourceLoc loc = loc_of(start);
            if (loc.system) {
                ++table_.skipped_system;
            } else {
                table_.partial = true;
                table_.issues.push_back({"constant expression", loc, "expression is not an integer constant"});
            }
        }
    }
    finish();
    return std::move(table_);
}

}  // namespace

SymbolTable extract_symbols(const build::PreprocessedUnit& unit, const SourceLoader& loader) {
    std::string name = unit.origin.command.source_file;
    Parser p(unit.text, &unit, name, &loader);
    return p.run();
}

SymbolTable extract_symbols_from_text(std::string_view c_text, std::string unit_name) {
    Parser p(c_text, nullptr, std::move(unit_name), nullptr);
    return p.run();
}

// ---------------------------------------------------------------------------
// AST dump adapter

SymbolTable parse_ast_dump(std::string_view dump, std::string unit_name) {
    SymbolTable table;
    table.unit = unit_name;
    CTypeDef* current = nullptr;
    std::map<std::string, size_t> fn_index;
    size_t lineno = 0;
    for (const auto& raw : text::split_lines(dump)) {
        ++lineno;
        if (text::trim(raw).empty() || raw[0] == '#') continue;
        std::vector<std::string> cols;
        size_t b = 0;
        for (size_t i = 0; i <= raw.size(); ++i) {
            if (i == raw.size() || raw[i] == '\t') {
                cols.push_back(raw.substr(b, i - b));
                b = i + 1;
            }
        }
        if (cols.size() < 3) throw Error(unit_name + ":" + std::to_string(lineno) + ": malformed AST dump record");
        SourceLoc loc{unit_name, static_cast<int>(lineno), false};
        if (cols.size() >= 4) {
            auto colon = cols[3].rfind(':');
            if (colon != std::string::npos) {
                loc.file = cols[3].substr(0, colon);
                loc.line = std::atoi(cols[3].c_str() + colon + 1);
            }
        }
        const std::string& kind = cols[0];
        const std::string& name = cols[1];
        const std::string& type = cols[2];
        auto parsed_type = [&](const std::string& spelled) -> CTypePtr {
            Parser p(spelled, nullptr, unit_name, nullptr);
            if (auto t = p.standalone_type()) return t;
            throw Error(unit_name + ":" + std::to_string(lineno) + ": cannot parse type '" + spelled + "'");
        };
        if (kind == "struct" || kind == "union" || kind == "enum") {
            CTypeDef def;
            def.name = name;
            def.kind = kind == "struct" ? CTypeDef::Kind::Record
                       : kind == "union" ? CTypeDef::Kind::Union
                                         : CTypeDef::Kind::Enumeration;
            def.source_loc = loc;
            def.opaque = type == "opaque";
            table.types.push_back(std::move(def));
            current = &table.types.back();
        } else if (kind == "field") {
            if (!current) throw Error(unit_name + ":" + std::to_string(lineno) + ": field outside a record");
            CMember m;
            m.name = name;
            m.c_type_text = type;
            m.type = parsed_type(type);
            current->members.push_back(std::move(m));
        } else if (kind == "enumerator") {
            if (!current) throw Error(unit_name + ":" + std::to_string(lineno) + ": enumerator outside an enum");
            current->enumerators.push_back({name, std::stoll(type)});
        } else if (kind == "typedef") {
            CTypeDef def;
            def.name = name;
            def.kind = CTypeDef::Kind::Alias;
            def.aliased = parsed_type(type);
            def.source_loc = loc;
            table.types.push_back(std::move(def));
            current = nullptr;
        } else if (kind == "function" || kind == "function-def") {
            CTypePtr ft = parsed_type(type);
            CFunctionDecl f;
            f.name = name;
            f.source_loc = loc;
            f.defined_here = kind == "function-def";
            if (ft->kind == CType::Kind::Function) {
                f.return_ctype = ft->inner;
                f.return_type = c::to_c_string(*ft->inner);
                f.variadic = ft->variadic;
                for (const auto& p : ft->params) {
                    CParamDecl pd;
                    if (!p.name.empty()) pd.name = p.name;
                    pd.type = p.type;
                    pd.c_type_text = c::to_c_string(*p.type);
                    f.params.push_back(std::move(pd));
                }
            } else {
                f.return_ctype = ft;
                f.return_type = type;
            }
            auto it = fn_index.find(name);
            if (it == fn_index.end()) {
                fn_index[name] = table.functions.size();
                table.functions.push_back(std::move(f));
            } else if (f.defined_here) {
                table.functions[it->second] = std::move(f);
            }
            current = nullptr;
        } else if (kind == "variable" || kind == "extern-variable" || kind == "static-variable") {
            CGlobalDecl g;
            g.name = name;
            g.c_type_text = type;
            g.type = parsed_type(type);
            g.source_loc = loc;
            g.defined_here = kind != "extern-variable";
            g.storage = kind == "static-variable" ? Storage::Internal : Storage::External;
            g.is_mutable = !g.type->is_const;
            table.globals.push_back(std::move(g));
            current = nullptr;
        } else {
            throw Error(unit_name + ":" + std::to_string(lineno) + ": unknown AST dump record kind '" + kind + "'");
        }
    }
    return table;
}

// ---------------------------------------------------------------------------
// Macro constants

std::optional<MacroConstant> parse_literal(std::string_view text_in) {
    std::string_view s = text::trim(text_in);
    MacroConstant out;
    out.literal = std::string(s);
    bool negative = false;
    if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
        negative = s[0] == '-';
        s = text::trim(s.substr(1));
    }
    if (s.empty()) return std::nullopt;
    if (s[0] == '\'' || ((s[0] == 'L' || s[0] == 'u' || s[0] == 'U') && s.size() > 1 && s[1] == '\'')) {
        size_t q = s.find('\'');
        if (s.back() != '\'' || s.size() < q + 3) return std::nullopt;
        std::string_view body = s.substr(q + 1, s.size() - q - 2);
        std::int64_t v = 0;
        if (body[0] != '\\') {
            if (body.size() != 1) return std::nullopt;
            v = static_cast<signed char>(body[0]);
        } else {
            if (body.size() < 2) return std::nullopt;
            char e = body[1];
            static const std::map<char, int> simple = {{'n', 10}, {'t', 9},  {'r', 13}, {'0', 0},   {'a', 7},
                                                       {'b', 8},  {'f', 12}, {'v', 11}, {'\\', 92}, {'\'', 39},
                                                       {'"', 34}, {'?', 63}, {'e', 27}};
            if (e == 'x') {
                v = std::stoll(std::string(body.substr(2)), nullptr, 16);
            } else if (e >= '0' && e <= '7') {
                v = std::stoll(std::string(body.substr(1)), nullptr, 8);
            } else if (simple.contains(e) && body.size() == 2) {
                v = simple.at(e);
            } else {
                return std::nullopt;
            }
            if (v > 127 && v < 256) v = static_cast<signed char>(v);
        }
        out.kind = MacroConstant::Kind::Character;
        out.int_value = negative ? -v : v;
        return out;
    }
    if (!std::isdigit(static_cast<unsigned char>(s[0]))) return std::nullopt;
    size_t end = s.size();
    while (end > 0 && (s[end - 1] == 'u' || s[end - 1] == 'U' || s[end - 1] == 'l' || s[end - 1] == 'L')) --end;
    std::string_view suffix = s.substr(end);
    std::string_view digits = s.substr(0, end);
    for (char c : suffix) {
        if (c == 'u' || c == 'U') out.is_unsigned = true;
        if (c == 'l' || c == 'L') out.is_long = true;
    }
    int base = 10;
    if (digits.size() > 1 && digits[0] == '0' && (digits[1] == 'x' || digits[1] == 'X')) {
        base = 16;
        digits = digits.substr(2);
    } else if (digits.size() > 1 && digits[0] == '0' && (digits[1] == 'b' || digits[1] == 'B')) {
        base = 2;
        digits = digits.substr(2);
    } else if (digits.size() > 1 && digits[0] == '0') {
        base = 8;
        digits = digits.substr(1);
    }
    if (digits.empty()) return std::nullopt;
    std::uint64_t v = 0;
    for (char c : digits) {
        int d;
        if (c >= '0' && c <= '9') d = c - '0';
        else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
        else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
        else return std::nullopt;  // floats, malformed
        if (d >= base) return std::nullopt;
        if (v > (std::numeric_limits<std::uint64_t>::max() - d) / base) return std::nullopt;
        v = v * base + d;
    }
    out.kind = MacroConstant::Kind::Integer;
    out.int_value = negative ? -static_cast<std::int64_t>(v) : static_cast<std::int64_t>(v);
    if (v > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) out.is_unsigned = true;
    return out;
}

namespace {

std::string strip_outer_parens(std::string s) {
    for (;;) {
        s = text::trim_copy(s);
        if (s.size() < 2 || s.front() != '(' || s.back() != ')') return s;
        int depth = 0;
        for (size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '(') ++depth;
            if (s[i] == ')' && --depth == 0 && i + 1 != s.size()) return s;
        }
        s = s.substr(1, s.size() - 2);
    }
}

std::string strip_comments(std::string_view s) {
    std::string out;
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"' || s[i] == '\'') {
            char q = s[i];
            out += s[i++];
            while (i < s.size() && s[i] != q) {
                if (s[i] == '\\' && i + 1 < s.size()) out += s[i++];
                out += s[i++];
            }
            if (i < s.size()) out += s[i];
            continue;
        }
        if (s.substr(i, 2) == "//") break;
        if (s.substr(i, 2) == "/*") {
            size_t e = s.find("*/", i + 2);
            if (e == std::string_view::npos) break;
            out += ' ';
            i = e + 1;
            continue;
        }
        out += s[i];
    }
    return out;
}

std::optional<std::string> decode_string_literal(std::string_view s) {
    if (s.size() < 2 || s.front() != '"' || s.back() != '"') return std::nullopt;
    std::string out;
    for (size_t i = 1; i + 1 < s.size(); ++i) {
        char c = s[i];
        if (c == '"') return std::nullopt;  // concatenation or stray quote
        if (c != '\\') {
            out += c;
            continue;
        }
        char e = s[++i];
        switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case '0': out += '\0'; break;
        case '\\': out += '\\'; break;
        case '"': out += '"'; break;
        case '\'': out += '\''; break;
        default: return std::nullopt;
        }
    }
    return out;
}

std::optional<MacroConstant> classify(const std::string& body, std::string& reason) {
    std::string v = strip_outer_parens(body);
    if (v.empty()) {
        reason = "empty replacement";
        return std::nullopt;
    }
    if (v.front() == '"') {
        auto s = decode_string_literal(v);
        if (!s) {
            reason = "string literal with unsupported escapes";
            return std::nullopt;
        }
        MacroConstant m;
        m.kind = MacroConstant::Kind::String;
        m.literal = v;
        m.string_value = *s;
        return m;
    }
    if (auto lit = parse_literal(v)) return lit;
    bool floating = !v.empty() && (std::isdigit(static_cast<unsigned char>(v[0])) || v[0] == '.' || v[0] == '-') &&
                    (v.find('.') != std::string::npos ||
                     ((v.find('e') != std::string::npos || v.find('E') != std::string::npos) &&
                      v.find('x') == std::string::npos && v.find('X') == std::string::npos));
    reason = floating ? "floating-point literal" : "not a single literal";
    return std::nullopt;
}

}  // namespace

MacroScan collect_macro_constants(const build::PreprocessedUnit& unit, std::string_view original_source,
                                  std::string source_name) {
    if (source_name.empty()) source_name = unit.origin.command.source_file;
    MacroScan scan;
    std::set<std::string> seen;
    auto lines = text::split_lines(original_source);
    for (size_t i = 0; i < lines.size(); ++i) {
        size_t first_line = i + 1;
        std::string line = lines[i];
        while (!line.empty() && line.back() == '\\' && i + 1 < lines.size()) {
            line.pop_back();
            line += " " + lines[++i];
        }
        std::string_view l = text::trim(line);
        if (l.empty() || l[0] != '#') continue;
        l = text::trim(l.substr(1));
        if (l.substr(0, 6) != "define" || l.size() < 7 || !std::isspace(static_cast<unsigned char>(l[6]))) continue;
        l = text::trim(l.substr(6));
        size_t n = 0;
        while (n < l.size() && text::is_identifier_char(l[n])) ++n;
        std::string name(l.substr(0, n));
        if (name.empty() || !text::is_identifier(name)) continue;
        if (n < l.size() && l[n] == '(') {
            scan.skipped.push_back({name, "function-like macro"});
            continue;
        }
        std::string body = text::trim_copy(strip_comments(l.substr(n)));
        std::string reason;
        auto m = classify(body, reason);
        if (!m) {
            scan.skipped.push_back({name, reason});
            continue;
        }
        if (!unit.active_macros.empty()) {
            auto it = unit.active_macros.find(name);
            if (it == unit.active_macros.end()) {
                scan.skipped.push_back({name, "not defined in this build configuration"});
                continue;
            }
            std::string build_body = text::trim_copy(it->second);
            if (build_body != body) {
                auto bm = classify(build_body, reason);
                if (!bm) {
                    scan.skipped.push_back({name, "build value: " + reason});
                    continue;
                }
                m = bm;
            }
        }
        if (seen.contains(name)) continue;
        seen.insert(name);
        m->name = name;
        m->source_loc = {source_name, static_cast<int>(first_line), false};
        scan.constants.push_back(std::move(*m));
    }
    return scan;
}

}  // namespace rsmig::symbols
