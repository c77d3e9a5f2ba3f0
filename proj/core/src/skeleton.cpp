#include "rsmig/skeleton.hpp"

#include "rsmig/support/text.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <climits>
#include <regex>

namespace rsmig::skeleton {

using c::CType;
using c::CTypeDef;
using c::CTypePtr;
using K = CType::Kind;

namespace {

const std::set<std::string, std::less<>>& rust_keywords() {
    static const std::set<std::string, std::less<>> k = {
        "as",    "break", "const",  "continue", "crate",  "else",     "enum",    "extern",  "false",   "fn",
        "for",   "if",    "impl",   "in",       "let",    "loop",     "match",   "mod",     "move",    "mut",
        "pub",   "ref",   "return", "self",     "Self",   "static",   "struct",  "super",   "trait",   "true",
        "type",  "unsafe", "use",   "where",    "while",  "async",    "await",   "dyn",     "abstract", "become",
        "box",   "do",    "final",  "macro",    "override", "priv",   "typeof",  "unsized", "virtual", "yield",
        "try"};
    return k;
}

bool cannot_be_raw(std::string_view s) {
    return s == "self" || s == "Self" || s == "super" || s == "crate" || s == "_";
}

bool is_rust_primitive(std::string_view s) {
    static const std::set<std::string, std::less<>> p = {"i8",  "i16", "i32",  "i64",  "i128", "isize", "u8",
                                                         "u16", "u32", "u64",  "u128", "usize", "f32",  "f64",
                                                         "bool", "char", "str"};
    return p.contains(s);
}

std::string sanitize_module(std::string_view raw) {
    std::string s;
    for (char c : raw) s += text::is_identifier_char(c) ? static_cast<char>(std::tolower(static_cast<unsigned char>(c))) : '_';
    if (s.empty()) s = "_";
    if (std::isdigit(static_cast<unsigned char>(s[0]))) s = "_" + s;
    if (s == "_" || rust_keywords().contains(s)) s += "_";
    return s;
}

std::string generic_string(const fs::path& p) { return p.generic_string(); }

}  // namespace

std::string path_string(const std::vector<std::string>& segments) {
    std::string s = "crate";
    for (const auto& seg : segments) s += "::" + seg;
    return s;
}

std::string rust_ident(std::string_view c_name) {
    std::string s(c_name);
    if (cannot_be_raw(s)) return s + "_";
    if (rust_keywords().contains(s)) return "r#" + s;
    return s;
}

namespace {

/// Identifier without a raw prefix, for names built from it (`set_x`, `x_ptr`).
std::string plain_ident(std::string_view c_name) {
    std::string s(c_name);
    return cannot_be_raw(s) ? s + "_" : s;
}

}  // namespace

std::string begin_marker(std::string_view q) { return fmt::format("// rsmig:begin {}", q); }
std::string end_marker(std::string_view q) { return fmt::format("// rsmig:end {}", q); }

const char* visibility_keyword(Visibility v) {
    switch (v) {
    case Visibility::Public: return "pub ";
    case Visibility::Crate: return "pub(crate) ";
    case Visibility::Private: return "";
    }
    return "";
}

// ---------------------------------------------------------------------------
// Module tree

const ModuleInfo* ModuleTree::by_c_path(std::string_view c_path) const {
    for (const auto& m : modules)
        if (m.c_path == c_path) return &m;
    return nullptr;
}

const ModuleInfo* ModuleTree::by_module(std::string_view module_path) const {
    for (const auto& m : modules)
        if (m.path() == module_path) return &m;
    return nullptr;
}

std::map<std::vector<std::string>, std::vector<std::string>> ModuleTree::children() const {
    std::map<std::vector<std::string>, std::vector<std::string>> out;
    for (const auto& m : modules) {
        for (size_t depth = 0; depth < m.segments.size(); ++depth) {
            std::vector<std::string> parent(m.segments.begin(), m.segments.begin() + depth);
            auto& kids = out[parent];
            if (std::find(kids.begin(), kids.end(), m.segments[depth]) == kids.end()) kids.push_back(m.segments[depth]);
        }
    }
    for (auto& [_, kids] : out) std::sort(kids.begin(), kids.end());
    return out;
}

ModuleTree mirror_module_tree(const fs::path& root, const std::vector<fs::path>& sources, const MirrorOptions& options) {
    if (sources.empty()) throw SkeletonError("empty project: no C source files under " + root.string());
    fs::path base = root.lexically_normal();
    std::vector<std::vector<std::string>> rel;
    std::set<std::string> seen;
    for (const auto& s : sources) {
        fs::path abs = (s.is_absolute() ? s : base / s).lexically_normal();
        fs::path r = abs.lexically_relative(base);
        std::string rs = generic_string(r);
        if (r.empty() || rs.starts_with("..")) throw SkeletonError("source file outside the project root: " + abs.string());
        if (!seen.insert(rs).second) continue;
        std::vector<std::string> parts;
        for (const auto& p : r) parts.push_back(p.string());
        rel.push_back(parts);
    }
    std::sort(rel.begin(), rel.end());

    size_t strip = 0;
    if (options.flatten_root) {
        // Common directory prefix (never the file name itself).
        strip = rel.front().size() - 1;
        for (const auto& r : rel) {
            size_t n = 0;
            while (n < strip && n + 1 < r.size() && r[n] == rel.front()[n]) ++n;
            strip = std::min(strip, n);
        }
    }

    ModuleTree tree;
    tree.crate_name = options.crate_name;

    // Resolve names level by level: siblings (directories and files) share a
    // namespace; ties are broken by the original name.
    struct Node {
        std::string original;
        bool is_dir = false;
        std::map<std::string, Node> kids;  // keyed by original name
        std::string name;
    };
    Node top;
    top.is_dir = true;
    for (const auto& r : rel) {
        Node* cur = &top;
        for (size_t i = strip; i < r.size(); ++i) {
            bool dir = i + 1 < r.size();
            std::string key = r[i];
            auto& n = cur->kids[key];
            n.original = key;
            n.is_dir = n.is_dir || dir;
            cur = &n;
        }
    }
    std::function<void(Node&, const std::string&, bool)> assign = [&](Node& n, const std::string& where, bool at_root) {
        std::map<std::string, int> used;
        if (at_root) {
            used["lib"] = 1;
            used["main"] = 1;
            used["shared"] = 1;
        }
        for (auto& [key, kid] : n.kids) {
            std::string stem = kid.is_dir ? key : fs::path(key).stem().string();
            std::string want = sanitize_module(stem);
            std::string name = want;
            if (used.contains(want)) {
                int k = std::max(used[want], 1);
                while (used.contains(want + "_" + std::to_string(k))) ++k;
                name = want + "_" + std::to_string(k);
                used[want] = k + 1;
                tree.collisions.push_back(fmt::format("{}{} -> {} (sanitized name `{}` already taken)", where, key, name, want));
            } else {
                used[want] = 1;
            }
            used[name] = std::max(used[name], 1);
            kid.name = name;
            if (kid.is_dir) assign(kid, where + key + "/", false);
        }
    };
    assign(top, "", true);

    for (const auto& r : rel) {
        ModuleInfo m;
        std::vector<std::string> c_parts(r.begin(), r.end());
        m.c_path = text::join(c_parts, "/");
        Node* cur = &top;
        for (size_t i = strip; i < r.size(); ++i) {
            cur = &cur->kids[r[i]];
            m.segments.push_back(cur->name);
        }
        m.rust_file = "src/" + text::join(m.segments, "/") + ".rs";
        tree.modules.push_back(std::move(m));
    }
    // A module that is also a directory keeps its items in `<dir>/mod.rs`.
    std::set<std::vector<std::string>> dirs;
    for (const auto& [parent, _] : tree.children()) dirs.insert(parent);
    for (auto& m : tree.modules)
        if (dirs.contains(m.segments)) m.rust_file = "src/" + text::join(m.segments, "/") + "/mod.rs";
    std::sort(tree.modules.begin(), tree.modules.end(),
              [](const ModuleInfo& a, const ModuleInfo& b) { return a.c_path < b.c_path; });
    return tree;
}

// ---------------------------------------------------------------------------
// Type lowering

namespace {

std::optional<std::string> builtin_rust(const std::string& n) {
    static const std::map<std::string, std::string, std::less<>> m = {
        {"char", "c_char"},
        {"signed char", "i8"},
        {"unsigned char", "u8"},
        {"_Bool", "bool"},
        {"short", "i16"},
        {"unsigned short", "u16"},
        {"int", "i32"},
        {"unsigned int", "u32"},
        {"long", "i64"},
        {"unsigned long", "u64"},
        {"long long", "i64"},
        {"unsigned long long", "u64"},
        {"__int128", "i128"},
        {"unsigned __int128", "u128"},
        {"float", "f32"},
        {"double", "f64"},
        {"_Float32", "f32"},
        {"_Float64", "f64"},
        {"_Float32x", "f64"},
        {"_Float16", "u16"},
    };
    auto it = m.find(n);
    if (it == m.end()) return std::nullopt;
    return it->second;
}

bool is_long_double(const std::string& n) {
    return n == "long double" || n == "_Float64x" || n == "_Float128" || n == "__float128";
}

std::optional<std::string> system_alias_rust(std::string_view n) {
    if (n == "size_t" || n == "uintptr_t") return "usize";
    if (n == "ssize_t" || n == "ptrdiff_t" || n == "intptr_t") return "isize";
    return std::nullopt;
}

}  // namespace

std::string enum_repr(const CTypeDef& e) {
    std::int64_t lo = 0, hi = 0;
    for (const auto& x : e.enumerators) {
        lo = std::min(lo, x.value);
        hi = std::max(hi, x.value);
    }
    if (e.packed) {
        if (lo >= 0 && hi <= 255) return "u8";
        if (lo >= -128 && hi <= 127) return "i8";
        if (lo >= 0 && hi <= 65535) return "u16";
        if (lo >= -32768 && hi <= 32767) return "i16";
    }
    if (lo >= 0 && static_cast<std::uint64_t>(hi) <= UINT32_MAX) return "u32";
    if (lo >= INT32_MIN && hi <= INT32_MAX) return "i32";
    return lo >= 0 ? "u64" : "i64";
}

TypeEnv::TypeEnv(const std::vector<CTypeDef>& types) {
    for (const auto& t : types) add(t);
}

void TypeEnv::add(const CTypeDef& def) {
    defs_.push_back(def);
    lookup_.add(defs_.back());
}

std::string TypeEnv::tag_name(std::string_view tag) const { return rust_ident(tag); }

std::string TypeEnv::alias_name(const CTypeDef& alias) const {
    // A typedef that re-uses a tag name for a different type cannot share
    // the Rust type namespace with it.
    if (lookup_.tag(alias.name) && !c::is_identity_alias(alias)) return rust_ident(alias.name + "_t");
    return rust_ident(alias.name);
}

bool TypeEnv::is_inlined_alias(const CTypeDef& def) const {
    if (def.kind != CTypeDef::Kind::Alias || !def.aliased) return true;
    if (c::is_identity_alias(def) || def.source_loc.system || is_rust_primitive(def.name)) return true;
    auto r = lookup_.resolve(def.aliased);
    return r->kind == K::Function;
}

std::string TypeEnv::hole(const std::string& name, const TypePolicy& policy, const std::string& where, Pos pos) const {
    if (policy.holes == HolePolicy::Strict)
        throw SkeletonError(fmt::format("unresolved type `{}` in {}", name, where));
    if (pos == Pos::Pointee) return "c_void";
    holes_.insert(name);
    opaque_used_.emplace(rust_ident(name), Opaque{});
    return rust_ident(name);
}

std::string TypeEnv::fn_pointer(const CType& fn, const TypePolicy& policy, const std::string& where) const {
    std::vector<std::string> ps;
    for (const auto& p : fn.params) ps.push_back(lower_impl(p.type, policy, where, Pos::Param));
    if (fn.variadic) ps.push_back("...");
    return fmt::format("::core::option::Option<unsafe extern \"C\" fn({}){}>", text::join(ps, ", "),
                       lower_return(fn.inner, policy, where));
}

std::string TypeEnv::lower_impl(const CTypePtr& t, const TypePolicy& policy, const std::string& where, Pos pos) const {
    if (!t) throw SkeletonError("missing type in " + where);
    switch (t->kind) {
    case K::Void: return pos == Pos::Pointee ? "c_void" : "()";
    case K::Builtin: {
        if (t->name == "__builtin_va_list") {
            va_list_used_ = true;
            return pos == Pos::Param ? "*mut __builtin_va_list" : "__builtin_va_list";
        }
        if (is_long_double(t->name)) {
            long_double_used_ = true;
            return "c_longdouble";
        }
        if (auto r = builtin_rust(t->name)) return *r;
        return hole(t->name, policy, where, pos);
    }
    case K::Typedef: {
        const CTypeDef* def = lookup_.alias(t->name);
        if (auto sys = system_alias_rust(t->name); sys && (!def || def->source_loc.system)) return *sys;
        if (!def || !def->aliased) return hole(t->name, policy, where, pos);
        if (is_inlined_alias(*def) || pos == Pos::Param) {
            auto r = lookup_.resolve(t);
            if (pos == Pos::Param && (r->kind == K::Array || r->kind == K::Function))
                return lower_impl(r, policy, where, pos);
            if (is_inlined_alias(*def))
                return lower_impl(c::with_const(def->aliased, t->is_const || def->aliased->is_const), policy, where, pos);
        }
        return alias_name(*def);
    }
    case K::Record:
    case K::Union: {
        const CTypeDef* def = lookup_.tag(t->name);
        if (def && def->source_loc.system) {
            Opaque o;
            if (!def->opaque) o.layout = c::layout_of(*t, lookup_);
            opaque_used_.emplace(tag_name(t->name), o);
        } else if ((!def || def->opaque) && pos != Pos::Pointee) {
            return hole((t->kind == K::Record ? "struct " : "union ") + t->name, policy, where, pos);
        }
        return tag_name(t->name);
    }
    case K::Enum: {
        const CTypeDef* def = lookup_.tag(t->name);
        if (!def || def->opaque) return "u32";
        if (def->source_loc.system) return enum_repr(*def);
        return tag_name(t->name);
    }
    case K::Pointer: {
        auto r = lookup_.resolve(t->inner);
        if (r && r->kind == K::Function) return fn_pointer(*r, policy, where);
        bool is_const = (t->inner && t->inner->is_const) || (r && r->is_const);
        std::string inner = lower_impl(t->inner, policy, where, Pos::Pointee);
        if (inner == "()") inner = "c_void";
        return (is_const ? "*const " : "*mut ") + inner;
    }
    case K::Array: {
        if (pos == Pos::Param) {
            bool is_const = t->inner && t->inner->is_const;
            return (is_const ? "*const " : "*mut ") + lower_impl(t->inner, policy, where, Pos::Pointee);
        }
        return fmt::format("[{}; {}]", lower_impl(t->inner, policy, where, Pos::Member), t->array_size.value_or(0));
    }
    case K::Function: return fn_pointer(*t, policy, where);
    }
    return "()";
}

std::string TypeEnv::lower(const CTypePtr& t, const TypePolicy& policy, const std::string& where) const {
    return lower_impl(t, policy, where, Pos::Value);
}

std::string TypeEnv::lower_param(const CTypePtr& t, const TypePolicy& policy, const std::string& where) const {
    return lower_impl(t, policy, where, Pos::Param);
}

std::string TypeEnv::lower_return(const CTypePtr& t, const TypePolicy& policy, const std::string& where) const {
    if (!t || t->kind == K::Void) return {};
    auto r = lookup_.resolve(t);
    if (r->kind == K::Void) return {};
    return " -> " + lower_impl(t, policy, where, Pos::Value);
}

bool TypeEnv::is_sync(const CTypePtr& t) const {
    std::function<bool(const CTypePtr&, int)> walk = [&](const CTypePtr& x, int depth) -> bool {
        if (!x || depth > 32) return false;
        auto r = lookup_.resolve(x);
        switch (r->kind) {
        case K::Void:
        case K::Builtin:
        case K::Enum: return true;
        case K::Typedef: return false;
        case K::Pointer: {
            auto in = lookup_.resolve(r->inner);
            return in && in->kind == K::Function;
        }
        case K::Array: return walk(r->inner, depth + 1);
        case K::Function: return true;
        case K::Record:
        case K::Union: {
            const CTypeDef* d = lookup_.tag(r->name);
            if (!d || d->opaque) return false;
            for (const auto& m : d->members)
                if (!walk(m.type, depth + 1)) return false;
            return true;
        }
        }
        return false;
    };
    return walk(t, 0);
}

namespace {

struct IntInfo {
    int bits = 32;
    bool is_signed = true;
    bool is_bool = false;
};

std::optional<IntInfo> int_info(const CTypePtr& t, const c::TypeLookup& lookup) {
    auto r = lookup.resolve(t);
    if (!r) return std::nullopt;
    if (r->kind == K::Enum) {
        const CTypeDef* d = lookup.tag(r->name);
        std::string repr = d ? enum_repr(*d) : "u32";
        return IntInfo{std::stoi(repr.substr(1)), repr[0] == 'i', false};
    }
    if (r->kind != K::Builtin) return std::nullopt;
    const std::string& n = r->name;
    if (n == "_Bool") return IntInfo{8, false, true};
    if (!builtin_rust(n) || n == "float" || n == "double" || n.starts_with("_Float")) return std::nullopt;
    auto l = c::layout_of(*r, lookup);
    if (!l) return std::nullopt;
    bool is_signed = !(n.starts_with("unsigned"));
    return IntInfo{static_cast<int>(l->size * 8), is_signed, false};
}

std::string rust_c_string(std::string_view bytes) {
    std::string out = "c\"";
    for (unsigned char ch : bytes) {
        if (ch == '"' || ch == '\\') {
            out += '\\';
            out += static_cast<char>(ch);
        } else if (ch == '\n') {
            out += "\\n";
        } else if (ch == '\t') {
            out += "\\t";
        } else if (ch >= 0x20 && ch < 0x7f) {
            out += static_cast<char>(ch);
        } else {
            out += fmt::format("\\x{:02x}", ch);
        }
    }
    return out + "\"";
}

std::string byte_string(std::string_view bytes) {
    std::string out = "b\"";
    for (unsigned char ch : bytes) {
        if (ch == '"' || ch == '\\') {
            out += '\\';
            out += static_cast<char>(ch);
        } else if (ch >= 0x20 && ch < 0x7f) {
            out += static_cast<char>(ch);
        } else {
            out += fmt::format("\\x{:02x}", ch);
        }
    }
    return out + "\"";
}

/// Integer literal for a value stored into an integer of the given shape;
/// out-of-range values wrap the way the C conversion would.
std::string int_value(std::int64_t v, const IntInfo& info, const std::string& rust_type) {
    if (info.is_bool) return v ? "true" : "false";
    bool fits;
    if (info.bits >= 64) fits = info.is_signed || v >= 0;
    else if (info.is_signed) fits = v >= -(std::int64_t{1} << (info.bits - 1)) && v < (std::int64_t{1} << (info.bits - 1));
    else fits = v >= 0 && v < (std::int64_t{1} << info.bits);
    if (fits) return std::to_string(v);
    return fmt::format("{}_i128 as {}", v, rust_type);
}

/// Decoded bytes of a C string literal (possibly several adjacent ones).
std::optional<std::string> decode_c_string(std::string_view init) {
    std::string out;
    size_t i = 0;
    bool any = false;
    auto skip_ws = [&] {
        while (i < init.size() && std::isspace(static_cast<unsigned char>(init[i]))) ++i;
    };
    skip_ws();
    while (i < init.size()) {
        if (init[i] != '"') return std::nullopt;
        ++i;
        any = true;
        while (i < init.size() && init[i] != '"') {
            char c = init[i++];
            if (c != '\\') {
                out += c;
                continue;
            }
            if (i >= init.size()) return std::nullopt;
            char e = init[i++];
            switch (e) {
            case 'n': out += '\n'; break;
            case 't': out += '\t'; break;
            case 'r': out += '\r'; break;
            case 'a': out += '\a'; break;
            case 'b': out += '\b'; break;
            case 'f': out += '\f'; break;
            case 'v': out += '\v'; break;
            case 'e': out += '\x1b'; break;
            case 'x': {
                int v = 0, n = 0;
                while (i < init.size() && std::isxdigit(static_cast<unsigned char>(init[i]))) {
                    v = v * 16 + (std::isdigit(static_cast<unsigned char>(init[i])) ? init[i] - '0'
                                                                                   : (std::tolower(init[i]) - 'a' + 10));
                    ++i, ++n;
                }
                if (!n) return std::nullopt;
                out += static_cast<char>(v & 0xff);
                break;
            }
            default:
                if (e >= '0' && e <= '7') {
                    int v = e - '0', n = 1;
                    while (n < 3 && i < init.size() && init[i] >= '0' && init[i] <= '7') v = v * 8 + (init[i++] - '0'), ++n;
                    out += static_cast<char>(v & 0xff);
                } else {
                    out += e;
                }
            }
        }
        if (i >= init.size()) return std::nullopt;
        ++i;
        skip_ws();
    }
    if (!any) return std::nullopt;
    return out;
}

std::string without_space(std::string_view s) {
    std::string out;
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c))) out += c;
    return out;
}

bool is_null_literal(std::string_view init) {
    static const std::set<std::string, std::less<>> nulls = {"0", "0L", "0UL", "((void*)0)", "(void*)0", "NULL", "nullptr"};
    return nulls.contains(without_space(init));
}

std::optional<std::string> float_literal(std::string_view init) {
    static const std::regex re(R"(^([-+]?)(\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)[fFlL]?$)");
    std::string s = text::trim_copy(init);
    std::smatch m;
    if (!std::regex_match(s, m, re)) return std::nullopt;
    std::string sign = m[1].str() == "-" ? "-" : "";
    std::string body = m[2].str();
    if (body[0] == '.') body = "0" + body;
    auto dot = body.find('.');
    if (dot != std::string::npos && (dot + 1 == body.size() || !std::isdigit(static_cast<unsigned char>(body[dot + 1]))))
        body.insert(dot + 1, "0");
    if (body.find_first_of(".eE") == std::string::npos) body += ".0";
    return sign + body;
}

/// Top-level comma-separated entries of `{ ... }`; nullopt when nested.
std::optional<std::vector<std::string>> brace_items(std::string_view init) {
    std::string s = text::trim_copy(init);
    if (s.size() < 2 || s.front() != '{' || s.back() != '}') return std::nullopt;
    std::string inner = s.substr(1, s.size() - 2);
    if (inner.find_first_of("{}\".") != std::string::npos) return std::nullopt;
    std::vector<std::string> items;
    std::string cur;
    for (char ch : inner) {
        if (ch == ',') {
            items.push_back(text::trim_copy(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!text::trim(cur).empty()) items.push_back(text::trim_copy(cur));
    for (const auto& it : items)
        if (it.empty()) return std::nullopt;
    return items;
}

const CTypeDef* enumerator_owner(std::string_view name, const std::deque<CTypeDef>& defs) {
    for (const auto& d : defs)
        if (d.kind == CTypeDef::Kind::Enumeration)
            for (const auto& e : d.enumerators)
                if (e.name == name) return &d;
    return nullptr;
}

}  // namespace

// ---------------------------------------------------------------------------
// Type declarations

namespace {

std::string assertion(const std::string& name, const c::Layout& l) {
    return fmt::format("const _: () = assert!(::core::mem::size_of::<{0}>() == {1} && ::core::mem::align_of::<{0}>() == {2});\n",
                       name, l.size, l.align);
}

std::string blob_record(const CTypeDef& t, const std::string& name, const c::RecordLayout& rl, const TypeEnv& env,
                        const TypePolicy& policy) {
    std::string out = "/// Layout kept as raw bytes; members are reached through accessors.\n";
    out += fmt::format("#[repr(C, align({}))]\n#[derive(Clone, Copy)]\npub struct {} {{\n    pub _bits: [u8; {}],\n}}\n",
                       rl.layout.align, name, rl.layout.size);
    out += assertion(name, rl.layout);
    std::string impl;
    for (const auto& f : rl.fields) {
        if (f.name.empty()) continue;
        std::string where = fmt::format("member `{}` of `{}`", f.name, t.name);
        std::string ty = env.lower(f.type, policy, where);
        std::string getter = rust_ident(f.name);
        std::string setter = "set_" + plain_ident(f.name);
        if (f.bit_width > 0) {
            auto info = int_info(f.type, env.lookup());
            if (!info) throw SkeletonError(fmt::format("bit-field {} has a non-integer type", where));
            std::string read = info->is_signed && !info->is_bool
                                   ? fmt::format("rsmig_bits_get_signed(&self._bits, {}, {})", f.bit_offset, f.bit_width)
                                   : fmt::format("rsmig_bits_get(&self._bits, {}, {})", f.bit_offset, f.bit_width);
            if (info->is_bool)
                impl += fmt::format("    pub fn {}(&self) -> bool {{\n        {} != 0\n    }}\n", getter, read);
            else
                impl += fmt::format("    pub fn {}(&self) -> {} {{\n        {} as {}\n    }}\n", getter, ty, read, ty);
            impl += fmt::format("    pub fn {}(&mut self, v: {}) {{\n        rsmig_bits_set(&mut self._bits, {}, {}, v as u64)\n    }}\n",
                                setter, ty, f.bit_offset, f.bit_width);
        } else {
            std::uint64_t off = f.bit_offset / 8;
            impl += fmt::format(
                "    pub fn {}(&self) -> {} {{\n        unsafe {{ ::core::ptr::read_unaligned(self._bits.as_ptr().add({}) as *const {}) }}\n    }}\n",
                getter, ty, off, ty);
            impl += fmt::format(
                "    pub fn {}(&mut self, v: {}) {{\n        unsafe {{ ::core::ptr::write_unaligned(self._bits.as_mut_ptr().add({}) as *mut {}, v) }}\n    }}\n",
                setter, ty, off, ty);
        }
    }
    if (!impl.empty()) out += fmt::format("impl {} {{\n{}}}\n", name, impl);
    return out;
}

}  // namespace

RustTypeDecl lower_type(const CTypeDef& t, const TypeEnv& env, const TypePolicy& policy) {
    RustTypeDecl d;
    d.c_name = t.name;
    d.c_kind = t.opaque ? "opaque" : c::kind_name(t.kind);
    d.layout_sensitive = t.layout_sensitive;
    d.origin_file = t.source_loc.file;
    const auto& lookup = env.lookup();

    if (t.kind == CTypeDef::Kind::Alias) {
        d.name = env.alias_name(t);
        std::string target = env.lower(t.aliased, policy, fmt::format("typedef `{}`", t.name));
        d.emitted_text = fmt::format("pub type {} = {};\n", d.name, target);
        if (auto l = c::layout_of(*CType::named(K::Typedef, t.name), lookup)) {
            d.size = l->size;
            d.align = l->align;
        }
        return d;
    }

    d.name = env.tag_name(t.name);
    if (t.kind == CTypeDef::Kind::Enumeration) {
        std::string repr = t.opaque ? "u32" : enum_repr(t);
        d.emitted_text = fmt::format("pub type {} = {};\n", d.name, repr);
        for (const auto& e : t.enumerators) {
            d.emitted_text += fmt::format("pub const {}: {} = {};\n", rust_ident(e.name), d.name, e.value);
            d.enumerators.push_back(e.name);
        }
        d.size = d.align = static_cast<std::uint64_t>(std::stoi(repr.substr(1)) / 8);
        return d;
    }

    d.repr_c = true;
    if (t.opaque) {
        d.emitted_text = fmt::format("#[repr(C)]\n#[derive(Clone, Copy)]\npub struct {} {{\n    _opaque: [u8; 0],\n}}\n", d.name);
        return d;
    }

    auto rl = c::record_layout(t, lookup);
    if (rl) {
        d.size = rl->layout.size;
        d.align = rl->layout.align;
    }
    bool has_bits = std::any_of(t.members.begin(), t.members.end(), [](const c::CMember& m) { return m.bit_width.has_value(); });
    if (has_bits) {
        if (!rl) throw SkeletonError(fmt::format("cannot compute the layout of bit-field record `{}`", t.name));
        d.emitted_text = blob_record(t, d.name, *rl, env, policy);
        return d;
    }

    size_t holes_before = env.holes().size();
    std::string body;
    for (const auto& m : t.members) {
        std::string where = fmt::format("member `{}` of `{}`", m.name, t.name);
        std::string ty;
        if (m.type && m.type->kind == K::Array && !m.type->array_size)
            ty = fmt::format("[{}; 0]", env.lower(m.type->inner, policy, where));
        else
            ty = env.lower(m.type, policy, where);
        body += fmt::format("    pub {}: {},\n", rust_ident(m.name), ty);
    }
    std::string repr = "C";
    if (t.packed) repr += ", packed";
    else if (t.aligned) repr += fmt::format(", align({})", *t.aligned);
    const char* kw = t.kind == CTypeDef::Kind::Union ? "union" : "struct";
    d.emitted_text = fmt::format("#[repr({})]\n#[derive(Clone, Copy)]\npub {} {} {{\n{}}}\n", repr, kw, d.name, body);
    bool has_hole = env.holes().size() != holes_before;
    if (rl && !has_hole && !(t.packed && t.aligned)) d.emitted_text += assertion(d.name, rl->layout);
    return d;
}

// ---------------------------------------------------------------------------
// Stubs

std::string FunctionStub::placeholder_body() const {
    std::vector<std::string> names;
    for (const auto& p : params) names.push_back(p.name);
    std::string out;
    if (names.size() == 1) out = "let _ = " + names[0] + ";\n";
    else if (!names.empty()) out = "let _ = (" + text::join(names, ", ") + ");\n";
    return out + placeholder + "!()\n";
}

std::string FunctionStub::item_text() const {
    std::string out = fmt::format("/// C: {}:{}\n", c_file, c_line);
    out += signature_text + " {\n";
    out += "    " + begin_marker(qualified_name) + "\n";
    out += text::indent_lines(placeholder_body(), "    ");
    out += "    " + end_marker(qualified_name) + "\n}\n";
    return out;
}

FunctionStub emit_stub(const symbols::CFunctionDecl& f, const TypeEnv& env, const StubContext& ctx) {
    if (!ctx.module) throw SkeletonError("emit_stub needs a module for " + f.name);
    FunctionStub s;
    s.module = ctx.module->path();
    s.name = rust_ident(f.name);
    s.c_name = f.name;
    s.qualified_name = s.module + "::" + s.name;
    s.rust_file = ctx.module->rust_file;
    s.c_file = ctx.module->c_path;
    s.c_line = f.source_loc.line;
    s.c_source = f.source_text;
    s.c_calls = f.calls;
    s.c_value_refs = f.value_refs;
    s.c_type_refs = f.type_refs;
    s.internal_linkage = f.storage == symbols::Storage::Internal;
    s.placeholder = ctx.placeholder;

    std::set<std::string> used;
    for (size_t i = 0; i < f.params.size(); ++i) {
        const auto& p = f.params[i];
        std::string where = fmt::format("parameter {} of `{}`", i + 1, f.name);
        StubParam sp;
        sp.c_type = p.c_type_text;
        sp.rust_type = env.lower_param(p.type, ctx.policy, where);
        std::string c_name = p.name.value_or("");
        std::string base = c_name.empty() ? "p" + std::to_string(i) : rust_ident(c_name);
        std::string name = base;
        auto taken = [&](const std::string& n) {
            return used.contains(n) || (ctx.reserved_values && ctx.reserved_values->contains(n)) || n == "None" ||
                   n == "Some" || n == "Ok" || n == "Err";
        };
        while (taken(name)) name += "_";
        if (!c_name.empty() && name != rust_ident(c_name)) s.renamed_params[c_name] = name;
        used.insert(name);
        sp.name = name;
        s.params.push_back(std::move(sp));
    }
    s.return_type = env.lower_return(f.return_ctype, ctx.policy, fmt::format("return type of `{}`", f.name));
    if (s.return_type.starts_with(" -> ")) s.return_type = s.return_type.substr(4);

    std::vector<std::string> ps;
    for (const auto& p : s.params) ps.push_back(p.name + ": " + p.rust_type);
    std::string ret = s.return_type.empty() ? "" : " -> " + s.return_type;

    bool cross = ctx.cross_module_refs && ctx.cross_module_refs->contains(f.name);
    bool address_taken = ctx.address_taken && ctx.address_taken->contains(f.name);
    if (s.internal_linkage) s.visibility = Visibility::Private;
    else if (cross) s.visibility = Visibility::Crate;
    else s.visibility = Visibility::Public;

    if (f.variadic) {
        // Rust cannot define C-variadic functions on stable; the definition
        // stays in C and Rust sees a declaration.
        s.abi_sensitive = true;
        s.schedulable = false;
        ps.push_back("...");
        std::string link = cannot_be_raw(f.name) ? fmt::format("#[link_name = \"{}\"] ", f.name) : "";
        s.signature_text = fmt::format("{}pub fn {}({}){};", link, s.name, text::join(ps, ", "), ret);
        return s;
    }
    s.abi_sensitive = address_taken;
    s.signature_text = fmt::format("{}{}fn {}({}){}", visibility_keyword(s.visibility),
                                   s.abi_sensitive ? "unsafe extern \"C\" " : "", s.name, text::join(ps, ", "), ret);
    return s;
}

// ---------------------------------------------------------------------------
// Globals

namespace {

struct Init {
    std::string text;
    bool todo = false;
};

Init translate_initializer(const symbols::CGlobalDecl& g, const std::string& rust_type, const TypeEnv& env) {
    const auto& lookup = env.lookup();
    auto r = lookup.resolve(g.type);
    const std::string zeroed = "unsafe { ::core::mem::zeroed() }";
    std::optional<std::string> init;
    if (g.initializer_text) init = text::trim_copy(*g.initializer_text);

    if (!init) {
        if (auto info = int_info(g.type, lookup)) return {info->is_bool ? "false" : "0"};
        if (r->kind == K::Builtin && (rust_type == "f32" || rust_type == "f64")) return {"0.0"};
        if (r->kind == K::Pointer) {
            auto in = lookup.resolve(r->inner);
            if (in && in->kind == K::Function) return {"None"};
            return {rust_type.starts_with("*const") ? "::core::ptr::null()" : "::core::ptr::null_mut()"};
        }
        return {zeroed};
    }

    std::string compact = without_space(*init);
    if (compact == "{0}" || compact == "{}") return {zeroed};

    if (auto info = int_info(g.type, lookup)) {
        if (auto lit = symbols::parse_literal(*init)) return {int_value(lit->int_value, *info, rust_type)};
        if (text::is_identifier(*init) && enumerator_owner(*init, env.defs()))
            return {fmt::format("{} as {}", rust_ident(*init), rust_type)};
        return {zeroed, true};
    }
    if (r->kind == K::Builtin && (rust_type == "f32" || rust_type == "f64")) {
        if (auto f = float_literal(*init)) return {*f};
        return {zeroed, true};
    }
    if (r->kind == K::Pointer) {
        auto in = lookup.resolve(r->inner);
        if (is_null_literal(*init)) {
            if (in && in->kind == K::Function) return {"None"};
            return {rust_type.starts_with("*const") ? "::core::ptr::null()" : "::core::ptr::null_mut()"};
        }
        if (in && in->kind == K::Builtin && in->name == "char") {
            if (auto s = decode_c_string(*init); s && s->find('\0') == std::string::npos) {
                if (rust_type.starts_with("*const")) return {rust_c_string(*s) + ".as_ptr()"};
                return {rust_c_string(*s) + ".as_ptr() as *mut c_char"};
            }
        }
        return {zeroed, true};
    }
    if (r->kind == K::Array && r->inner) {
        auto el = lookup.resolve(r->inner);
        std::uint64_t n = r->array_size.value_or(0);
        std::string el_type = env.lower(r->inner, TypePolicy{HolePolicy::Lenient}, "initializer of " + g.name);
        if (el->kind == K::Builtin && (el->name == "char" || el->name == "signed char" || el->name == "unsigned char")) {
            if (auto s = decode_c_string(*init); s && s->size() <= n) {
                return {fmt::format("{{\n    let mut a = [0 as {0}; {1}];\n    let s = {2};\n    let mut i = 0;\n"
                                    "    while i < s.len() {{\n        a[i] = s[i] as {0};\n        i += 1;\n    }}\n    a\n}}",
                                    el_type, n, byte_string(*s))};
            }
        }
        auto info = int_info(r->inner, lookup);
        auto items = brace_items(*init);
        if (info && !info->is_bool && items && items->size() <= n) {
            std::vector<std::string> vals;
            for (const auto& it : *items) {
                if (auto lit = symbols::parse_literal(it)) vals.push_back(int_value(lit->int_value, *info, el_type));
                else if (text::is_identifier(it) && enumerator_owner(it, env.defs()))
                    vals.push_back(fmt::format("{} as {}", rust_ident(it), el_type));
                else return {zeroed, true};
            }
            if (vals.size() == n) return {"[" + text::join(vals, ", ") + "]"};
            std::string out = fmt::format("{{\n    let mut a = [0 as {}; {}];\n", el_type, n);
            for (size_t i = 0; i < vals.size(); ++i) out += fmt::format("    a[{}] = {};\n", i, vals[i]);
            return {out + "    a\n}"};
        }
    }
    return {zeroed, true};
}

bool is_const_char_pointer(const CTypePtr& t, const c::TypeLookup& lookup) {
    auto r = lookup.resolve(t);
    if (!r || r->kind != K::Pointer || !r->inner) return false;
    auto in = lookup.resolve(r->inner);
    return in && in->kind == K::Builtin && in->name == "char" && (r->inner->is_const || in->is_const);
}

}  // namespace

StaticDecl lift_global(const symbols::CGlobalDecl& g, const GlobalUsage& usage, const TypeEnv& env, const TypePolicy& policy) {
    StaticDecl s;
    s.c_name = g.name;
    s.name = rust_ident(g.name);
    s.internal_linkage = g.storage == symbols::Storage::Internal;
    bool shared = !usage.defining_module.empty() &&
                  std::any_of(usage.modules.begin(), usage.modules.end(),
                              [&](const std::string& m) { return m != usage.defining_module; });
    s.module = shared ? "crate::shared" : usage.defining_module;
    std::string vis = s.internal_linkage && !shared ? "" : "pub ";
    std::string where = fmt::format("global `{}`", g.name);

    // `const char *NAME = "..."` becomes an immutable C string.
    if (is_const_char_pointer(g.type, env.lookup()) && g.initializer_text) {
        if (auto str = decode_c_string(*g.initializer_text); str && str->find('\0') == std::string::npos) {
            s.rust_type = "&CStr";
            s.is_mutable = false;
            s.emitted_text = fmt::format("{}static {}: &CStr = {};\n", vis, s.name, rust_c_string(*str));
            return s;
        }
    }

    s.rust_type = env.lower(g.type, policy, where);
    auto init = translate_initializer(g, s.rust_type, env);
    s.todo_initializer = init.todo;
    std::string out;
    if (init.todo) {
        std::string c = text::replace_all(text::trim_copy(*g.initializer_text), "\n", " ");
        if (c.size() > 120) c = c.substr(0, 117) + "...";
        out += "// TODO(rsmig): initializer not translated: " + c + "\n";
    }
    s.is_mutable = g.is_mutable || !env.is_sync(g.type);
    if (!s.is_mutable) {
        out += fmt::format("{}static {}: {} = {};\n", vis, s.name, s.rust_type, init.text);
    } else {
        s.accessor = plain_ident(g.name) + "_ptr";
        out += fmt::format("{}static mut {}: {} = {};\n", vis, s.name, s.rust_type, init.text);
        out += fmt::format("{}fn {}() -> *mut {} {{\n    ::core::ptr::addr_of_mut!({})\n}}\n", vis, s.accessor, s.rust_type,
                           s.name);
    }
    s.emitted_text = out;
    return s;
}

// ---------------------------------------------------------------------------
// Constants

ConstantDecl lower_constant(const symbols::MacroConstant& m) {
    ConstantDecl c;
    c.name = rust_ident(m.name);
    c.c_literal = m.literal;
    c.origin = m.source_loc.str();
    using MK = symbols::MacroConstant::Kind;
    std::string value;
    if (m.kind == MK::String) {
        c.rust_type = "&CStr";
        value = rust_c_string(m.string_value);
    } else if (m.kind == MK::Character) {
        c.rust_type = "c_char";
        auto v = m.int_value;
        if (v >= 0x20 && v < 0x7f && v != '\'' && v != '\\') value = fmt::format("b'{}' as c_char", static_cast<char>(v));
        else value = fmt::format("{}_i64 as c_char", v);
    } else {
        std::string lit = text::to_lower(m.literal);
        bool radix = lit.starts_with("0x") || (lit.size() > 1 && lit[0] == '0');
        std::int64_t v = m.int_value;
        if (m.is_unsigned || (radix && v > INT32_MAX && static_cast<std::uint64_t>(v) <= UINT32_MAX && !m.is_long))
            c.rust_type = static_cast<std::uint64_t>(v) <= UINT32_MAX && !m.is_long ? "u32" : "u64";
        else if (m.is_long || v > INT32_MAX || v < INT32_MIN)
            c.rust_type = radix && v < 0 ? "u64" : "i64";
        else
            c.rust_type = "i32";
        if (c.rust_type[0] == 'u' && v < 0) value = fmt::format("{}", static_cast<std::uint64_t>(v));
        else if (lit.starts_with("0x")) value = fmt::format("{:#x}", static_cast<std::uint64_t>(v));
        else value = std::to_string(v);
    }
    c.emitted_text = fmt::format("pub const {}: {} = {};\n", c.name, c.rust_type, value);
    return c;
}

}  // namespace rsmig::skeleton
