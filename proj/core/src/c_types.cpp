#include "rsmig/c_types.hpp"

#include <algorithm>

namespace rsmig::c {

CTypePtr CType::make_void(bool is_const) {
    auto t = std::make_shared<CType>();
    t->kind = Kind::Void;
    t->name = "void";
    t->is_const = is_const;
    return t;
}

CTypePtr CType::builtin(std::string name, bool is_const) {
    auto t = std::make_shared<CType>();
    t->kind = Kind::Builtin;
    t->name = std::move(name);
    t->is_const = is_const;
    return t;
}

CTypePtr CType::named(Kind kind, std::string name, bool is_const) {
    auto t = std::make_shared<CType>();
    t->kind = kind;
    t->name = std::move(name);
    t->is_const = is_const;
    return t;
}

CTypePtr CType::pointer_to(CTypePtr pointee, bool is_const) {
    auto t = std::make_shared<CType>();
    t->kind = Kind::Pointer;
    t->inner = std::move(pointee);
    t->is_const = is_const;
    return t;
}

CTypePtr CType::array_of(CTypePtr element, std::optional<std::uint64_t> size) {
    auto t = std::make_shared<CType>();
    t->kind = Kind::Array;
    t->inner = std::move(element);
    t->array_size = size;
    return t;
}

CTypePtr CType::function(CTypePtr ret, std::vector<CParam> params, bool variadic, bool unspecified) {
    auto t = std::make_shared<CType>();
    t->kind = Kind::Function;
    t->inner = std::move(ret);
    t->params = std::move(params);
    t->variadic = variadic;
    t->unspecified_params = unspecified;
    return t;
}

CTypePtr with_const(const CTypePtr& t, bool is_const) {
    if (!t || t->is_const == is_const) return t;
    auto copy = std::make_shared<CType>(*t);
    copy->is_const = is_const;
    return copy;
}

namespace {

std::string render(const CType& t, std::string decl) {
    using K = CType::Kind;
    switch (t.kind) {
    case K::Pointer: {
        std::string p = "*";
        if (t.is_const) p += decl.empty() ? "const" : "const ";
        p += decl;
        if (t.inner && (t.inner->kind == K::Array || t.inner->kind == K::Function)) p = "(" + p + ")";
        return render(*t.inner, p);
    }
    case K::Array:
        return render(*t.inner, decl + "[" + (t.array_size ? std::to_string(*t.array_size) : "") + "]");
    case K::Function: {
        std::string ps;
        if (t.params.empty() && !t.variadic) ps = t.unspecified_params ? "" : "void";
        for (size_t i = 0; i < t.params.size(); ++i) {
            if (i) ps += ", ";
            ps += to_c_string(*t.params[i].type, t.params[i].name);
        }
        if (t.variadic) ps += t.params.empty() ? "..." : ", ...";
        return render(*t.inner, decl + "(" + ps + ")");
    }
    default: {
        std::string base = t.is_const ? "const " : "";
        if (t.kind == K::Record) base += "struct ";
        else if (t.kind == K::Union) base += "union ";
        else if (t.kind == K::Enum) base += "enum ";
        base += t.name;
        if (decl.empty()) return base;
        if (decl[0] == '*' || decl[0] == '(') return base + " " + decl;
        return base + " " + decl;
    }
    }
}

}  // namespace

std::string to_c_string(const CType& t, std::string_view declarator) { return render(t, std::string(declarator)); }

const char* kind_name(CTypeDef::Kind k) {
    switch (k) {
    case CTypeDef::Kind::Record: return "record";
    case CTypeDef::Kind::Union: return "union";
    case CTypeDef::Kind::Enumeration: return "enumeration";
    case CTypeDef::Kind::Alias: return "alias";
    }
    return "?";
}

bool is_identity_alias(const CTypeDef& def) {
    if (def.kind != CTypeDef::Kind::Alias || !def.aliased) return false;
    auto k = def.aliased->kind;
    return (k == CType::Kind::Record || k == CType::Kind::Union || k == CType::Kind::Enum) && def.aliased->name == def.name;
}

TypeLookup::TypeLookup(const std::vector<CTypeDef>& types) {
    for (const auto& t : types) add(t);
}

void TypeLookup::add(const CTypeDef& def) {
    auto& m = def.is_tag() ? tags_ : aliases_;
    auto it = m.find(def.name);
    // A full definition wins over an opaque forward declaration.
    if (it == m.end() || (it->second->opaque && !def.opaque)) m[def.name] = &def;
}

const CTypeDef* TypeLookup::tag(std::string_view name) const {
    auto it = tags_.find(name);
    return it == tags_.end() ? nullptr : it->second;
}

const CTypeDef* TypeLookup::alias(std::string_view name) const {
    auto it = aliases_.find(name);
    return it == aliases_.end() ? nullptr : it->second;
}

CTypePtr TypeLookup::resolve(const CTypePtr& t) const {
    CTypePtr cur = t;
    bool is_const = t && t->is_const;
    for (int guard = 0; cur && cur->kind == CType::Kind::Typedef && guard < 64; ++guard) {
        const CTypeDef* a = alias(cur->name);
        if (!a || !a->aliased) return with_const(cur, is_const);
        cur = a->aliased;
        is_const = is_const || cur->is_const;
    }
    return with_const(cur, is_const);
}

namespace {

std::uint64_t align_up(std::uint64_t v, std::uint64_t a) { return a <= 1 ? v : (v + a - 1) / a * a; }

std::optional<Layout> builtin_layout(const std::string& n) {
    static const std::map<std::string, Layout, std::less<>> kTable = {
        {"char", {1, 1}},           {"signed char", {1, 1}},     {"unsigned char", {1, 1}},
        {"_Bool", {1, 1}},          {"short", {2, 2}},           {"unsigned short", {2, 2}},
        {"int", {4, 4}},            {"unsigned int", {4, 4}},    {"long", {8, 8}},
        {"unsigned long", {8, 8}},  {"long long", {8, 8}},       {"unsigned long long", {8, 8}},
        {"float", {4, 4}},          {"double", {8, 8}},          {"long double", {16, 16}},
        {"__int128", {16, 16}},     {"unsigned __int128", {16, 16}}, {"_Float16", {2, 2}},
        {"_Float32", {4, 4}},       {"_Float64", {8, 8}},        {"_Float32x", {8, 8}},
        {"_Float64x", {16, 16}},    {"_Float128", {16, 16}},     {"__float128", {16, 16}},
        {"__builtin_va_list", {24, 8}},
    };
    auto it = kTable.find(n);
    if (it == kTable.end()) return std::nullopt;
    return it->second;
}

std::optional<Layout> enum_layout(const CTypeDef& def) {
    std::int64_t lo = 0, hi = 0;
    for (const auto& e : def.enumerators) {
        lo = std::min(lo, e.value);
        hi = std::max(hi, e.value);
    }
    bool fits32 = lo >= INT32_MIN && (lo < 0 ? hi <= INT32_MAX : static_cast<std::uint64_t>(hi) <= UINT32_MAX);
    Layout l = fits32 ? Layout{4, 4} : Layout{8, 8};
    if (def.packed) {
        if ((lo >= 0 && hi <= 255) || (lo >= -128 && hi <= 127)) l = {1, 1};
        else if ((lo >= 0 && hi <= 65535) || (lo >= -32768 && hi <= 32767)) l = {2, 2};
    }
    return l;
}

}  // namespace

std::optional<Layout> layout_of(const CType& t, const TypeLookup& types) {
    using K = CType::Kind;
    switch (t.kind) {
    case K::Void:
    case K::Function: return std::nullopt;
    case K::Builtin: return builtin_layout(t.name);
    case K::Pointer: return Layout{8, 8};
    case K::Array: {
        auto el = layout_of(*t.inner, types);
        if (!el) return std::nullopt;
        return Layout{el->size * t.array_size.value_or(0), el->align};
    }
    case K::Typedef: {
        const CTypeDef* a = types.alias(t.name);
        if (!a || !a->aliased) return std::nullopt;
        return layout_of(*a->aliased, types);
    }
    case K::Enum: {
        const CTypeDef* d = types.tag(t.name);
        if (!d) return Layout{4, 4};
        return enum_layout(*d);
    }
    case K::Record:
    case K::Union: {
        const CTypeDef* d = types.tag(t.name);
        if (!d || d->opaque) return std::nullopt;
        auto r = record_layout(*d, types);
        if (!r) return std::nullopt;
        return r->layout;
    }
    }
    return std::nullopt;
}

std::optional<RecordLayout> record_layout(const CTypeDef& def, const TypeLookup& types) {
    if (def.opaque) return std::nullopt;
    if (def.kind == CTypeDef::Kind::Enumeration) {
        auto l = enum_layout(def);
        return RecordLayout{*l, {}};
    }
    if (def.kind == CTypeDef::Kind::Alias) {
        if (!def.aliased) return std::nullopt;
        auto l = layout_of(*def.aliased, types);
        if (!l) return std::nullopt;
        return RecordLayout{*l, {}};
    }

    const bool is_union = def.kind == CTypeDef::Kind::Union;
    RecordLayout out;
    std::uint64_t bit_off = 0;   // records: running offset in bits
    std::uint64_t max_size = 0;  // unions
    std::uint64_t align = 1;
    for (const auto& m : def.members) {
        auto ml = layout_of(*m.type, types);
        if (!ml) {
            // Flexible array member of a complete element type.
            if (m.type->kind == CType::Kind::Array && !m.type->array_size) {
                auto el = layout_of(*m.type->inner, types);
                if (!el) return std::nullopt;
                ml = Layout{0, el->align};
            } else {
                return std::nullopt;
            }
        }
        std::uint64_t malign = def.packed ? 1 : ml->align;
        if (m.bit_width) {
            std::uint64_t width = static_cast<std::uint64_t>(*m.bit_width);
            std::uint64_t unit_bits = ml->size * 8;
            if (is_union) {
                max_size = std::max(max_size, (width + 7) / 8);
                if (!m.name.empty()) align = std::max(align, malign);
                out.fields.push_back({m.name, 0, width, m.type});
                continue;
            }
            if (width == 0) {
                bit_off = align_up(bit_off, ml->align * 8);
                continue;
            }
            if (!def.packed && unit_bits && (bit_off / unit_bits) != ((bit_off + width - 1) / unit_bits))
                bit_off = align_up(bit_off, ml->align * 8);
            out.fields.push_back({m.name, bit_off, width, m.type});
            bit_off += width;
            if (!m.name.empty()) align = std::max(align, malign);
            continue;
        }
        align = std::max(align, malign);
        if (is_union) {
            max_size = std::max(max_size, ml->size);
            out.fields.push_back({m.name, 0, 0, m.type});
            continue;
        }
        std::uint64_t byte_off = align_up((bit_off + 7) / 8, malign);
        out.fields.push_back({m.name, byte_off * 8, 0, m.type});
        bit_off = (byte_off + ml->size) * 8;
    }
    if (def.aligned) align = std::max(align, *def.aligned);
    std::uint64_t raw = is_union ? max_size : (bit_off + 7) / 8;
    out.layout = Layout{align_up(raw, align), align};
    return out;
}

}  // namespace rsmig::c
