#include "rsmig/skeleton.hpp"

#include "rsmig/support/files.hpp"
#include "rsmig/support/text.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <functional>
#include <memory>

namespace rsmig::skeleton {

using c::CType;
using c::CTypeDef;
using K = CType::Kind;
using json = nlohmann::json;

namespace {

const std::string kShared = "crate::shared";

fs::path resolve_file(const std::string& file, const fs::path& dir) {
    fs::path p(file);
    return (p.is_absolute() ? p : dir / p).lexically_normal();
}

void collect_type_names(const c::CTypePtr& t, std::set<std::string>& tags, std::set<std::string>& aliases) {
    if (!t) return;
    switch (t->kind) {
    case K::Record:
    case K::Union:
    case K::Enum: tags.insert(t->name); break;
    case K::Typedef: aliases.insert(t->name); break;
    default: break;
    }
    collect_type_names(t->inner, tags, aliases);
    for (const auto& p : t->params) collect_type_names(p.type, tags, aliases);
}

struct Unit {
    const UnitInput* in = nullptr;
    const ModuleInfo* module = nullptr;
    fs::path source;
    fs::path dir;
    std::unique_ptr<TypeEnv> env;
    /// Functions this unit emits (indices into table.functions).
    std::vector<size_t> functions;
    std::vector<size_t> globals;
    std::set<std::string> local_functions;
    std::set<std::string> local_globals;
};

bool in_unit_file(const c::SourceLoc& loc, const Unit& u) { return resolve_file(loc.file, u.dir) == u.source; }

}  // namespace

SkeletonProject synthesize(const fs::path& project_root, const std::vector<UnitInput>& inputs, const SkeletonConfig& config) {
    SkeletonProject p;
    p.config = config;
    fs::path root = fs::absolute(project_root).lexically_normal();
    std::vector<fs::path> sources;
    for (const auto& u : inputs) sources.push_back(u.source);
    p.tree = mirror_module_tree(root, sources, config.mirror);
    for (const auto& c : p.tree.collisions) p.notes.push_back("module name collision: " + c);

    std::vector<Unit> units;
    for (const auto& in : inputs) {
        fs::path src = (in.source.is_absolute() ? in.source : root / in.source).lexically_normal();
        std::string rel = src.lexically_relative(root).generic_string();
        const ModuleInfo* m = p.tree.by_c_path(rel);
        if (!m) throw SkeletonError("no module for " + rel);
        if (std::any_of(units.begin(), units.end(), [&](const Unit& u) { return u.module == m; })) {
            p.notes.push_back("duplicate unit for " + rel + " ignored (first entry wins)");
            continue;
        }
        Unit u;
        u.in = &in;
        u.module = m;
        u.source = src;
        u.dir = in.directory.empty() ? src.parent_path() : fs::absolute(in.directory).lexically_normal();
        u.env = std::make_unique<TypeEnv>(in.table.types);
        units.push_back(std::move(u));
    }
    std::sort(units.begin(), units.end(), [](const Unit& a, const Unit& b) { return a.module->c_path < b.module->c_path; });

    // ---- function ownership ------------------------------------------------
    std::map<std::string, const Unit*> external_owner;
    for (auto& u : units) {
        const auto& t = u.in->table;
        std::set<std::string> referenced;
        for (const auto& f : t.functions) {
            if (!f.defined_here) continue;
            for (const auto& c : f.calls) referenced.insert(c);
            for (const auto& v : f.value_refs) referenced.insert(v);
        }
        for (const auto& g : t.globals)
            for (const auto& r : g.initializer_refs) referenced.insert(r);
        for (size_t i = 0; i < t.functions.size(); ++i) {
            const auto& f = t.functions[i];
            if (!f.defined_here || f.source_loc.system) continue;
            bool own_file = in_unit_file(f.source_loc, u);
            if (f.storage == symbols::Storage::Internal) {
                // Header-defined static functions are copied into each unit
                // that uses them, as the C compiler does.
                if (!own_file && !referenced.contains(f.name)) continue;
                u.functions.push_back(i);
                u.local_functions.insert(f.name);
                continue;
            }
            if (auto it = external_owner.find(f.name); it != external_owner.end()) {
                if (own_file || it->second != &u)
                    p.notes.push_back(fmt::format("function `{}` defined in {} and {}; keeping the first", f.name,
                                                  it->second->module->c_path, u.module->c_path));
                continue;
            }
            external_owner[f.name] = &u;
            u.functions.push_back(i);
            u.local_functions.insert(f.name);
        }
    }

    for (auto& u : units) {
        const auto& fns = u.in->table.functions;
        std::stable_sort(u.functions.begin(), u.functions.end(),
                         [&](size_t a, size_t b) { return fns[a].source_loc.line < fns[b].source_loc.line; });
    }

    // ---- global ownership --------------------------------------------------
    std::map<std::string, const Unit*> global_owner;
    for (auto& u : units) {
        const auto& t = u.in->table;
        for (size_t i = 0; i < t.globals.size(); ++i) {
            const auto& g = t.globals[i];
            if (!g.defined_here || g.source_loc.system) continue;
            if (g.storage == symbols::Storage::External) {
                if (global_owner.contains(g.name)) {
                    p.notes.push_back(fmt::format("global `{}` defined more than once; keeping {}", g.name,
                                                  global_owner[g.name]->module->c_path));
                    continue;
                }
                global_owner[g.name] = &u;
            }
            u.globals.push_back(i);
            u.local_globals.insert(g.name);
        }
    }

    auto function_owner = [&](const Unit& u, const std::string& name) -> const Unit* {
        if (u.local_functions.contains(name)) return &u;
        auto it = external_owner.find(name);
        return it == external_owner.end() ? nullptr : it->second;
    };
    auto global_owner_of = [&](const Unit& u, const std::string& name) -> const Unit* {
        if (u.local_globals.contains(name)) return &u;
        auto it = global_owner.find(name);
        return it == global_owner.end() ? nullptr : it->second;
    };

    // ---- references ----------------------------------------------------------
    std::set<std::string> cross_module_fns, address_taken;
    std::map<std::string, GlobalUsage> global_usage;
    std::map<std::string, std::set<std::string>> imports;  // module -> use paths
    std::set<std::string> boundary_fns, boundary_globals;
    std::map<std::string, std::pair<const Unit*, const symbols::CFunctionDecl*>> boundary_fn_decl;
    std::map<std::string, std::pair<const Unit*, const symbols::CGlobalDecl*>> boundary_global_decl;
    for (auto& u : units) {
        const auto& t = u.in->table;
        address_taken.insert(t.address_taken.begin(), t.address_taken.end());
        std::vector<std::string> refs;
        for (size_t i : u.functions) {
            const auto& f = t.functions[i];
            refs.insert(refs.end(), f.calls.begin(), f.calls.end());
            refs.insert(refs.end(), f.value_refs.begin(), f.value_refs.end());
        }
        for (size_t i : u.globals) {
            const auto& g = t.globals[i];
            refs.insert(refs.end(), g.initializer_refs.begin(), g.initializer_refs.end());
        }
        for (const auto& name : refs) {
            if (const Unit* o = function_owner(u, name)) {
                if (o != &u) {
                    cross_module_fns.insert(name);
                    const auto& fd = o->in->table;
                    const auto* def = fd.find_function(name);
                    if (def && !def->variadic) imports[u.module->path()].insert(o->module->path() + "::" + rust_ident(name));
                }
                continue;
            }
            if (const Unit* o = global_owner_of(u, name)) {
                auto& use = global_usage[o->module->path() + "\n" + name];
                use.defining_module = o->module->path();
                use.modules.insert(u.module->path());
                continue;
            }
            if (const auto* fd = t.find_function(name)) {
                if (boundary_fns.insert(name).second) boundary_fn_decl[name] = {&u, fd};
                continue;
            }
            if (const auto* gd = t.find_global(name)) {
                if (boundary_globals.insert(name).second) boundary_global_decl[name] = {&u, gd};
            }
        }
    }

    // ---- types ---------------------------------------------------------------
    // A type defined in a unit's own .c file stays in that module unless some
    // other unit names it too (typically an opaque handle declared in a header).
    std::set<std::string> named_elsewhere_tags, named_elsewhere_aliases;
    std::map<const Unit*, std::set<std::string>> own_tags, own_aliases;
    for (const auto& u : units) {
        for (const auto& d : u.in->table.types) {
            if (d.source_loc.system) continue;
            bool own = !d.opaque && in_unit_file(d.source_loc, u);
            if (own) (d.is_tag() ? own_tags : own_aliases)[&u].insert(d.name);
        }
    }
    for (const auto& u : units) {
        for (const auto& d : u.in->table.types) {
            if (d.source_loc.system) continue;
            bool own = !d.opaque && in_unit_file(d.source_loc, u);
            if (!own) (d.is_tag() ? named_elsewhere_tags : named_elsewhere_aliases).insert(d.name);
        }
    }
    std::map<const Unit*, std::set<std::string>> promoted_tags, promoted_aliases;
    for (const auto& u : units) {
        auto& tags = promoted_tags[&u];
        auto& aliases = promoted_aliases[&u];
        std::vector<const CTypeDef*> work;
        for (const auto& d : u.in->table.types) {
            if (d.source_loc.system || d.opaque || !in_unit_file(d.source_loc, u)) continue;
            bool elsewhere = d.is_tag() ? named_elsewhere_tags.contains(d.name) : named_elsewhere_aliases.contains(d.name);
            if (elsewhere) work.push_back(&d);
        }
        // Everything a promoted type mentions must be visible from the shared layer too.
        while (!work.empty()) {
            const CTypeDef* d = work.back();
            work.pop_back();
            auto& set = d->is_tag() ? tags : aliases;
            if (!set.insert(d->name).second) continue;
            std::set<std::string> t_refs, a_refs;
            for (const auto& m : d->members) collect_type_names(m.type, t_refs, a_refs);
            collect_type_names(d->aliased, t_refs, a_refs);
            for (const auto& n : t_refs)
                if (own_tags[&u].contains(n))
                    if (const auto* x = u.env->lookup().tag(n)) work.push_back(x);
            for (const auto& n : a_refs)
                if (own_aliases[&u].contains(n))
                    if (const auto* x = u.env->lookup().alias(n)) work.push_back(x);
        }
    }

    std::map<std::string, size_t> shared_type_index;  // rust name -> index in p.types
    std::set<std::string> complete_anywhere;
    for (const auto& u : units)
        for (const auto& d : u.in->table.types)
            if (d.is_tag() && !d.opaque && !d.source_loc.system) complete_anywhere.insert(d.name);

    std::map<std::string, std::vector<std::string>> module_enumerators;  // module -> names
    for (auto& u : units) {
        const TypeEnv& env = *u.env;
        std::set<std::string> seen_local;
        for (const auto& d : env.defs()) {
            if (d.source_loc.system) continue;
            if (d.kind == CTypeDef::Kind::Alias && env.is_inlined_alias(d)) continue;
            // An opaque tag whose body lives in another unit is emitted there.
            if (d.opaque && complete_anywhere.contains(d.name)) continue;
            if (d.is_tag() && env.lookup().tag(d.name) != &d) continue;
            if (!d.is_tag() && env.lookup().alias(d.name) != &d) continue;
            bool own = !d.opaque && in_unit_file(d.source_loc, u);
            bool promoted = d.is_tag() ? promoted_tags[&u].contains(d.name) : promoted_aliases[&u].contains(d.name);
            bool local = own && !promoted;
            RustTypeDecl decl = lower_type(d, env, config.types);
            decl.origin_file = resolve_file(d.source_loc.file, u.dir).lexically_relative(root).generic_string();
            if (local) {
                decl.module = u.module->path();
                if (!seen_local.insert((d.is_tag() ? "tag:" : "alias:") + decl.name).second) continue;
                for (const auto& e : decl.enumerators) module_enumerators[decl.module].push_back(e);
                p.types.push_back(std::move(decl));
                continue;
            }
            decl.module = kShared;
            std::string key = (d.is_tag() ? "tag:" : "alias:") + decl.name;
            if (auto it = shared_type_index.find(key); it != shared_type_index.end()) {
                auto& prev = p.types[it->second];
                // A full definition replaces an opaque placeholder seen first.
                if (prev.c_kind == "opaque" && decl.c_kind != "opaque") {
                    prev = std::move(decl);
                } else if (prev.emitted_text != decl.emitted_text && decl.c_kind != "opaque") {
                    p.notes.push_back(fmt::format("type `{}` differs between units; keeping the first definition ({})",
                                                  d.name, prev.origin_file));
                }
                continue;
            }
            shared_type_index[key] = p.types.size();
            p.types.push_back(std::move(decl));
        }
    }

    // ---- globals ------------------------------------------------------------
    for (auto& u : units) {
        const auto& t = u.in->table;
        for (size_t i : u.globals) {
            const auto& g = t.globals[i];
            GlobalUsage use;
            if (auto it = global_usage.find(u.module->path() + "\n" + g.name); it != global_usage.end()) use = it->second;
            use.defining_module = u.module->path();
            StaticDecl s = lift_global(g, use, *u.env, config.types);
            if (s.todo_initializer)
                p.notes.push_back(fmt::format("{}: initializer of `{}` left as a TODO", u.module->c_path, g.name));
            p.statics.push_back(std::move(s));
        }
    }

    // ---- constants ----------------------------------------------------------
    std::set<std::string> shared_consts;
    std::map<std::string, std::set<std::string>> local_consts;
    for (auto& u : units) {
        for (const auto& m : u.in->constants) {
            bool own = in_unit_file(m.source_loc, u) || m.source_loc.file.empty();
            ConstantDecl c = lower_constant(m);
            std::string rel = resolve_file(m.source_loc.file, u.dir).lexically_relative(root).generic_string();
            c.origin = rel + ":" + std::to_string(m.source_loc.line);
            if (own) {
                c.module = u.module->path();
                if (!local_consts[c.module].insert(c.name).second) continue;
            } else {
                c.module = kShared;
                if (!shared_consts.insert(c.name).second) {
                    auto prev = std::find_if(p.constants.begin(), p.constants.end(),
                                             [&](const ConstantDecl& x) { return x.module == kShared && x.name == c.name; });
                    if (prev != p.constants.end() && prev->emitted_text != c.emitted_text)
                        p.notes.push_back(fmt::format("macro `{}` has different values across units; keeping {}", m.name,
                                                      prev->c_literal));
                    continue;
                }
            }
            p.constants.push_back(std::move(c));
        }
    }

    // ---- boundary declarations -----------------------------------------------
    for (const auto& name : boundary_fns) {
        auto [u, fd] = boundary_fn_decl[name];
        try {
            std::vector<std::string> ps;
            for (size_t i = 0; i < fd->params.size(); ++i) {
                std::string pn = fd->params[i].name ? rust_ident(*fd->params[i].name) : "p" + std::to_string(i);
                ps.push_back(pn + ": " + u->env->lower_param(fd->params[i].type, config.types, "boundary function " + name));
            }
            // Parameter names inside an extern block must stay distinct.
            std::set<std::string> used;
            for (size_t i = 0; i < ps.size(); ++i) {
                auto colon = ps[i].find(':');
                std::string pn = ps[i].substr(0, colon);
                if (!used.insert(pn).second) ps[i] = "p" + std::to_string(i) + ps[i].substr(colon);
            }
            if (fd->variadic) ps.push_back("...");
            ExternDecl e;
            e.name = name;
            e.kind = "function";
            std::string link = rust_ident(name).ends_with("_") && rust_ident(name) != name
                                   ? fmt::format("#[link_name = \"{}\"] ", name)
                                   : "";
            e.emitted_text = fmt::format("{}pub fn {}({}){};", link, rust_ident(name), text::join(ps, ", "),
                                         u->env->lower_return(fd->return_ctype, config.types, "boundary function " + name));
            p.externs.push_back(std::move(e));
        } catch (const SkeletonError& err) {
            p.notes.push_back(fmt::format("boundary function `{}` not declared: {}", name, err.what()));
        }
    }
    for (const auto& name : boundary_globals) {
        auto [u, gd] = boundary_global_decl[name];
        try {
            ExternDecl e;
            e.name = name;
            e.kind = "static";
            std::string ty = u->env->lower(gd->type, config.types, "boundary global " + name);
            e.emitted_text = fmt::format("pub static{} {}: {};", gd->is_mutable ? " mut" : "", rust_ident(name), ty);
            p.externs.push_back(std::move(e));
        } catch (const SkeletonError& err) {
            p.notes.push_back(fmt::format("boundary global `{}` not declared: {}", name, err.what()));
        }
    }

    // ---- value names in scope, for parameter renaming -----------------------
    std::set<std::string> shared_values;
    for (const auto& s : p.statics)
        if (s.module == kShared) shared_values.insert(s.name);
    for (const auto& c : p.constants)
        if (c.module == kShared) shared_values.insert(c.name);
    for (const auto& t : p.types)
        if (t.module == kShared)
            for (const auto& e : t.enumerators) shared_values.insert(rust_ident(e));
    for (const auto& e : p.externs)
        if (e.kind == "static") shared_values.insert(rust_ident(e.name));

    // ---- stubs --------------------------------------------------------------
    for (auto& u : units) {
        std::string mod = u.module->path();
        std::set<std::string> reserved = shared_values;
        for (const auto& s : p.statics)
            if (s.module == mod) reserved.insert(s.name);
        for (const auto& c : p.constants)
            if (c.module == mod) reserved.insert(c.name);
        for (const auto& e : module_enumerators[mod]) reserved.insert(rust_ident(e));
        StubContext ctx;
        ctx.module = u.module;
        ctx.cross_module_refs = &cross_module_fns;
        ctx.address_taken = &address_taken;
        ctx.reserved_values = &reserved;
        ctx.policy = config.types;
        ctx.placeholder = config.placeholder;
        const auto& t = u.in->table;
        for (size_t i : u.functions) {
            FunctionStub s = emit_stub(t.functions[i], *u.env, ctx);
            if (!s.schedulable) {
                ExternDecl e;
                e.name = s.c_name;
                e.kind = "function";
                e.emitted_text = s.signature_text;
                e.retained_in_c = true;
                p.externs.push_back(std::move(e));
                p.notes.push_back(fmt::format("variadic `{}` stays in C ({})", s.c_name, u.module->c_path));
            }
            for (const auto& [from, to] : s.renamed_params)
                p.notes.push_back(fmt::format("{}: parameter `{}` renamed to `{}`", s.qualified_name, from, to));
            p.stubs.push_back(std::move(s));
        }
    }

    // ---- imports, minus names the module defines itself -------------------
    for (auto& [mod, uses] : imports) {
        std::set<std::string> local;
        for (const auto& s : p.stubs)
            if (s.module == mod && s.schedulable) local.insert(s.name);
        for (const auto& s : p.statics)
            if (s.module == mod) local.insert(s.name);
        auto& out = p.imports[mod];
        for (const auto& path : uses) {
            std::string last = path.substr(path.rfind("::") + 2);
            if (!local.contains(last)) out.push_back(path);
        }
    }

    // ---- shared support types reached while lowering ---------------------------
    std::map<std::string, TypeEnv::Opaque> opaque;
    bool long_double = false, va_list = false;
    std::set<std::string> holes;
    for (const auto& u : units) {
        for (const auto& [n, o] : u.env->opaque_used())
            if (!opaque.contains(n) || (!opaque[n].layout && o.layout)) opaque[n] = o;
        long_double = long_double || u.env->long_double_used();
        va_list = va_list || u.env->va_list_used();
        holes.insert(u.env->holes().begin(), u.env->holes().end());
    }
    for (const auto& h : holes) p.notes.push_back("hole: `" + h + "` emitted as an opaque type");
    std::vector<RustTypeDecl> support;
    for (const auto& [n, o] : opaque) {
        if (shared_type_index.contains("tag:" + n) || shared_type_index.contains("alias:" + n)) continue;
        RustTypeDecl d;
        d.name = n;
        d.c_name = n;
        d.c_kind = "opaque";
        d.module = kShared;
        d.repr_c = true;
        if (o.layout) {
            d.size = o.layout->size;
            d.align = o.layout->align;
            d.emitted_text = fmt::format("#[repr(C, align({}))]\n#[derive(Clone, Copy)]\npub struct {} {{\n    _opaque: [u8; {}],\n}}\n",
                                         o.layout->align, n, o.layout->size);
        } else {
            d.emitted_text = fmt::format("#[repr(C)]\n#[derive(Clone, Copy)]\npub struct {} {{\n    _opaque: [u8; 0],\n}}\n", n);
        }
        support.push_back(std::move(d));
    }
    if (long_double) {
        RustTypeDecl d;
        d.name = d.c_name = "c_longdouble";
        d.c_kind = "opaque";
        d.module = kShared;
        d.repr_c = true;
        d.size = d.align = 16;
        d.emitted_text = "#[repr(C, align(16))]\n#[derive(Clone, Copy)]\npub struct c_longdouble {\n    pub bytes: [u8; 16],\n}\n";
        support.push_back(std::move(d));
    }
    if (va_list) {
        RustTypeDecl d;
        d.name = d.c_name = "__builtin_va_list";
        d.c_kind = "opaque";
        d.module = kShared;
        d.repr_c = true;
        d.size = 24;
        d.align = 8;
        d.emitted_text = "#[repr(C, align(8))]\n#[derive(Clone, Copy)]\npub struct __builtin_va_list {\n    _opaque: [u8; 24],\n}\n";
        support.push_back(std::move(d));
    }
    p.types.insert(p.types.begin(), std::make_move_iterator(support.begin()), std::make_move_iterator(support.end()));
    return p;
}

const FunctionStub* SkeletonProject::stub(std::string_view q) const {
    for (const auto& s : stubs)
        if (s.qualified_name == q) return &s;
    return nullptr;
}

FunctionStub* SkeletonProject::stub(std::string_view q) {
    for (auto& s : stubs)
        if (s.qualified_name == q) return &s;
    return nullptr;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

const char* kBitHelpers = R"(pub fn rsmig_bits_get(bytes: &[u8], bit: usize, width: u32) -> u64 {
    let mut v: u128 = 0;
    let first = bit / 8;
    let last = (bit + width as usize + 7) / 8;
    for i in (first..last).rev() {
        v = (v << 8) | bytes[i] as u128;
    }
    let v = v >> (bit % 8);
    let mask: u128 = if width >= 64 { u64::MAX as u128 } else { (1u128 << width) - 1 };
    (v & mask) as u64
}

pub fn rsmig_bits_get_signed(bytes: &[u8], bit: usize, width: u32) -> i64 {
    let v = rsmig_bits_get(bytes, bit, width);
    let shift = 64 - width;
    ((v << shift) as i64) >> shift
}

pub fn rsmig_bits_set(bytes: &mut [u8], bit: usize, width: u32, value: u64) {
    let first = bit / 8;
    let last = (bit + width as usize + 7) / 8;
    let mut v: u128 = 0;
    for i in (first..last).rev() {
        v = (v << 8) | bytes[i] as u128;
    }
    let mask: u128 = if width >= 64 { u64::MAX as u128 } else { (1u128 << width) - 1 };
    let shift = bit % 8;
    v = (v & !(mask << shift)) | (((value as u128) & mask) << shift);
    for i in first..last {
        bytes[i] = v as u8;
        v >>= 8;
    }
}
)";

const char* kLintAllows =
    "#![allow(non_camel_case_types, non_snake_case, non_upper_case_globals, dead_code, unused_imports, improper_ctypes, "
    "improper_ctypes_definitions)]\n";

std::string section(const std::string& body) { return body.empty() ? "" : "\n" + body; }

}  // namespace

std::map<std::string, std::string> render_files(const SkeletonProject& project) {
    std::map<std::string, std::string> files;
    const auto& tree = project.tree;
    auto kids = tree.children();

    auto mod_lines = [&](const std::vector<std::string>& parent) {
        std::string out;
        auto it = kids.find(parent);
        if (it == kids.end()) return out;
        for (const auto& k : it->second) out += "pub mod " + k + ";\n";
        return out;
    };

    files["src/lib.rs"] = fmt::format("//! Rust skeleton of the `{}` C project.\n{}\npub mod shared;\n{}", tree.crate_name,
                                      kLintAllows, mod_lines({}));

    // Directory modules without a source file of their own.
    std::set<std::vector<std::string>> leaf;
    for (const auto& m : tree.modules) leaf.insert(m.segments);
    for (const auto& [parent, _] : kids) {
        if (parent.empty() || leaf.contains(parent)) continue;
        files["src/" + text::join(parent, "/") + "/mod.rs"] = mod_lines(parent);
    }

    auto items_for = [&](const std::string& mod) {
        std::string consts, types, statics, fns;
        for (const auto& c : project.constants)
            if (c.module == mod) consts += c.emitted_text;
        for (const auto& t : project.types)
            if (t.module == mod) types += "\n" + t.emitted_text;
        for (const auto& s : project.statics)
            if (s.module == mod) statics += "\n" + s.emitted_text;
        for (const auto& s : project.stubs)
            if (s.module == mod && s.schedulable) fns += "\n" + s.item_text();
        return section(consts) + types + statics + fns;
    };

    for (const auto& m : tree.modules) {
        std::string mod = m.path();
        std::string out = fmt::format("//! Mirrors `{}`.\n", m.c_path);
        out += mod_lines(m.segments);
        out += "\nuse crate::shared::*;\n";
        if (auto it = project.imports.find(mod); it != project.imports.end())
            for (const auto& u : it->second) out += "use " + u + ";\n";
        out += items_for(mod);
        files[m.rust_file] = out;
    }

    std::string shared = "//! Definitions visible to every module: header types, shared globals, and C declarations.\n\n";
    shared += "pub use ::core::ffi::{c_char, c_void, CStr};\n";
    shared += items_for(kShared);
    bool bits = std::any_of(project.types.begin(), project.types.end(),
                            [](const RustTypeDecl& t) { return t.emitted_text.find("rsmig_bits_") != std::string::npos; });
    if (bits) shared += "\n" + std::string(kBitHelpers);
    std::string fns, statics;
    for (const auto& e : project.externs) (e.kind == "static" ? statics : fns) += "    " + e.emitted_text + "\n";
    if (!fns.empty() || !statics.empty()) shared += "\nextern \"C\" {\n" + statics + fns + "}\n";
    files["src/shared.rs"] = shared;

    std::string pkg = text::replace_all(tree.crate_name, "_", "-");
    files["Cargo.toml"] = fmt::format(
        "[package]\nname = \"{}\"\nversion = \"0.1.0\"\nedition = \"{}\"\n\n[lib]\nname = \"{}\"\npath = \"src/lib.rs\"\n\n"
        "[dependencies]\n\n[workspace]\n",
        pkg, project.config.edition, tree.crate_name);
    return files;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

template <class T>
json opt(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> get_opt(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<T>();
}

const char* vis_name(Visibility v) {
    switch (v) {
    case Visibility::Public: return "public";
    case Visibility::Crate: return "crate";
    case Visibility::Private: return "private";
    }
    return "public";
}

Visibility vis_from(const std::string& s) {
    if (s == "crate") return Visibility::Crate;
    if (s == "private") return Visibility::Private;
    return Visibility::Public;
}

}  // namespace

json to_json(const SkeletonProject& p) {
    json j;
    j["shared_layer"] = p.shared_layer;
    j["config"] = {{"crate_name", p.config.mirror.crate_name},
                   {"flatten_root", p.config.mirror.flatten_root},
                   {"hole_policy", p.config.types.holes == HolePolicy::Strict ? "strict" : "lenient"},
                   {"placeholder", p.config.placeholder},
                   {"edition", p.config.edition}};
    json mods = json::array();
    for (const auto& m : p.tree.modules)
        mods.push_back({{"c_path", m.c_path}, {"segments", m.segments}, {"rust_file", m.rust_file}});
    j["tree"] = {{"crate_name", p.tree.crate_name}, {"modules", mods}, {"collisions", p.tree.collisions}};
    json types = json::array();
    for (const auto& t : p.types)
        types.push_back({{"name", t.name},
                         {"c_name", t.c_name},
                         {"c_kind", t.c_kind},
                         {"module", t.module},
                         {"emitted_text", t.emitted_text},
                         {"repr_c", t.repr_c},
                         {"layout_sensitive", t.layout_sensitive},
                         {"size", opt(t.size)},
                         {"align", opt(t.align)},
                         {"origin_file", t.origin_file},
                         {"enumerators", t.enumerators}});
    j["types"] = types;
    json stubs = json::array();
    for (const auto& s : p.stubs) {
        json params = json::array();
        for (const auto& pa : s.params) params.push_back({{"name", pa.name}, {"rust_type", pa.rust_type}, {"c_type", pa.c_type}});
        stubs.push_back({{"qualified_name", s.qualified_name},
                         {"module", s.module},
                         {"name", s.name},
                         {"c_name", s.c_name},
                         {"signature_text", s.signature_text},
                         {"params", params},
                         {"return_type", s.return_type},
                         {"visibility", vis_name(s.visibility)},
                         {"abi_sensitive", s.abi_sensitive},
                         {"schedulable", s.schedulable},
                         {"internal_linkage", s.internal_linkage},
                         {"rust_file", s.rust_file},
                         {"c_file", s.c_file},
                         {"c_line", s.c_line},
                         {"c_source", s.c_source},
                         {"c_calls", s.c_calls},
                         {"c_value_refs", s.c_value_refs},
                         {"c_type_refs", s.c_type_refs},
                         {"renamed_params", s.renamed_params},
                         {"placeholder", s.placeholder}});
    }
    j["stubs"] = stubs;
    json statics = json::array();
    for (const auto& s : p.statics)
        statics.push_back({{"name", s.name},
                           {"c_name", s.c_name},
                           {"module", s.module},
                           {"rust_type", s.rust_type},
                           {"emitted_text", s.emitted_text},
                           {"is_mutable", s.is_mutable},
                           {"accessor", s.accessor},
                           {"todo_initializer", s.todo_initializer},
                           {"internal_linkage", s.internal_linkage}});
    j["statics"] = statics;
    json consts = json::array();
    for (const auto& c : p.constants)
        consts.push_back({{"name", c.name},
                          {"module", c.module},
                          {"rust_type", c.rust_type},
                          {"emitted_text", c.emitted_text},
                          {"c_literal", c.c_literal},
                          {"origin", c.origin}});
    j["constants"] = consts;
    json externs = json::array();
    for (const auto& e : p.externs)
        externs.push_back(
            {{"name", e.name}, {"kind", e.kind}, {"emitted_text", e.emitted_text}, {"retained_in_c", e.retained_in_c}});
    j["externs"] = externs;
    j["imports"] = p.imports;
    j["notes"] = p.notes;
    return j;
}

SkeletonProject project_from_json(const json& j) {
    SkeletonProject p;
    p.shared_layer = j.value("shared_layer", kShared);
    const auto& cfg = j.at("config");
    p.config.mirror.crate_name = cfg.at("crate_name");
    p.config.mirror.flatten_root = cfg.at("flatten_root");
    p.config.types.holes = cfg.at("hole_policy") == "strict" ? HolePolicy::Strict : HolePolicy::Lenient;
    p.config.placeholder = cfg.at("placeholder");
    p.config.edition = cfg.at("edition");
    const auto& tree = j.at("tree");
    p.tree.crate_name = tree.at("crate_name");
    p.tree.collisions = tree.at("collisions").get<std::vector<std::string>>();
    for (const auto& m : tree.at("modules"))
        p.tree.modules.push_back({m.at("c_path"), m.at("segments").get<std::vector<std::string>>(), m.at("rust_file")});
    for (const auto& t : j.at("types")) {
        RustTypeDecl d;
        d.name = t.at("name");
        d.c_name = t.at("c_name");
        d.c_kind = t.at("c_kind");
        d.module = t.at("module");
        d.emitted_text = t.at("emitted_text");
        d.repr_c = t.at("repr_c");
        d.layout_sensitive = t.at("layout_sensitive");
        d.size = get_opt<std::uint64_t>(t, "size");
        d.align = get_opt<std::uint64_t>(t, "align");
        d.origin_file = t.at("origin_file");
        d.enumerators = t.at("enumerators").get<std::vector<std::string>>();
        p.types.push_back(std::move(d));
    }
    for (const auto& s : j.at("stubs")) {
        FunctionStub f;
        f.qualified_name = s.at("qualified_name");
        f.module = s.at("module");
        f.name = s.at("name");
        f.c_name = s.at("c_name");
        f.signature_text = s.at("signature_text");
        for (const auto& pa : s.at("params")) f.params.push_back({pa.at("name"), pa.at("rust_type"), pa.at("c_type")});
        f.return_type = s.at("return_type");
        f.visibility = vis_from(s.at("visibility"));
        f.abi_sensitive = s.at("abi_sensitive");
        f.schedulable = s.at("schedulable");
        f.internal_linkage = s.at("internal_linkage");
        f.rust_file = s.at("rust_file");
        f.c_file = s.at("c_file");
        f.c_line = s.at("c_line");
        f.c_source = s.at("c_source");
        f.c_calls = s.at("c_calls").get<std::vector<std::string>>();
        f.c_value_refs = s.at("c_value_refs").get<std::vector<std::string>>();
        f.c_type_refs = s.at("c_type_refs").get<std::vector<std::string>>();
        f.renamed_params = s.at("renamed_params").get<std::map<std::string, std::string>>();
        f.placeholder = s.at("placeholder");
        p.stubs.push_back(std::move(f));
    }
    for (const auto& s : j.at("statics")) {
        StaticDecl d;
        d.name = s.at("name");
        d.c_name = s.at("c_name");
        d.module = s.at("module");
        d.rust_type = s.at("rust_type");
        d.emitted_text = s.at("emitted_text");
        d.is_mutable = s.at("is_mutable");
        d.accessor = s.at("accessor");
        d.todo_initializer = s.at("todo_initializer");
        d.internal_linkage = s.at("internal_linkage");
        p.statics.push_back(std::move(d));
    }
    for (const auto& c : j.at("constants"))
        p.constants.push_back({c.at("name"), c.at("module"), c.at("rust_type"), c.at("emitted_text"), c.at("c_literal"),
                               c.at("origin")});
    for (const auto& e : j.at("externs"))
        p.externs.push_back({e.at("name"), e.at("kind"), e.at("emitted_text"), e.at("retained_in_c")});
    p.imports = j.at("imports").get<std::map<std::string, std::vector<std::string>>>();
    p.notes = j.at("notes").get<std::vector<std::string>>();
    return p;
}

json mapping_json(const SkeletonProject& p) {
    auto symbols_of = [&](const std::string& mod) {
        json out = json::array();
        for (const auto& s : p.stubs)
            if (s.module == mod && s.schedulable)
                out.push_back({{"c_name", s.c_name}, {"kind", "function"}, {"rust_path", s.qualified_name}});
        for (const auto& s : p.statics)
            if (s.module == mod) out.push_back({{"c_name", s.c_name}, {"kind", "static"}, {"rust_path", mod + "::" + s.name}});
        for (const auto& c : p.constants)
            if (c.module == mod) out.push_back({{"c_name", c.name}, {"kind", "constant"},
                                                {"rust_path", mod + "::" + c.name}});
        for (const auto& t : p.types)
            if (t.module == mod) out.push_back({{"c_name", t.c_name}, {"kind", t.c_kind}, {"rust_path", mod + "::" + t.name}});
        return out;
    };
    json files = json::array();
    for (const auto& m : p.tree.modules)
        files.push_back({{"c_path", m.c_path}, {"module", m.path()}, {"rust_file", m.rust_file}, {"symbols", symbols_of(m.path())}});
    json shared = symbols_of(kShared);
    for (const auto& s : p.stubs)
        if (!s.schedulable) shared.push_back({{"c_name", s.c_name}, {"kind", "extern function"}, {"rust_path", kShared + "::" + s.name}});
    return {{"crate", p.tree.crate_name},
            {"files", files},
            {"shared", {{"module", kShared}, {"rust_file", "src/shared.rs"}, {"symbols", shared}}}};
}

// ---------------------------------------------------------------------------
// Assembly

SkeletonBuildError::SkeletonBuildError(std::string message, std::vector<cargo::Diagnostic> diagnostics)
    : SkeletonError(std::move(message)), diagnostics_(std::move(diagnostics)) {}

cargo::BuildResult assemble_and_verify(const SkeletonProject& project, const fs::path& workspace, const cargo::Toolchain& toolchain) {
    fs::create_directories(workspace);
    // Stale module files from an earlier layout would confuse the build.
    std::error_code ec;
    fs::remove_all(workspace / "src", ec);
    for (const auto& [rel, content] : render_files(project)) write_file(workspace / rel, content);
    write_file(workspace / "mapping.json", mapping_json(project).dump(2) + "\n");
    write_file(workspace / ".rsmig" / "project.json", to_json(project).dump(2) + "\n");
    if (!fs::exists(workspace / ".gitignore")) write_file(workspace / ".gitignore", "/target\n");

    auto result = cargo::build(workspace, toolchain);
    if (!result.success) {
        auto errors = result.errors();
        std::string msg = fmt::format("skeleton does not build ({} error(s))", errors.size());
        for (size_t i = 0; i < errors.size() && i < 5; ++i) msg += "\n" + errors[i].rendered;
        if (errors.empty() && !result.raw_output.empty()) msg += "\n" + result.raw_output;
        throw SkeletonBuildError(msg, result.diagnostics);
    }
    spdlog::debug("skeleton at {} builds ({} warning(s))", workspace.string(), result.warnings().size());
    return result;
}

SkeletonProject load_project(const fs::path& workspace) {
    fs::path f = workspace / ".rsmig" / "project.json";
    if (!fs::exists(f)) throw SkeletonError("not a skeleton workspace (missing .rsmig/project.json): " + workspace.string());
    try {
        return project_from_json(json::parse(read_file(f)));
    } catch (const json::exception& e) {
        throw SkeletonError(fmt::format("corrupt {}: {}", f.string(), e.what()));
    }
}

SkeletonProject skeleton_from_trace(const fs::path& project_root, const fs::path& trace, const BuildSkeletonOptions& options) {
    auto commands = build::load_compile_commands(trace, options.trace);
    fs::path root = fs::absolute(project_root).lexically_normal();
    std::vector<UnitInput> units;
    std::set<fs::path> seen;
    std::vector<std::string> notes;
    auto loader = [](const std::string& f) -> std::optional<std::string> {
        std::error_code ec;
        if (!fs::is_regular_file(f, ec)) return std::nullopt;
        return read_file(f);
    };
    for (const auto& raw : commands) {
        auto cmd = build::normalize(raw);
        fs::path src = cmd.absolute_source();
        if (!seen.insert(src).second) {
            notes.push_back("duplicate trace entry for " + src.lexically_relative(root).generic_string() +
                            " ignored (first configuration wins)");
            continue;
        }
        auto ctx = build::derive_unit_context(cmd);
        auto pp = build::preprocess_unit(ctx, options.preprocessor);
        UnitInput in;
        in.source = src;
        in.table = symbols::extract_symbols(pp, [&](const std::string& f) { return loader((cmd.directory / f).string()); });
        in.directory = cmd.directory;
        if (in.table.partial)
            for (const auto& is : in.table.issues)
                notes.push_back(fmt::format("{}: skipped {} ({})", is.loc.str(), is.construct, is.message));
        // Macro constants from the unit itself and the project headers it includes.
        std::set<fs::path> files{src};
        for (const auto& lo : pp.line_map) {
            if (!lo || lo->system || lo->file.empty() || lo->file.front() == '<') continue;
            fs::path f = resolve_file(lo->file, cmd.directory);
            if (f.lexically_relative(root).generic_string().starts_with("..")) continue;
            files.insert(f);
        }
        for (const auto& f : files) {
            std::error_code ec;
            if (!fs::is_regular_file(f, ec)) continue;
            auto scan = symbols::collect_macro_constants(pp, read_file(f), f.string());
            in.constants.insert(in.constants.end(), scan.constants.begin(), scan.constants.end());
        }
        units.push_back(std::move(in));
    }
    auto p = synthesize(root, units, options.config);
    p.notes.insert(p.notes.begin(), notes.begin(), notes.end());
    return p;
}

}  // namespace rsmig::skeleton
